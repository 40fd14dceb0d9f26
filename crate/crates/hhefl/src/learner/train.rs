use hhefl_core::rng::{derive_rng, Seed};
use rand::seq::SliceRandom;

use super::data::{Dataset, Shard};
use super::mlp::MlpModel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 64,
            learning_rate: 0.001,
            patience: 2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Invalid(
                "batch size, patience and learning rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Adam with the usual defaults.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub epochs_run: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

/// Mini-batch Adam on the shard's fit split with early stopping on its
/// validation split; the best weights seen are restored.
pub fn train_local(
    model: &MlpModel,
    ds: &Dataset,
    shard: &Shard,
    cfg: &TrainConfig,
    seed: Seed,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut m = model.clone();
    let mut opt = Adam::new(m.param_count(), cfg.learning_rate);
    let mut rng = derive_rng(seed, 0x7a);
    let mut order = shard.fit.clone();
    let mut best: Option<(f64, MlpModel)> = None;
    let mut stale = 0;
    let mut out = TrainOutcome {
        model: model.clone(),
        epochs_run: 0,
        train_loss: Vec::new(),
        val_loss: Vec::new(),
    };
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = m.loss_and_grad(ds, batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            total += loss * batch.len() as f64;
            opt.update(m.params_mut(), &grad);
        }
        if m.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        out.epochs_run = epoch + 1;
        out.train_loss.push(total / order.len().max(1) as f64);
        if shard.validation.is_empty() {
            continue;
        }
        let val = m.loss(ds, &shard.validation);
        if !val.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        out.val_loss.push(val);
        if best.as_ref().map_or(true, |(b, _)| val < *b) {
            best = Some((val, m.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    out.model = match best {
        Some((_, b)) => b,
        None => m,
    };
    Ok(out)
}

/// `floor(training samples / batch size)`, the FedAvg weight of a client.
pub fn batch_count(training_samples: usize, batch_size: usize) -> u64 {
    (training_samples / batch_size) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::data::{partition_iid, synthetic};
    use crate::learner::mlp::{init_model, ModelPreset};
    use hhefl_core::rng::seed_from_u64;

    fn setup() -> (Dataset, Shard, MlpModel) {
        let ds = synthetic(600, 12, 4, seed_from_u64(1));
        let shard = partition_iid(ds.len(), 1, seed_from_u64(2)).unwrap().shards.remove(0);
        let m = init_model(ModelPreset::Hidden16, 12, 4, seed_from_u64(3));
        (ds, shard, m)
    }

    #[test]
    fn loss_decreases() {
        let (ds, shard, m) = setup();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 16,
            learning_rate: 0.01,
            patience: 5,
        };
        let out = train_local(&m, &ds, &shard, &cfg, seed_from_u64(4)).unwrap();
        assert_eq!(out.epochs_run, 5);
        assert!(out.train_loss.windows(2).all(|w| w[1] < w[0]), "{:?}", out.train_loss);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let (ds, shard, m) = setup();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert_eq!(train_local(&m, &ds, &shard, &cfg, seed_from_u64(5)).unwrap().model, m);
    }

    #[test]
    fn reproducible_under_seed() {
        let (ds, shard, m) = setup();
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let a = train_local(&m, &ds, &shard, &cfg, seed_from_u64(6)).unwrap();
        let b = train_local(&m, &ds, &shard, &cfg, seed_from_u64(6)).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn divergence_is_reported() {
        let (ds, shard, mut m) = setup();
        m.params_mut()[0] = f64::NAN;
        let err = train_local(&m, &ds, &shard, &TrainConfig::default(), seed_from_u64(7));
        assert!(matches!(err, Err(Error::Diverged { epoch: 0 })));
    }

    #[test]
    fn early_stopping_restores_best() {
        let (ds, shard, m) = setup();
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 8,
            learning_rate: 0.05,
            patience: 2,
        };
        let out = train_local(&m, &ds, &shard, &cfg, seed_from_u64(8)).unwrap();
        let best = out.val_loss.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(out.model.loss(&ds, &shard.validation), best);
        if out.epochs_run < 60 {
            let tail = &out.val_loss[out.val_loss.len() - 2..];
            assert!(tail.iter().all(|&v| v >= best));
        }
    }

    #[test]
    fn paper_batch_count() {
        assert_eq!(batch_count(4032, 64), 63);
    }
}
