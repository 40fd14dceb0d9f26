use hhefl_core::rng::{derive_rng, Seed};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{format_err, Error, Result};

/// Row-major feature matrix in `[0, 1]` with integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: usize,
    classes: usize,
    images: Vec<f32>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(features: usize, classes: usize, images: Vec<f32>, labels: Vec<u8>) -> Result<Self> {
        if features == 0 || images.len() != features * labels.len() {
            return Err(format_err("feature matrix does not match the label count"));
        }
        if labels.iter().any(|&l| l as usize >= classes) {
            return Err(format_err("label out of range"));
        }
        Ok(Dataset {
            features,
            classes,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        &self.images[i * self.features..(i + 1) * self.features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Keeps the first `n` samples.
    pub fn truncated(mut self, n: usize) -> Self {
        let n = n.min(self.len());
        self.labels.truncate(n);
        self.images.truncate(n * self.features);
        self
    }
}

const SPREAD: f64 = 0.35;

/// Two Gaussian clusters per class with uniform centers in the unit cube,
/// clipped to `[0, 1]`. Labels cycle through the classes.
pub fn synthetic(samples: usize, features: usize, classes: usize, seed: Seed) -> Dataset {
    let mut rng = derive_rng(seed, 0x5e);
    let centers: Vec<f64> = (0..classes * 2 * features)
        .map(|_| rng.random::<f64>())
        .collect();
    let noise = Normal::new(0.0, SPREAD).expect("positive spread");
    let mut images = Vec::with_capacity(samples * features);
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let c = i % classes;
        let k = rng.random_range(0..2usize);
        let mu = &centers[(2 * c + k) * features..(2 * c + k + 1) * features];
        images.extend(
            mu.iter()
                .map(|&m| (m + noise.sample(&mut rng)).clamp(0.0, 1.0) as f32),
        );
        labels.push(c as u8);
    }
    Dataset {
        features,
        classes,
        images,
        labels,
    }
}

/// One client's sample indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shard {
    /// Samples used for gradient steps.
    pub fit: Vec<usize>,
    /// Held out from the training split for early stopping.
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Shard {
    pub fn len(&self) -> usize {
        self.fit.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Size of the training split (fit plus validation).
    pub fn training_samples(&self) -> usize {
        self.fit.len() + self.validation.len()
    }
}

/// `(fit, validation, test)` sizes for a shard: 80/20 train/test, then 20%
/// of the training split held out for validation.
pub fn split_sizes(len: usize) -> (usize, usize, usize) {
    let train = len * 4 / 5;
    let val = train / 5;
    (train - val, val, len - train)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionPlan {
    pub shards: Vec<Shard>,
}

/// Uniform random disjoint shards whose sizes differ by at most one.
pub fn partition_iid(n: usize, n_clients: usize, seed: Seed) -> Result<PartitionPlan> {
    if n_clients == 0 || n_clients > n {
        return Err(Error::Invalid(format!(
            "cannot split {n} samples across {n_clients} clients"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut derive_rng(seed, 0x9a));
    let base = n / n_clients;
    let extra = n % n_clients;
    let mut start = 0;
    let shards = (0..n_clients)
        .map(|c| {
            let len = base + usize::from(c < extra);
            let part = &idx[start..start + len];
            start += len;
            let (fit, val, _) = split_sizes(len);
            Shard {
                fit: part[..fit].to_vec(),
                validation: part[fit..fit + val].to_vec(),
                test: part[fit + val..].to_vec(),
            }
        })
        .collect();
    Ok(PartitionPlan { shards })
}

#[cfg(test)]
mod tests {
    use super::*;
    use hhefl_core::rng::seed_from_u64;

    #[test]
    fn mnist_sized_partition() {
        let plan = partition_iid(60000, 12, seed_from_u64(1)).unwrap();
        assert!(plan.shards.iter().all(|s| s.len() == 5000));
        let s = &plan.shards[0];
        assert_eq!((s.fit.len(), s.validation.len(), s.test.len()), (3200, 800, 1000));
    }

    #[test]
    fn shards_cover_dataset_disjointly() {
        let plan = partition_iid(1003, 7, seed_from_u64(2)).unwrap();
        let mut all: Vec<usize> = plan
            .shards
            .iter()
            .flat_map(|s| s.fit.iter().chain(&s.validation).chain(&s.test).copied())
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..1003).collect::<Vec<_>>());
        let sizes: Vec<usize> = plan.shards.iter().map(Shard::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(plan, partition_iid(1003, 7, seed_from_u64(2)).unwrap());
        assert!(partition_iid(3, 4, seed_from_u64(2)).is_err());
    }

    #[test]
    fn shards_are_iid() {
        let ds = synthetic(12000, 4, 10, seed_from_u64(3));
        let plan = partition_iid(ds.len(), 12, seed_from_u64(4)).unwrap();
        for s in &plan.shards {
            let mut counts = [0usize; 10];
            for &i in s.fit.iter().chain(&s.validation).chain(&s.test) {
                counts[ds.label(i)] += 1;
            }
            for c in counts {
                let f = c as f64 / s.len() as f64;
                assert!((f - 0.1).abs() < 0.03, "class frequency {f}");
            }
        }
    }

    #[test]
    fn synthetic_is_seeded_and_bounded() {
        let a = synthetic(50, 8, 3, seed_from_u64(5));
        assert_eq!(a, synthetic(50, 8, 3, seed_from_u64(5)));
        assert!(a.images.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert_eq!(a.truncated(10).len(), 10);
    }
}
