use hhefl_core::codec::{ModelWeights, Tensor};
use hhefl_core::rng::{derive_rng, Seed};
use rand::Rng;

use super::data::Dataset;
use crate::error::{format_err, Result};

/// Layer shapes relative to the input width and class count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelPreset {
    /// Softmax regression, `d -> C` (784 -> 10 has 7850 parameters).
    PaperSize,
    /// One rectifier layer of 16 units.
    Hidden16,
}

impl ModelPreset {
    pub fn dims(self, features: usize, classes: usize) -> Vec<usize> {
        match self {
            ModelPreset::PaperSize => vec![features, classes],
            ModelPreset::Hidden16 => vec![features, 16, classes],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelPreset::PaperSize => "paper-size",
            ModelPreset::Hidden16 => "hidden16",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "paper-size" => Some(ModelPreset::PaperSize),
            "hidden16" => Some(ModelPreset::Hidden16),
            _ => None,
        }
    }
}

/// Fully connected network with rectifier hidden layers and a softmax
/// output. Parameters are one flat vector: per layer, the `out x in`
/// weight matrix (row-major) followed by the bias.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    dims: Vec<usize>,
    params: Vec<f64>,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

impl MlpModel {
    pub fn new(dims: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(format_err("a model needs at least two non-empty layers"));
        }
        if params.len() != param_count(&dims) {
            return Err(format_err("parameter count does not match the layer shapes"));
        }
        Ok(MlpModel { dims, params })
    }

    /// Glorot-uniform weights and zero biases.
    pub fn init(dims: Vec<usize>, seed: Seed) -> Result<Self> {
        let mut rng = derive_rng(seed, 0x1a1);
        let mut params = Vec::with_capacity(param_count(&dims));
        for w in dims.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| rng.random_range(-limit..limit)));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Self::new(dims, params)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.dims
            .windows(2)
            .flat_map(|w| [vec![w[1], w[0]], vec![w[1]]])
            .collect()
    }

    pub fn weights(&self) -> ModelWeights {
        let mut at = 0;
        let tensors = self
            .shapes()
            .into_iter()
            .map(|shape| {
                let n: usize = shape.iter().product();
                let data = self.params[at..at + n].iter().map(|&x| x as f32).collect();
                at += n;
                Tensor::new(shape, data).expect("shape matches")
            })
            .collect();
        ModelWeights::new(tensors)
    }

    pub fn from_weights(dims: Vec<usize>, w: &ModelWeights) -> Result<Self> {
        let params = w
            .tensors
            .iter()
            .flat_map(|t| t.data.iter().map(|&x| x as f64))
            .collect();
        let m = Self::new(dims, params)?;
        if m.shapes() != w.shapes() {
            return Err(format_err("weight tensors do not match the layer shapes"));
        }
        Ok(m)
    }

    fn forward(&self, x: &[f32]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut acts: Vec<Vec<f64>> = vec![x.iter().map(|&v| v as f64).collect()];
        let mut off = 0;
        let layers = self.dims.len() - 1;
        for (l, w) in self.dims.windows(2).enumerate() {
            let (fan_in, out) = (w[0], w[1]);
            let weights = &self.params[off..off + out * fan_in];
            let bias = &self.params[off + out * fan_in..off + out * (fan_in + 1)];
            off += out * (fan_in + 1);
            let a = &acts[l];
            let mut z: Vec<f64> = weights
                .chunks_exact(fan_in)
                .zip(bias)
                .map(|(row, b)| b + row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>())
                .collect();
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        let logits = acts.pop().expect("output layer");
        (acts, softmax(&logits))
    }

    /// Class probabilities for one sample.
    pub fn predict(&self, x: &[f32]) -> Vec<f64> {
        self.forward(x).1
    }

    /// Mean cross-entropy over `idx`.
    pub fn loss(&self, ds: &Dataset, idx: &[usize]) -> f64 {
        let total: f64 = idx
            .iter()
            .map(|&i| cross_entropy(&self.predict(ds.sample(i)), ds.label(i)))
            .sum();
        total / idx.len().max(1) as f64
    }

    /// Mean cross-entropy over `idx` and its gradient. Samples are
    /// accumulated in order, so the result is bit-reproducible.
    pub fn loss_and_grad(&self, ds: &Dataset, idx: &[usize]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let layers = self.dims.len() - 1;
        let offsets: Vec<usize> = self
            .dims
            .windows(2)
            .scan(0, |acc, w| {
                let o = *acc;
                *acc += w[1] * (w[0] + 1);
                Some(o)
            })
            .collect();
        for &i in idx {
            let (acts, probs) = self.forward(ds.sample(i));
            let y = ds.label(i);
            loss += cross_entropy(&probs, y);
            let mut delta = probs;
            delta[y] -= 1.0;
            for l in (0..layers).rev() {
                let (fan_in, out) = (self.dims[l], self.dims[l + 1]);
                let off = offsets[l];
                let a = &acts[l];
                for (j, &d) in delta.iter().enumerate() {
                    let g = &mut grad[off + j * fan_in..off + (j + 1) * fan_in];
                    g.iter_mut().zip(a).for_each(|(g, x)| *g += d * x);
                    grad[off + out * fan_in + j] += d;
                }
                if l > 0 {
                    let w = &self.params[off..off + out * fan_in];
                    delta = (0..fan_in)
                        .map(|k| {
                            if a[k] > 0.0 {
                                (0..out).map(|j| w[j * fan_in + k] * delta[j]).sum()
                            } else {
                                0.0
                            }
                        })
                        .collect();
                }
            }
        }
        let scale = 1.0 / idx.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        (loss * scale, grad)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn cross_entropy(probs: &[f64], y: usize) -> f64 {
    -probs[y].max(1e-300).ln()
}

pub fn init_model(preset: ModelPreset, features: usize, classes: usize, seed: Seed) -> MlpModel {
    MlpModel::init(preset.dims(features, classes), seed).expect("preset shapes are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::data::synthetic;
    use hhefl_core::rng::seed_from_u64;

    #[test]
    fn presets_and_init() {
        let m = init_model(ModelPreset::PaperSize, 784, 10, seed_from_u64(1));
        assert_eq!(m.param_count(), 7850);
        assert_eq!(init_model(ModelPreset::Hidden16, 784, 10, seed_from_u64(1)).param_count(), 12730);
        assert!(m.params().iter().all(|w| w.abs() < 5.0));
        assert_eq!(m, init_model(ModelPreset::PaperSize, 784, 10, seed_from_u64(1)));
        assert!(m.params()[7840..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn weights_roundtrip() {
        let m = init_model(ModelPreset::Hidden16, 5, 3, seed_from_u64(2));
        let w = m.weights();
        assert_eq!(w.shapes(), vec![vec![16, 5], vec![16], vec![3, 16], vec![3]]);
        let back = MlpModel::from_weights(m.dims().to_vec(), &w).unwrap();
        for (a, b) in back.params().iter().zip(m.params()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let ds = synthetic(40, 6, 4, seed_from_u64(3));
        let m = init_model(ModelPreset::Hidden16, 6, 4, seed_from_u64(4));
        for i in 0..ds.len() {
            let s: f64 = m.predict(ds.sample(i)).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_hidden() {
        let ds = synthetic(10, 7, 3, seed_from_u64(5));
        let mut m = init_model(ModelPreset::Hidden16, 7, 3, seed_from_u64(6));
        // Nonzero biases keep every rectifier away from its kink.
        for (k, p) in m.params_mut().iter_mut().enumerate() {
            *p += 0.01 * ((k % 7) as f64 - 3.0);
        }
        let idx: Vec<usize> = (0..10).collect();
        let worst = crate::learner::max_gradient_error(&m, &ds, &idx);
        assert!(worst < 1e-4, "relative error {worst}");
    }
}
