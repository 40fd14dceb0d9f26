//! Model weights to field elements and back: flattening, clipping, 8-bit
//! scale quantization, the unsigned encoding into F_p, centered decoding of
//! aggregates, and the clients' deferred averaging.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{FieldElement, P};

/// Largest quantized magnitude, `2^(b-1) - 1` for `b = 8`.
pub const QMAX: i64 = 127;

/// A real-valued tensor, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Parameter("tensor data does not match its shape"));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// An ordered list of tensors; the order is the flattening order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    pub tensors: Vec<Tensor>,
}

impl ModelWeights {
    pub fn new(tensors: Vec<Tensor>) -> Self {
        ModelWeights { tensors }
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.tensors.iter().map(|t| t.shape.clone()).collect()
    }
}

/// Layer-major, row-major within a tensor.
pub fn flatten(w: &ModelWeights) -> Vec<f32> {
    let mut out = Vec::with_capacity(w.param_count());
    for t in &w.tensors {
        out.extend_from_slice(&t.data);
    }
    out
}

/// Inverse of [`flatten`]. Values beyond the total size (chunk padding) are
/// dropped.
pub fn unflatten(v: &[f32], shapes: &[Vec<usize>]) -> Result<ModelWeights> {
    let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if v.len() < total {
        return Err(Error::Parameter("flat vector is shorter than the model"));
    }
    let mut at = 0;
    let mut tensors = Vec::with_capacity(shapes.len());
    for s in shapes {
        let n: usize = s.iter().product();
        tensors.push(Tensor {
            shape: s.clone(),
            data: v[at..at + n].to_vec(),
        });
        at += n;
    }
    Ok(ModelWeights { tensors })
}

/// Clipping bound and the derived scale `127 / alpha`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantSpec {
    alpha: f64,
}

impl QuantSpec {
    pub const BITS: u32 = 8;

    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Parameter("clip bound must be positive and finite"));
        }
        Ok(QuantSpec { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scale_factor(&self) -> f64 {
        QMAX as f64 / self.alpha
    }

    /// Worst-case dequantization error after clipping, half a step.
    pub fn half_step(&self) -> f64 {
        self.alpha / (2 * QMAX) as f64
    }
}

impl Default for QuantSpec {
    fn default() -> Self {
        QuantSpec { alpha: 5.0 }
    }
}

/// Quantized weights: values in `[-127, 127]`, zero-padded to whole chunks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedVector {
    values: Vec<i8>,
    len: usize,
}

impl QuantizedVector {
    pub fn from_values(values: Vec<i8>) -> Result<Self> {
        if values.iter().any(|&v| v == i8::MIN) {
            return Err(Error::Parameter("quantized values must lie in [-127, 127]"));
        }
        let len = values.len();
        Ok(QuantizedVector { values, len })
    }

    /// Number of meaningful (unpadded) values.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// All values including padding.
    pub fn values(&self) -> &[i8] {
        &self.values
    }

    /// Pads with zeros to a multiple of `chunk`.
    pub fn padded(mut self, chunk: usize) -> Self {
        if chunk > 0 {
            let target = self.values.len().div_ceil(chunk) * chunk;
            self.values.resize(target, 0);
        }
        self
    }

    pub fn chunks(&self, chunk: usize) -> impl Iterator<Item = &[i8]> {
        self.values.chunks(chunk)
    }
}

fn round_half_away(x: f64) -> f64 {
    if x >= 0.0 {
        libm::floor(x + 0.5)
    } else {
        -libm::floor(-x + 0.5)
    }
}

/// `q_i = round(clip(v_i, -alpha, alpha) * 127 / alpha)`, ties away from zero.
pub fn quantize(v: &[f32], spec: &QuantSpec) -> QuantizedVector {
    let a = spec.alpha;
    let values = v
        .iter()
        .map(|&x| {
            let x = x as f64;
            // NaN clips to zero.
            let c = if x.is_nan() { 0.0 } else { x.clamp(-a, a) };
            round_half_away(c * QMAX as f64 / a) as i8
        })
        .collect::<Vec<_>>();
    let len = values.len();
    QuantizedVector { values, len }
}

/// Two's-complement style embedding into F_p: `x < 0` maps to `p + x`.
pub fn encode_unsigned(q: &QuantizedVector) -> Vec<FieldElement> {
    q.values
        .iter()
        .map(|&x| FieldElement::from_i64(x as i64))
        .collect()
}

/// Centered lift: values above `p / 2` (strictly) become negative.
pub fn decode_centered(x: &[FieldElement]) -> Vec<i64> {
    x.iter()
        .map(|e| {
            let v = e.value() as i64;
            if v > (P / 2) as i64 {
                v - P as i64
            } else {
                v
            }
        })
        .collect()
}

/// `(sums_i / n) / scale`, the client-side completion of the weighted mean.
pub fn average_dequantize(sums: &[i64], n: u64, spec: &QuantSpec) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Protocol("aggregate covers no batches"));
    }
    let s = spec.scale_factor();
    Ok(sums.iter().map(|&x| (x as f64 / n as f64) / s).collect())
}

/// Dequantizes without averaging (a single client's own values).
pub fn dequantize(q: &QuantizedVector, spec: &QuantSpec) -> Vec<f64> {
    let s = spec.scale_factor();
    q.values[..q.len].iter().map(|&x| x as f64 / s).collect()
}
