// Heuristic noise tracking. All quantities are log2 of the largest
// coefficient of the invariant noise `v`, where `p/Q * (c0 + c1 s) = m + v`
// and decryption is correct while `|v| < 1/2`. The constants over-estimate
// measured noise by a few bits.

use super::params::BfvParams;

const LOG2_P: f64 = 16.000022;
// Tail factor: the largest of N roughly Gaussian coefficients.
const TAIL: f64 = 2.6;

fn log2(x: f64) -> f64 {
    libm::log2(x)
}

pub(crate) fn combine(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if hi - lo > 60.0 {
        hi
    } else {
        hi + log2(1.0 + libm::exp2(lo - hi))
    }
}

pub(crate) fn fresh(params: &BfvParams, level: usize) -> f64 {
    let n = params.degree() as f64;
    // e0 + e1 s + u e with ternary s, u and centered-binomial errors.
    let var = 2.0 * n * (2.0 / 3.0) * 10.5 + 10.5;
    LOG2_P + log2(libm::sqrt(var)) + TAIL - params.level(level).log2_q
}

/// Rounding noise added when dropping to `level`.
pub(crate) fn mod_drop(params: &BfvParams, level: usize) -> f64 {
    let n = params.degree() as f64;
    let var = (1.0 + n * 2.0 / 3.0) / 12.0;
    LOG2_P + log2(libm::sqrt(var)) + TAIL - params.level(level).log2_q
}

/// Additive noise of one key switch at `level`.
pub(crate) fn key_switch(params: &BfvParams, level: usize) -> f64 {
    let lv = params.level(level);
    let n = params.degree() as f64;
    let sum_sq: f64 = lv
        .ctx
        .moduli()
        .iter()
        .map(|m| {
            let q = m.value() as f64;
            q * q / 12.0
        })
        .sum();
    LOG2_P + log2(libm::sqrt(n * 10.5 * sum_sq)) + TAIL - lv.log2_q
}

/// Product of two ciphertexts with noise `a`, `b`, before relinearization.
pub(crate) fn mul(params: &BfvParams, level: usize, a: f64, b: f64) -> f64 {
    let n = params.degree() as f64;
    // v1 * (p * A2) + v2 * (p * A1), where A has coefficients ~ sqrt(N/18).
    let growth = LOG2_P + log2(n * libm::sqrt(1.0 / 18.0) * 2.0) + 1.0;
    combine(combine(a, b) + growth, mod_drop(params, level) + 1.0)
}

/// Multiplication by a plaintext whose centered coefficients have Euclidean
/// norm `2^log2_norm`.
pub(crate) fn plain_mul(a: f64, log2_norm: f64) -> f64 {
    a + log2_norm + 0.5
}
