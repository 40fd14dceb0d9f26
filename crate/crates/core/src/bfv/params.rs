use alloc::sync::Arc;
use alloc::vec::Vec;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use crate::arith::{ntt_primes, Modulus};
use crate::batch::BatchEncoder;
use crate::error::{Error, Result};
use crate::field::P;
use crate::ring::RingContext;

/// 128-bit-security parameter sets: ring degree and the largest admissible
/// total coefficient-modulus size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SecurityPreset {
    N4096,
    N8192,
    N16384,
}

impl SecurityPreset {
    pub const ALL: [SecurityPreset; 3] = [Self::N4096, Self::N8192, Self::N16384];

    pub fn degree(self) -> usize {
        match self {
            Self::N4096 => 4096,
            Self::N8192 => 8192,
            Self::N16384 => 16384,
        }
    }

    pub fn max_modulus_bits(self) -> u32 {
        match self {
            Self::N4096 => 109,
            Self::N8192 => 218,
            Self::N16384 => 438,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::N4096 => "bfv-4096",
            Self::N8192 => "bfv-8192",
            Self::N16384 => "bfv-16384",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s || s.parse::<usize>().ok() == Some(p.degree()))
    }

    // Bit sizes of the chain primes; they sum to the preset bound.
    fn prime_bits(self) -> &'static [u32] {
        match self {
            Self::N4096 => &[55, 54],
            Self::N8192 => &[55, 55, 54, 54],
            Self::N16384 => &[55, 55, 55, 55, 55, 55, 54, 54],
        }
    }
}

/// Precomputation for one modulus level: the chain prefix `q_0 .. q_{l-1}`.
#[derive(Debug)]
pub(crate) struct Level {
    pub ctx: Arc<RingContext>,
    pub log2_q: f64,
    // floor(Q / p) mod q_i
    pub delta: Vec<u64>,
    pub q_mod_p: u64,
    // (Q / q_i)^-1 mod q_i and its Shoup companion
    pub q_hat_inv: Vec<u64>,
    pub q_hat_inv_shoup: Vec<u64>,
    // floor(p * 2^128 / q_i) split as (hi, lo), for fixed-point decryption
    pub p_over_q: Vec<(u64, u64)>,
    pub q_big: BigUint,
    pub q_hat: Vec<BigUint>,
    pub mul: MulTables,
    // q_last^-1 mod q_i for i < l - 1, with Shoup companions
    pub drop_inv: Vec<(u64, u64)>,
}

/// Tables for ciphertext multiplication by base extension into an auxiliary
/// basis `P = r_0 .. r_{k-1}`, scaling by `p/Q`, and conversion back to `Q`.
#[derive(Debug)]
pub(crate) struct MulTables {
    // (Q / q_i) mod r_j, indexed [i][j]
    pub q_hat_mod_r: Vec<Vec<u64>>,
    pub q_mod_r: Vec<u64>,
    pub inv_q: Vec<f64>,
    // p * P * ((QP / q_i)^-1 mod q_i) / q_i = int_i + frac_i
    pub scale_int: Vec<Vec<u64>>,
    pub scale_frac: Vec<(u64, u64)>,
    // p * (P / r_j) * ((QP / r_j)^-1 mod r_j) mod r_j
    pub theta: Vec<(u64, u64)>,
    // P -> Q conversion
    pub p_hat_inv: Vec<(u64, u64)>,
    pub p_hat_mod_q: Vec<Vec<u64>>,
    pub p_mod_q: Vec<u64>,
    pub inv_r: Vec<f64>,
}

#[derive(Debug)]
pub(crate) struct ParamsInner {
    pub preset: Option<SecurityPreset>,
    pub n: usize,
    pub encoder: BatchEncoder,
    pub levels: Vec<Level>,
    pub ext: Arc<RingContext>,
}

/// BFV parameters: ring degree, plaintext modulus 65537 and an RNS
/// coefficient modulus. Cheap to clone.
#[derive(Clone, Debug)]
pub struct BfvParams {
    pub(crate) inner: Arc<ParamsInner>,
}

impl PartialEq for BfvParams {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.n == other.inner.n
                && self.inner.levels[0].ctx.moduli() == other.inner.levels[0].ctx.moduli())
    }
}

fn big_mod(x: &BigUint, q: u64) -> u64 {
    (x % q).to_u64().unwrap()
}

pub(crate) fn log2_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    let shift = bits.saturating_sub(60);
    let top = (x >> shift).to_u64().unwrap() as f64;
    libm::log2(top) + shift as f64
}

fn product(primes: &[u64]) -> BigUint {
    primes.iter().fold(BigUint::one(), |acc, &q| acc * q)
}

// (a / b)^-1 mod m where b | a.
fn inv_mod(x: &BigUint, m: &Modulus) -> u64 {
    m.inv(big_mod(x, m.value())).expect("moduli are coprime")
}

// floor(a * 2^128 / q) for a < q, as (hi, lo).
fn frac128(a: &BigUint, q: &BigUint) -> (u64, u64) {
    let f: BigUint = (a << 128u32) / q;
    let lo = (&f & BigUint::from(u64::MAX)).to_u64().unwrap();
    let hi = (&f >> 64u32).to_u64().unwrap();
    (hi, lo)
}

impl MulTables {
    fn new(q: &[Modulus], r: &[Modulus]) -> Self {
        let qv: Vec<u64> = q.iter().map(|m| m.value()).collect();
        let rv: Vec<u64> = r.iter().map(|m| m.value()).collect();
        let q_big = product(&qv);
        let p_big = product(&rv);
        let qp = &q_big * &p_big;
        let q_hat_mod_r = qv
            .iter()
            .map(|&qi| {
                let h = &q_big / qi;
                rv.iter().map(|&rj| big_mod(&h, rj)).collect()
            })
            .collect();
        let q_mod_r = rv.iter().map(|&rj| big_mod(&q_big, rj)).collect();
        let mut scale_int = Vec::with_capacity(qv.len());
        let mut scale_frac = Vec::with_capacity(qv.len());
        for (i, &qi) in qv.iter().enumerate() {
            let w = inv_mod(&(&qp / qi), &q[i]);
            let num = BigUint::from(P) * &p_big * w;
            let int = &num / qi;
            let rem = &num % qi;
            scale_int.push(rv.iter().map(|&rj| big_mod(&int, rj)).collect());
            scale_frac.push(frac128(&rem, &big(qi)));
        }
        let mut theta = Vec::with_capacity(rv.len());
        let mut p_hat_inv = Vec::with_capacity(rv.len());
        let mut p_hat_mod_q = Vec::with_capacity(rv.len());
        for (j, &rj) in rv.iter().enumerate() {
            let m = &r[j];
            let w = inv_mod(&(&qp / rj), m);
            let t = m.mul(m.mul(P % rj, big_mod(&(&p_big / rj), rj)), w);
            theta.push((t, m.shoup(t)));
            let hi = inv_mod(&(&p_big / rj), m);
            p_hat_inv.push((hi, m.shoup(hi)));
            let h = &p_big / rj;
            p_hat_mod_q.push(qv.iter().map(|&qi| big_mod(&h, qi)).collect());
        }
        MulTables {
            q_hat_mod_r,
            q_mod_r,
            inv_q: qv.iter().map(|&x| 1.0 / x as f64).collect(),
            scale_int,
            scale_frac,
            theta,
            p_hat_inv,
            p_hat_mod_q,
            p_mod_q: qv.iter().map(|&qi| big_mod(&p_big, qi)).collect(),
            inv_r: rv.iter().map(|&x| 1.0 / x as f64).collect(),
        }
    }
}

fn big(x: u64) -> BigUint {
    BigUint::from(x)
}

impl Level {
    fn new(n: usize, primes: &[u64], ext: &RingContext) -> Result<Self> {
        let ctx = RingContext::new(n, primes)?;
        let q_big = product(primes);
        let delta_big = &q_big / P;
        let q_hat: Vec<BigUint> = primes.iter().map(|&q| &q_big / q).collect();
        let mut q_hat_inv = Vec::new();
        let mut q_hat_inv_shoup = Vec::new();
        let mut p_over_q = Vec::new();
        for (i, m) in ctx.moduli().iter().enumerate() {
            let v = inv_mod(&q_hat[i], m);
            q_hat_inv.push(v);
            q_hat_inv_shoup.push(m.shoup(v));
            p_over_q.push(frac128(&big(P), &big(m.value())));
        }
        let drop_inv = match primes.split_last() {
            Some((&last, rest)) if !rest.is_empty() => ctx.moduli()[..rest.len()]
                .iter()
                .map(|m| {
                    let v = m.inv(last % m.value()).expect("distinct primes");
                    (v, m.shoup(v))
                })
                .collect(),
            _ => Vec::new(),
        };
        let mul = MulTables::new(ctx.moduli(), ext.moduli());
        Ok(Level {
            log2_q: log2_big(&q_big),
            delta: primes.iter().map(|&q| big_mod(&delta_big, q)).collect(),
            q_mod_p: big_mod(&q_big, P),
            q_hat_inv,
            q_hat_inv_shoup,
            p_over_q,
            q_big,
            q_hat,
            mul,
            drop_inv,
            ctx,
        })
    }
}

// Auxiliary primes for multiplication: enough that P exceeds p * N * Q * 2^8.
fn extension_primes(n: usize, q_primes: &[u64]) -> Option<Vec<u64>> {
    let q = product(q_primes);
    let need = q * P * n as u64 * 256u32;
    let mut out = Vec::new();
    let mut acc = BigUint::one();
    while acc <= need {
        let next = ntt_primes(61, n, out.len() + 1, q_primes)?;
        let p = *next.last().unwrap();
        acc *= p;
        out.push(p);
    }
    Some(out)
}

impl BfvParams {
    /// Parameters of a 128-bit-security preset.
    pub fn preset(preset: SecurityPreset) -> Result<Self> {
        let n = preset.degree();
        let mut primes: Vec<u64> = Vec::new();
        let bits = preset.prime_bits();
        let mut i = 0;
        while i < bits.len() {
            let b = bits[i];
            let count = bits[i..].iter().take_while(|&&x| x == b).count();
            let found = ntt_primes(b, n, count, &primes)
                .ok_or(Error::Parameter("not enough NTT primes for preset"))?;
            primes.extend(found);
            i += count;
        }
        Self::build(Some(preset), n, &primes)
    }

    /// Parameters with an arbitrary chain of prime bit sizes. Not tied to a
    /// security level; meant for small-scale testing and experiments.
    pub fn custom(n: usize, prime_bits: &[u32]) -> Result<Self> {
        if !n.is_power_of_two() || n < 16 {
            return Err(Error::Parameter("ring degree must be a power of two >= 16"));
        }
        if prime_bits.is_empty()
            || prime_bits
                .iter()
                .any(|&b| !(20..=Modulus::MAX_BITS).contains(&b))
        {
            return Err(Error::Parameter("prime sizes must lie in 20..=62 bits"));
        }
        let mut primes = Vec::new();
        for &b in prime_bits {
            let p = ntt_primes(b, n, 1, &primes)
                .ok_or(Error::Parameter("no NTT prime of requested size"))?;
            primes.extend(p);
        }
        Self::build(None, n, &primes)
    }

    fn build(preset: Option<SecurityPreset>, n: usize, primes: &[u64]) -> Result<Self> {
        if (P - 1) % (2 * n as u64) != 0 {
            return Err(Error::Parameter("plaintext modulus is not 1 mod 2N"));
        }
        if primes.len() > 15 {
            return Err(Error::Parameter("modulus chain longer than 15 primes"));
        }
        if let Some(pr) = preset {
            let q = product(primes);
            if q.bits() > pr.max_modulus_bits() as u64 {
                return Err(Error::Parameter(
                    "coefficient modulus exceeds the security bound",
                ));
            }
        }
        let ext_primes =
            extension_primes(n, primes).ok_or(Error::Parameter("no auxiliary primes"))?;
        let ext = RingContext::new(n, &ext_primes)?;
        let levels = (0..primes.len())
            .map(|k| Level::new(n, &primes[..primes.len() - k], &ext))
            .collect::<Result<Vec<_>>>()?;
        Ok(BfvParams {
            inner: Arc::new(ParamsInner {
                preset,
                n,
                encoder: BatchEncoder::new(n)?,
                levels,
                ext,
            }),
        })
    }

    pub fn degree(&self) -> usize {
        self.inner.n
    }

    pub fn plain_modulus(&self) -> u64 {
        P
    }

    pub fn security_preset(&self) -> Option<SecurityPreset> {
        self.inner.preset
    }

    pub fn slot_count(&self) -> usize {
        self.inner.n
    }

    pub fn encoder(&self) -> &BatchEncoder {
        &self.inner.encoder
    }

    /// The full coefficient modulus chain.
    pub fn moduli(&self) -> Vec<u64> {
        self.inner.levels[0]
            .ctx
            .moduli()
            .iter()
            .map(|m| m.value())
            .collect()
    }

    pub fn modulus_bits(&self) -> u32 {
        self.inner.levels[0].q_big.bits() as u32
    }

    /// Number of modulus levels; level 0 uses the whole chain and each
    /// further level drops the last prime.
    pub fn level_count(&self) -> usize {
        self.inner.levels.len()
    }

    pub fn context(&self) -> &Arc<RingContext> {
        &self.inner.levels[0].ctx
    }

    pub(crate) fn level(&self, l: usize) -> &Level {
        &self.inner.levels[l]
    }

    pub(crate) fn level_of(&self, ctx: &Arc<RingContext>) -> Option<usize> {
        let top = self.inner.levels.len();
        let l = top.checked_sub(ctx.len())?;
        (self.inner.levels[l].ctx.moduli() == ctx.moduli()).then_some(l)
    }

    pub(crate) fn ext(&self) -> &Arc<RingContext> {
        &self.inner.ext
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_respect_bounds() {
        for pr in SecurityPreset::ALL {
            let p = BfvParams::preset(pr).unwrap();
            assert_eq!(p.degree(), pr.degree());
            assert!(p.modulus_bits() <= pr.max_modulus_bits());
            assert!(p.modulus_bits() >= pr.max_modulus_bits() - 2);
            for q in p.moduli() {
                assert_eq!(q % (2 * pr.degree() as u64), 1);
            }
            let lv = p.level(0);
            let ext_bits: u64 = p.ext().moduli().iter().map(|m| m.bits() as u64).sum();
            assert!(ext_bits > lv.q_big.bits() + 17 + 14);
            assert_eq!(SecurityPreset::from_name(pr.name()), Some(pr));
        }
    }

    #[test]
    fn levels_are_prefixes() {
        let p = BfvParams::custom(64, &[40, 40, 40]).unwrap();
        assert_eq!(p.level_count(), 3);
        for l in 0..3 {
            let ctx = p.level(l).ctx.clone();
            assert_eq!(ctx.len(), 3 - l);
            assert_eq!(p.level_of(&ctx), Some(l));
        }
        assert!(BfvParams::custom(64, &[10]).is_err());
        assert!(BfvParams::custom(65536, &[40]).is_err());
    }
}
