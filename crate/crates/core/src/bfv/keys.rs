use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;

use super::params::BfvParams;
use crate::error::{Error, Result};
use crate::ring::{Domain, RingElement};
use crate::rng::{centered_binomial, derive_rng, ternary, uniform_mod, Seed};

/// Ternary secret key, kept in both the coefficient and NTT domains.
#[derive(Clone, Debug, PartialEq)]
pub struct SecretKey {
    pub(crate) params: BfvParams,
    pub(crate) coeffs: Vec<i8>,
    pub(crate) ntt: RingElement,
}

/// `(-(a s + e), a)` in the NTT domain.
#[derive(Clone, Debug, PartialEq)]
pub struct PublicKey {
    pub(crate) params: BfvParams,
    pub(crate) p0: RingElement,
    pub(crate) p1: RingElement,
}

/// Switches `s'` to `s`: digit `i` is `(-a_i s + e_i + g_i s', a_i)` where
/// `g_i` is the CRT idempotent of the `i`-th chain prime.
#[derive(Clone, Debug, PartialEq)]
pub struct KeySwitchKey {
    pub(crate) digits: Vec<[RingElement; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelinKey(pub(crate) KeySwitchKey);

/// Requested rotation keys: row rotation steps and optionally the row swap.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RotationSteps {
    pub steps: BTreeSet<i64>,
    pub row_swap: bool,
}

impl RotationSteps {
    pub fn new(steps: &[i64]) -> Self {
        RotationSteps {
            steps: steps.iter().copied().filter(|&s| s != 0).collect(),
            row_swap: false,
        }
    }

    pub fn with_row_swap(mut self) -> Self {
        self.row_swap = true;
        self
    }

    pub fn extend(&mut self, other: &RotationSteps) {
        self.steps.extend(other.steps.iter().copied());
        self.row_swap |= other.row_swap;
    }
}

/// Rotation keys for exactly the declared steps.
#[derive(Clone, Debug, PartialEq)]
pub struct GaloisKeys {
    pub(crate) steps: BTreeMap<i64, KeySwitchKey>,
    pub(crate) row_swap: Option<KeySwitchKey>,
}

impl GaloisKeys {
    pub fn declared(&self) -> RotationSteps {
        RotationSteps {
            steps: self.steps.keys().copied().collect(),
            row_swap: self.row_swap.is_some(),
        }
    }

    pub(crate) fn get(&self, step: i64) -> Result<&KeySwitchKey> {
        self.steps.get(&step).ok_or(Error::MissingRotationKey(step))
    }

    pub(crate) fn swap_key(&self) -> Result<&KeySwitchKey> {
        self.row_swap
            .as_ref()
            .ok_or(Error::MissingRotationKey(i64::MIN))
    }
}

/// The public share handed to an evaluator: relinearization and rotation keys.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationKeys {
    pub relin: RelinKey,
    pub galois: GaloisKeys,
}

#[derive(Clone, Debug)]
pub struct BfvKeySet {
    pub secret: SecretKey,
    pub public: PublicKey,
    pub eval: EvaluationKeys,
}

impl BfvKeySet {
    pub fn params(&self) -> &BfvParams {
        &self.public.params
    }
}

impl SecretKey {
    pub fn params(&self) -> &BfvParams {
        &self.params
    }

    fn generate<R: RngCore>(params: &BfvParams, rng: &mut R) -> Self {
        let n = params.degree();
        let coeffs: Vec<i8> = (0..n).map(|_| ternary(rng) as i8).collect();
        let wide: Vec<i64> = coeffs.iter().map(|&c| c as i64).collect();
        let ntt = RingElement::from_signed(params.context(), &wide)
            .expect("context matches")
            .into_domain(Domain::Ntt);
        SecretKey {
            params: params.clone(),
            coeffs,
            ntt,
        }
    }

    pub(crate) fn from_coeffs(params: &BfvParams, coeffs: Vec<i8>) -> Result<Self> {
        if coeffs.len() != params.degree() || coeffs.iter().any(|c| !(-1..=1).contains(c)) {
            return Err(Error::Format("secret key is not ternary of degree N"));
        }
        let wide: Vec<i64> = coeffs.iter().map(|&c| c as i64).collect();
        let ntt = RingElement::from_signed(params.context(), &wide)?.into_domain(Domain::Ntt);
        Ok(SecretKey {
            params: params.clone(),
            coeffs,
            ntt,
        })
    }

    /// `s(X^g)` in the NTT domain.
    fn automorphism(&self, g: usize) -> RingElement {
        self.ntt.automorphism(g)
    }
}

pub(crate) fn sample_uniform_ntt<R: RngCore>(params: &BfvParams, rng: &mut R) -> RingElement {
    let ctx = params.context();
    let n = params.degree();
    let mut data = vec![0u64; n * ctx.len()];
    for (i, m) in ctx.moduli().iter().enumerate() {
        for x in &mut data[i * n..(i + 1) * n] {
            *x = uniform_mod(rng, m.value());
        }
    }
    RingElement::from_residues(ctx, data, Domain::Ntt).expect("reduced")
}

pub(crate) fn sample_error_ntt<R: RngCore>(params: &BfvParams, rng: &mut R) -> RingElement {
    let e: Vec<i64> = (0..params.degree())
        .map(|_| centered_binomial(rng))
        .collect();
    RingElement::from_signed(params.context(), &e)
        .expect("context matches")
        .into_domain(Domain::Ntt)
}

pub(crate) fn sample_ternary_ntt<R: RngCore>(params: &BfvParams, rng: &mut R) -> RingElement {
    let u: Vec<i64> = (0..params.degree()).map(|_| ternary(rng)).collect();
    RingElement::from_signed(params.context(), &u)
        .expect("context matches")
        .into_domain(Domain::Ntt)
}

impl PublicKey {
    pub fn params(&self) -> &BfvParams {
        &self.params
    }

    fn generate<R: RngCore>(sk: &SecretKey, rng: &mut R) -> Self {
        let params = &sk.params;
        let a = sample_uniform_ntt(params, rng);
        let e = sample_error_ntt(params, rng);
        let mut p0 = a.clone();
        p0.mul_assign_pointwise(&sk.ntt).expect("same context");
        p0.add_assign(&e).expect("same context");
        p0.negate();
        PublicKey {
            params: params.clone(),
            p0,
            p1: a,
        }
    }
}

impl KeySwitchKey {
    /// Key switching `target` (NTT domain, full chain) to `sk`.
    fn generate<R: RngCore>(sk: &SecretKey, target: &RingElement, rng: &mut R) -> Self {
        let params = &sk.params;
        let n = params.degree();
        let digits = (0..params.context().len())
            .map(|i| {
                let a = sample_uniform_ntt(params, rng);
                let e = sample_error_ntt(params, rng);
                let mut b = a.clone();
                b.mul_assign_pointwise(&sk.ntt).expect("same context");
                b.sub_assign(&e).expect("same context");
                b.negate();
                let m = params.context().moduli()[i];
                for (x, t) in b.residue_mut(i).iter_mut().zip(&target.residue(i)[..n]) {
                    *x = m.add(*x, *t);
                }
                [b, a]
            })
            .collect();
        KeySwitchKey { digits }
    }

    pub fn digit_count(&self) -> usize {
        self.digits.len()
    }
}

/// Generates a complete key set. All randomness derives from `seed`; each
/// key family draws from its own stream.
pub fn keygen(params: &BfvParams, rotations: &RotationSteps, seed: Seed) -> Result<BfvKeySet> {
    let secret = SecretKey::generate(params, &mut derive_rng(seed, 1));
    let public = PublicKey::generate(&secret, &mut derive_rng(seed, 2));
    let mut s2 = secret.ntt.clone();
    s2.mul_assign_pointwise(&secret.ntt)?;
    let relin = RelinKey(KeySwitchKey::generate(
        &secret,
        &s2,
        &mut derive_rng(seed, 3),
    ));
    let galois = galois_keys(&secret, rotations, &mut derive_rng(seed, 4))?;
    Ok(BfvKeySet {
        secret,
        public,
        eval: EvaluationKeys { relin, galois },
    })
}

pub(crate) fn galois_keys<R: RngCore>(
    sk: &SecretKey,
    rotations: &RotationSteps,
    rng: &mut R,
) -> Result<GaloisKeys> {
    let enc = sk.params.encoder();
    let half = enc.row_size() as i64;
    let mut steps = BTreeMap::new();
    for &s in &rotations.steps {
        if s == 0 || s.rem_euclid(half) == 0 {
            return Err(Error::Parameter(
                "rotation step is a multiple of the row size",
            ));
        }
        let g = enc.galois_element(s);
        steps.insert(s, KeySwitchKey::generate(sk, &sk.automorphism(g), rng));
    }
    let row_swap = rotations
        .row_swap
        .then(|| KeySwitchKey::generate(sk, &sk.automorphism(enc.row_swap_element()), rng));
    Ok(GaloisKeys { steps, row_swap })
}
