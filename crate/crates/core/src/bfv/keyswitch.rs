use alloc::vec;
use alloc::vec::Vec;

use super::keys::{GaloisKeys, KeySwitchKey};
use super::params::BfvParams;
use super::{noise, Ciphertext};
use crate::error::{Error, Result};
use crate::ring::{galois_permutation, Domain, RingElement};

/// Digit decomposition of a coefficient-domain polynomial at `level`: digit
/// `i` is the centered residue mod `q_i`, lifted to every prime of the level
/// and transformed to the NTT domain. `d_ntt`, if given, is `d` in the NTT
/// domain and supplies the residues that need no lift.
pub(crate) fn decompose(
    params: &BfvParams,
    level: usize,
    d: &RingElement,
    d_ntt: Option<&RingElement>,
) -> Vec<Vec<u64>> {
    debug_assert_eq!(d.domain(), Domain::Coefficient);
    let ctx = &params.level(level).ctx;
    let n = params.degree();
    let l = ctx.len();
    let moduli = ctx.moduli();
    (0..l)
        .map(|i| {
            let src = d.residue(i);
            let qi = moduli[i];
            let half = qi.value() / 2;
            let mut lifted = vec![0u64; l * n];
            for (j, qj) in moduli.iter().enumerate() {
                let dst = &mut lifted[j * n..(j + 1) * n];
                if i == j {
                    if let Some(t) = d_ntt.filter(|t| t.domain() == Domain::Ntt) {
                        dst.copy_from_slice(t.residue(i));
                        continue;
                    }
                    dst.copy_from_slice(src);
                } else {
                    let qiv = qi.value();
                    for (o, &x) in dst.iter_mut().zip(src) {
                        *o = if x > half {
                            qj.neg(qj.reduce(qiv - x))
                        } else {
                            qj.reduce(x)
                        };
                    }
                }
                ctx.tables()[j].forward(dst);
            }
            lifted
        })
        .collect()
}

/// Inner product of decomposed digits with a key, optionally reading the
/// digits through an NTT-domain Galois permutation.
pub(crate) fn apply_key(
    params: &BfvParams,
    level: usize,
    digits: &[Vec<u64>],
    perm: Option<&[usize]>,
    key: &KeySwitchKey,
) -> [RingElement; 2] {
    let ctx = &params.level(level).ctx;
    let n = params.degree();
    let l = ctx.len();
    let mut out0 = vec![0u64; l * n];
    let mut out1 = vec![0u64; l * n];
    let mut acc0 = vec![0u128; n];
    let mut acc1 = vec![0u128; n];
    for (j, m) in ctx.moduli().iter().enumerate() {
        acc0.iter_mut().for_each(|x| *x = 0);
        acc1.iter_mut().for_each(|x| *x = 0);
        for (i, digit) in digits.iter().enumerate() {
            let d = &digit[j * n..(j + 1) * n];
            let b = key.digits[i][0].residue(j);
            let a = key.digits[i][1].residue(j);
            match perm {
                None => {
                    for k in 0..n {
                        let x = d[k] as u128;
                        acc0[k] += x * b[k] as u128;
                        acc1[k] += x * a[k] as u128;
                    }
                }
                Some(p) => {
                    for k in 0..n {
                        let x = d[p[k]] as u128;
                        acc0[k] += x * b[k] as u128;
                        acc1[k] += x * a[k] as u128;
                    }
                }
            }
        }
        for k in 0..n {
            out0[j * n + k] = m.reduce_wide(acc0[k]);
            out1[j * n + k] = m.reduce_wide(acc1[k]);
        }
    }
    [
        RingElement::from_residues(ctx, out0, Domain::Ntt).expect("reduced"),
        RingElement::from_residues(ctx, out1, Domain::Ntt).expect("reduced"),
    ]
}

/// Key-switches `(c0, c1)` where `c1` decrypts under the key's source secret.
pub(crate) fn switch(
    params: &BfvParams,
    level: usize,
    c1_coeff: &RingElement,
    key: &KeySwitchKey,
) -> [RingElement; 2] {
    let digits = decompose(params, level, c1_coeff, None);
    apply_key(params, level, &digits, None, key)
}

fn automorphism_switch(ct: &Ciphertext, g: usize, key: &KeySwitchKey) -> Result<Ciphertext> {
    if ct.parts.len() != 2 {
        return Err(Error::Parameter("rotation needs a relinearized ciphertext"));
    }
    let params = &ct.params;
    let perm = galois_permutation(params.degree(), g);
    let c1 = ct.parts[1].clone().into_domain(Domain::Coefficient);
    let digits = decompose(params, ct.level, &c1, Some(&ct.parts[1]));
    let [mut k0, k1] = apply_key(params, ct.level, &digits, Some(&perm), key);
    k0.add_assign(&ct.parts[0].permuted(&perm))?;
    Ok(Ciphertext {
        params: params.clone(),
        level: ct.level,
        parts: vec![k0, k1],
        noise: noise::combine(ct.noise, noise::key_switch(params, ct.level)),
    })
}

pub(crate) fn rotate(ct: &Ciphertext, step: i64, keys: &GaloisKeys) -> Result<Ciphertext> {
    let half = (ct.params.degree() / 2) as i64;
    if step.rem_euclid(half) == 0 {
        return Ok(ct.clone());
    }
    let key = keys.get(step)?;
    automorphism_switch(ct, ct.params.encoder().galois_element(step), key)
}

pub(crate) fn row_swap(ct: &Ciphertext, keys: &GaloisKeys) -> Result<Ciphertext> {
    let key = keys.swap_key()?;
    automorphism_switch(ct, ct.params.encoder().row_swap_element(), key)
}

/// A ciphertext whose `c1` has been decomposed once, so that many rotations
/// of it cost only permutations and inner products.
pub(crate) struct Hoisted {
    ct: Ciphertext,
    digits: Vec<Vec<u64>>,
}

impl Hoisted {
    pub fn new(ct: &Ciphertext) -> Result<Self> {
        if ct.parts.len() != 2 {
            return Err(Error::Parameter("rotation needs a relinearized ciphertext"));
        }
        let c1 = ct.parts[1].clone().into_domain(Domain::Coefficient);
        let digits = decompose(&ct.params, ct.level, &c1, Some(&ct.parts[1]));
        Ok(Hoisted {
            ct: ct.clone(),
            digits,
        })
    }

    fn apply(&self, g: usize, key: &KeySwitchKey) -> Result<Ciphertext> {
        let params = &self.ct.params;
        let perm = galois_permutation(params.degree(), g);
        let [mut k0, k1] = apply_key(params, self.ct.level, &self.digits, Some(&perm), key);
        k0.add_assign(&self.ct.parts[0].permuted(&perm))?;
        Ok(Ciphertext {
            params: params.clone(),
            level: self.ct.level,
            parts: vec![k0, k1],
            noise: noise::combine(self.ct.noise, noise::key_switch(params, self.ct.level)),
        })
    }

    pub fn rotate(&self, step: i64, keys: &GaloisKeys) -> Result<Ciphertext> {
        let half = (self.ct.params.degree() / 2) as i64;
        if step.rem_euclid(half) == 0 {
            return Ok(self.ct.clone());
        }
        self.apply(
            self.ct.params.encoder().galois_element(step),
            keys.get(step)?,
        )
    }
}
