use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigUint;
use rand_core::RngCore;

use super::keys::{
    sample_error_ntt, sample_ternary_ntt, GaloisKeys, PublicKey, RelinKey, SecretKey,
};
use super::params::{log2_big, BfvParams};
use super::{keyswitch, mul, noise, Ciphertext};
use crate::error::{Error, Result};
use crate::field::{FieldElement, P};
use crate::ring::{Domain, RingElement};

fn check_params(a: &BfvParams, b: &BfvParams) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Parameter("operands use different BFV parameters"))
    }
}

fn centered_plain(coeffs: &[u64]) -> Vec<i64> {
    coeffs
        .iter()
        .map(|&c| {
            if c > P / 2 {
                c as i64 - P as i64
            } else {
                c as i64
            }
        })
        .collect()
}

/// A plaintext prepared for addition at one level: `round(Q m / p)`.
#[derive(Clone, Debug)]
pub(crate) struct PlainAddOperand {
    level: usize,
    elem: RingElement,
}

impl PlainAddOperand {
    /// From plaintext polynomial coefficients in `[0, p)`.
    pub fn from_poly(params: &BfvParams, level: usize, coeffs: &[u64]) -> Result<Self> {
        let lv = params.level(level);
        let n = params.degree();
        if coeffs.len() != n {
            return Err(Error::Parameter(
                "plaintext length does not match ring degree",
            ));
        }
        // floor(Q/p) m + round((Q mod p) m / p)
        let carry: Vec<u64> = coeffs
            .iter()
            .map(|&m| (lv.q_mod_p * m + P / 2) / P)
            .collect();
        let mut data = vec![0u64; n * lv.ctx.len()];
        for (i, q) in lv.ctx.moduli().iter().enumerate() {
            let d = lv.delta[i];
            let ds = q.shoup(d);
            for ((o, &m), &c) in data[i * n..(i + 1) * n].iter_mut().zip(coeffs).zip(&carry) {
                *o = q.add(q.mul_shoup(m, d, ds), c);
            }
        }
        let elem = RingElement::from_residues(&lv.ctx, data, Domain::Coefficient)?
            .into_domain(Domain::Ntt);
        Ok(PlainAddOperand { level, elem })
    }

    pub fn new(params: &BfvParams, level: usize, values: &[FieldElement]) -> Result<Self> {
        Self::from_poly(params, level, &params.encoder().encode(values)?)
    }
}

/// A plaintext prepared for multiplication at one level: the centered lift
/// of `m` in the NTT domain.
#[derive(Clone, Debug)]
pub(crate) struct PlainMulOperand {
    level: usize,
    elem: RingElement,
    log2_norm: f64,
}

impl PlainMulOperand {
    pub fn from_poly(params: &BfvParams, level: usize, coeffs: &[u64]) -> Result<Self> {
        let lv = params.level(level);
        let c = centered_plain(coeffs);
        let sq: f64 = c.iter().map(|&x| (x as f64) * (x as f64)).sum();
        let elem = RingElement::from_signed(&lv.ctx, &c)?.into_domain(Domain::Ntt);
        Ok(PlainMulOperand {
            level,
            elem,
            log2_norm: 0.5 * libm::log2(sq.max(1.0)),
        })
    }

    pub fn new(params: &BfvParams, level: usize, values: &[FieldElement]) -> Result<Self> {
        Self::from_poly(params, level, &params.encoder().encode(values)?)
    }
}

impl Ciphertext {
    pub(crate) fn from_parts(
        params: &BfvParams,
        level: usize,
        parts: Vec<RingElement>,
        noise: f64,
    ) -> Self {
        Ciphertext {
            params: params.clone(),
            level,
            parts,
            noise,
        }
    }

    pub(crate) fn add_plain_operand(&mut self, op: &PlainAddOperand) -> Result<()> {
        if op.level != self.level {
            return Err(Error::Parameter("plaintext prepared for another level"));
        }
        self.parts[0].add_assign(&op.elem)
    }

    pub(crate) fn mul_plain_operand(&mut self, op: &PlainMulOperand) -> Result<()> {
        if op.level != self.level {
            return Err(Error::Parameter("plaintext prepared for another level"));
        }
        for c in &mut self.parts {
            c.mul_assign_pointwise(&op.elem)?;
        }
        self.noise = noise::plain_mul(self.noise, op.log2_norm);
        Ok(())
    }

    pub(crate) fn add_assign(&mut self, other: &Ciphertext) -> Result<()> {
        check_params(&self.params, &other.params)?;
        if self.level != other.level {
            return Err(Error::Parameter("ciphertexts at different levels"));
        }
        for (i, c) in other.parts.iter().enumerate() {
            if i < self.parts.len() {
                self.parts[i].add_assign(c)?;
            } else {
                self.parts.push(c.clone());
            }
        }
        self.noise = noise::combine(self.noise, other.noise);
        Ok(())
    }
}

/// `sum_i cts[i] * ops[i]` with a single reduction per coefficient.
pub(crate) fn plain_dot(cts: &[&Ciphertext], ops: &[PlainMulOperand]) -> Result<Ciphertext> {
    let first = *cts
        .first()
        .ok_or(Error::Parameter("empty plaintext inner product"))?;
    if cts.len() != ops.len() {
        return Err(Error::Parameter("bad plaintext inner product shape"));
    }
    let (params, level, size) = (&first.params, first.level, first.parts.len());
    for (ct, op) in cts.iter().zip(ops) {
        check_params(params, &ct.params)?;
        if ct.level != level || op.level != level || ct.parts.len() != size {
            return Err(Error::Parameter("inner product operands do not match"));
        }
    }
    let ctx = &params.level(level).ctx;
    let n = params.degree();
    let mut acc = vec![0u128; n];
    let mut parts = Vec::with_capacity(size);
    for c in 0..size {
        let mut data = vec![0u64; ctx.len() * n];
        for (j, m) in ctx.moduli().iter().enumerate() {
            let r = j * n..(j + 1) * n;
            acc.iter_mut().for_each(|x| *x = 0);
            // Terms that fit in the accumulator before a fold is needed.
            let batch = 1usize << (127 - 2 * m.bits()).min(20);
            for (k, (ct, op)) in cts.iter().zip(ops).enumerate() {
                if k > 0 && k % batch == 0 {
                    acc.iter_mut().for_each(|x| *x = m.reduce_wide(*x) as u128);
                }
                let a = &ct.parts[c].data()[r.clone()];
                let b = &op.elem.data()[r.clone()];
                for ((s, &x), &y) in acc.iter_mut().zip(a).zip(b) {
                    *s += x as u128 * y as u128;
                }
            }
            for (o, &s) in data[r].iter_mut().zip(&acc) {
                *o = m.reduce_wide(s);
            }
        }
        parts.push(RingElement::from_residues(ctx, data, Domain::Ntt)?);
    }
    let noise = cts
        .iter()
        .zip(ops)
        .map(|(ct, op)| noise::plain_mul(ct.noise, op.log2_norm))
        .fold(f64::NEG_INFINITY, noise::combine);
    Ok(Ciphertext::from_parts(params, level, parts, noise))
}

/// Public-key encryption of a slot vector (zero-padded to N slots).
pub fn encrypt<R: RngCore + ?Sized>(
    pk: &PublicKey,
    values: &[FieldElement],
    rng: &mut R,
) -> Result<Ciphertext> {
    let params = &pk.params;
    let m = params.encoder().encode(values)?;
    let dm = PlainAddOperand::from_poly(params, 0, &m)?;
    let mut rng = rng;
    let u = sample_ternary_ntt(params, &mut rng);
    let e0 = sample_error_ntt(params, &mut rng);
    let e1 = sample_error_ntt(params, &mut rng);
    let mut c0 = pk.p0.clone();
    c0.mul_assign_pointwise(&u)?;
    c0.add_assign(&e0)?;
    c0.add_assign(&dm.elem)?;
    let mut c1 = pk.p1.clone();
    c1.mul_assign_pointwise(&u)?;
    c1.add_assign(&e1)?;
    Ok(Ciphertext::from_parts(
        params,
        0,
        vec![c0, c1],
        noise::fresh(params, 0),
    ))
}

/// `c0 + c1 s + c2 s^2 + ...` in the coefficient domain.
fn phase(ct: &Ciphertext, sk: &SecretKey) -> Result<RingElement> {
    check_params(&ct.params, &sk.params)?;
    let lv = ct.params.level(ct.level);
    let n = ct.params.degree();
    let s = RingElement::from_residues(
        &lv.ctx,
        sk.ntt.data()[..n * lv.ctx.len()].to_vec(),
        Domain::Ntt,
    )?;
    let mut acc = ct.parts[ct.parts.len() - 1].clone();
    for c in ct.parts[..ct.parts.len() - 1].iter().rev() {
        acc.mul_assign_pointwise(&s)?;
        acc.add_assign(c)?;
    }
    Ok(acc.into_domain(Domain::Coefficient))
}

/// Plaintext coefficients and the largest `|v|` as a 64-bit binary fraction.
fn decrypt_core(ct: &Ciphertext, sk: &SecretKey) -> Result<(Vec<u64>, u64)> {
    let x = phase(ct, sk)?;
    let lv = ct.params.level(ct.level);
    let n = ct.params.degree();
    let moduli = lv.ctx.moduli();
    let mut out = vec![0u64; n];
    let mut worst = 0u64;
    for (k, o) in out.iter_mut().enumerate() {
        let mut total = 0u128;
        for (i, q) in moduli.iter().enumerate() {
            let z = q.mul_shoup(x.residue(i)[k], lv.q_hat_inv[i], lv.q_hat_inv_shoup[i]) as u128;
            let (hi, lo) = lv.p_over_q[i];
            // (p z / q_i) * 2^64
            total += z * hi as u128 + ((z * lo as u128) >> 64);
        }
        let frac = total as u64;
        let int = (total >> 64) as u64 + (frac >> 63);
        *o = int % P;
        worst = worst.max(frac.min(frac.wrapping_neg()));
    }
    Ok((out, worst))
}

/// Decrypts and decodes. Fails with [`Error::DecryptionIntegrity`] when the
/// measured noise leaves less than one bit of budget, since the plaintext
/// can then no longer be trusted.
pub fn decrypt(ct: &Ciphertext, sk: &SecretKey) -> Result<Vec<FieldElement>> {
    let (m, worst) = decrypt_core(ct, sk)?;
    if worst >= 1 << 62 {
        return Err(Error::DecryptionIntegrity);
    }
    ct.params.encoder().decode(&m)
}

/// Decryption without the integrity check.
pub fn decrypt_unchecked(ct: &Ciphertext, sk: &SecretKey) -> Result<Vec<FieldElement>> {
    let (m, _) = decrypt_core(ct, sk)?;
    ct.params.encoder().decode(&m)
}

/// Remaining noise budget in whole bits: the floor of
/// `log2 Q - log2 max|w| - 1` with `w = [p (c0 + c1 s + ...)]_Q` centered,
/// clamped at zero.
pub fn noise_budget(ct: &Ciphertext, sk: &SecretKey) -> Result<f64> {
    Ok(libm::floor(noise_budget_fractional(ct, sk)?))
}

/// [`noise_budget`] without rounding down.
pub fn noise_budget_fractional(ct: &Ciphertext, sk: &SecretKey) -> Result<f64> {
    let x = phase(ct, sk)?;
    let lv = ct.params.level(ct.level);
    let n = ct.params.degree();
    let moduli = lv.ctx.moduli();
    let half = &lv.q_big >> 1u32;
    let mut worst = BigUint::from(0u32);
    for k in 0..n {
        let mut acc = BigUint::from(0u32);
        for (i, q) in moduli.iter().enumerate() {
            let w = q.mul(x.residue(i)[k], P % q.value());
            let z = q.mul_shoup(w, lv.q_hat_inv[i], lv.q_hat_inv_shoup[i]);
            acc += &lv.q_hat[i] * z;
        }
        acc %= &lv.q_big;
        let mag = if acc > half { &lv.q_big - acc } else { acc };
        if mag > worst {
            worst = mag;
        }
    }
    if worst.bits() == 0 {
        return Ok(lv.log2_q - 1.0);
    }
    Ok((lv.log2_q - log2_big(&worst) - 1.0).max(0.0))
}

/// Brings both operands to the lower of their two levels.
fn aligned(a: &Ciphertext, b: &Ciphertext) -> Result<(Ciphertext, Ciphertext)> {
    check_params(&a.params, &b.params)?;
    let level = a.level.max(b.level);
    Ok((mod_drop_to(a, level)?, mod_drop_to(b, level)?))
}

pub fn he_add(a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
    let (mut x, y) = if a.level == b.level {
        check_params(&a.params, &b.params)?;
        (a.clone(), b.clone())
    } else {
        aligned(a, b)?
    };
    x.add_assign(&y)?;
    Ok(x)
}

pub fn he_negate(a: &Ciphertext) -> Ciphertext {
    let mut x = a.clone();
    for c in &mut x.parts {
        c.negate();
    }
    x
}

pub fn he_sub(a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
    he_add(a, &he_negate(b))
}

pub fn he_plain_add(a: &Ciphertext, values: &[FieldElement]) -> Result<Ciphertext> {
    let op = PlainAddOperand::new(&a.params, a.level, values)?;
    let mut x = a.clone();
    x.add_plain_operand(&op)?;
    Ok(x)
}

pub fn he_plain_mul(a: &Ciphertext, values: &[FieldElement]) -> Result<Ciphertext> {
    let op = PlainMulOperand::new(&a.params, a.level, values)?;
    let mut x = a.clone();
    x.mul_plain_operand(&op)?;
    Ok(x)
}

fn require_size2(a: &Ciphertext) -> Result<()> {
    if a.parts.len() == 2 {
        Ok(())
    } else {
        Err(Error::Parameter("operation needs a size-2 ciphertext"))
    }
}

fn product(a: &Ciphertext, b: Option<&Ciphertext>) -> Result<(usize, [RingElement; 3], f64)> {
    require_size2(a)?;
    let (level, pa, pb) = match b {
        Some(b) => {
            require_size2(b)?;
            let (x, y) = aligned(a, b)?;
            (x.level, x, Some(y))
        }
        None => (a.level, a.clone(), None),
    };
    let nb = pb.as_ref().map_or(pa.noise, |y| y.noise);
    let parts = mul::tensor(
        &pa.params,
        level,
        &pa.parts,
        pb.as_ref().map(|y| &y.parts[..]),
    );
    Ok((level, parts, noise::mul(&pa.params, level, pa.noise, nb)))
}

/// Size-3 product without relinearization.
pub fn he_mul(a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
    let (level, parts, nz) = product(a, Some(b))?;
    let parts = parts
        .into_iter()
        .map(|c| c.into_domain(Domain::Ntt))
        .collect();
    Ok(Ciphertext::from_parts(&a.params, level, parts, nz))
}

fn relin_parts(
    params: &BfvParams,
    level: usize,
    parts: [RingElement; 3],
    nz: f64,
    rk: &RelinKey,
) -> Result<Ciphertext> {
    let [c0, c1, c2] = parts;
    let [mut k0, mut k1] = keyswitch::switch(params, level, &c2, &rk.0);
    k0.add_assign(&c0.into_domain(Domain::Ntt))?;
    k1.add_assign(&c1.into_domain(Domain::Ntt))?;
    Ok(Ciphertext::from_parts(
        params,
        level,
        vec![k0, k1],
        noise::combine(nz, noise::key_switch(params, level)),
    ))
}

pub fn relinearize(a: &Ciphertext, rk: &RelinKey) -> Result<Ciphertext> {
    match a.parts.len() {
        2 => Ok(a.clone()),
        3 => {
            let c2 = a.parts[2].clone().into_domain(Domain::Coefficient);
            let parts = [a.parts[0].clone(), a.parts[1].clone(), c2];
            let [c0, c1, c2] = parts;
            let [mut k0, mut k1] = keyswitch::switch(&a.params, a.level, &c2, &rk.0);
            k0.add_assign(&c0)?;
            k1.add_assign(&c1)?;
            Ok(Ciphertext::from_parts(
                &a.params,
                a.level,
                vec![k0, k1],
                noise::combine(a.noise, noise::key_switch(&a.params, a.level)),
            ))
        }
        _ => Err(Error::Parameter("unsupported ciphertext size")),
    }
}

/// Product followed by relinearization; output has two components.
pub fn he_mul_relin(a: &Ciphertext, b: &Ciphertext, rk: &RelinKey) -> Result<Ciphertext> {
    let (level, parts, nz) = product(a, Some(b))?;
    relin_parts(&a.params, level, parts, nz, rk)
}

pub fn he_square_relin(a: &Ciphertext, rk: &RelinKey) -> Result<Ciphertext> {
    let (level, parts, nz) = product(a, None)?;
    relin_parts(&a.params, level, parts, nz, rk)
}

/// Rotates both slot rows left by `step` (right for negative steps).
pub fn he_rotate(a: &Ciphertext, step: i64, keys: &GaloisKeys) -> Result<Ciphertext> {
    keyswitch::rotate(a, step, keys)
}

/// Exchanges the two slot rows.
pub fn he_row_swap(a: &Ciphertext, keys: &GaloisKeys) -> Result<Ciphertext> {
    keyswitch::row_swap(a, keys)
}

/// Drops the last prime of the ciphertext's modulus, dividing by it with
/// rounding.
fn mod_drop(a: &Ciphertext) -> Result<Ciphertext> {
    let params = &a.params;
    if a.level + 1 >= params.level_count() {
        return Err(Error::Parameter("no prime left to drop"));
    }
    let lv = params.level(a.level);
    let next = params.level(a.level + 1);
    let n = params.degree();
    let l = lv.ctx.len();
    let last = lv.ctx.moduli()[l - 1];
    let half = last.value() / 2;
    let mut parts = Vec::with_capacity(a.parts.len());
    let mut top = vec![0u64; n];
    let mut lifted = vec![0u64; n];
    for c in &a.parts {
        top.copy_from_slice(c.residue(l - 1));
        lv.ctx.tables()[l - 1].inverse(&mut top);
        let mut data = c.data()[..n * (l - 1)].to_vec();
        for (i, q) in next.ctx.moduli().iter().enumerate() {
            for (o, &x) in lifted.iter_mut().zip(&top) {
                *o = if x > half {
                    q.neg(q.reduce(last.value() - x))
                } else {
                    q.reduce(x)
                };
            }
            next.ctx.tables()[i].forward(&mut lifted);
            let (w, ws) = lv.drop_inv[i];
            for (d, &t) in data[i * n..(i + 1) * n].iter_mut().zip(&lifted) {
                *d = q.mul_shoup(q.sub(*d, t), w, ws);
            }
        }
        parts.push(RingElement::from_residues(&next.ctx, data, Domain::Ntt)?);
    }
    Ok(Ciphertext::from_parts(
        params,
        a.level + 1,
        parts,
        noise::combine(a.noise, noise::mod_drop(params, a.level + 1)),
    ))
}

/// Drops primes until the ciphertext is at `level`, shrinking it without
/// changing the plaintext.
pub fn mod_drop_to(a: &Ciphertext, level: usize) -> Result<Ciphertext> {
    if level < a.level {
        return Err(Error::Parameter("cannot raise a ciphertext's level"));
    }
    let mut x = a.clone();
    while x.level < level {
        x = mod_drop(&x)?;
    }
    Ok(x)
}
