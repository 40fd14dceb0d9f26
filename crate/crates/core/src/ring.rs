//! The negacyclic ring `Z_q[X]/(X^N + 1)` in residue-number-system form.
//!
//! A [`RingElement`] stores one length-N residue vector per prime of its
//! [`RingContext`], residue-major. Elements carry a domain flag; additions
//! require matching domains and products run pointwise in the NTT domain.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::arith::Modulus;
use crate::error::{Error, Result};
use crate::ntt::{bit_reverse, NttTables};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Coefficient,
    Ntt,
}

impl Domain {
    fn flag(self) -> u8 {
        match self {
            Domain::Coefficient => 0,
            Domain::Ntt => 1,
        }
    }
}

/// Ring degree and a chain of NTT-friendly primes.
#[derive(Debug)]
pub struct RingContext {
    n: usize,
    moduli: Vec<Modulus>,
    tables: Vec<NttTables>,
}

impl PartialEq for RingContext {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.moduli == other.moduli
    }
}

impl RingContext {
    pub fn new(n: usize, primes: &[u64]) -> Result<Arc<Self>> {
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::Parameter("ring degree must be a power of two"));
        }
        if primes.is_empty() {
            return Err(Error::Parameter("empty modulus chain"));
        }
        for (i, p) in primes.iter().enumerate() {
            if primes[..i].contains(p) {
                return Err(Error::Parameter("duplicate prime in modulus chain"));
            }
            if *p >= 1 << Modulus::MAX_BITS || !crate::arith::is_prime(*p) {
                return Err(Error::Parameter("modulus must be a prime below 2^62"));
            }
        }
        let moduli: Vec<Modulus> = primes.iter().map(|&p| Modulus::new(p)).collect();
        let tables = moduli
            .iter()
            .map(|&m| {
                NttTables::new(m, n).ok_or(Error::Parameter("prime has no 2N-th root of unity"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Arc::new(RingContext { n, moduli, tables }))
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn moduli(&self) -> &[Modulus] {
        &self.moduli
    }

    pub fn tables(&self) -> &[NttTables] {
        &self.tables
    }

    pub fn len(&self) -> usize {
        self.moduli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moduli.is_empty()
    }

    pub fn total_bits(&self) -> u32 {
        self.moduli.iter().map(|m| m.bits()).sum()
    }
}

/// Forward-NTT slot permutation realising `a(X) -> a(X^g)`:
/// `ntt(a(X^g))[k] = ntt(a)[perm[k]]`. The same for every prime.
pub fn galois_permutation(n: usize, g: usize) -> Vec<usize> {
    let log_n = n.trailing_zeros();
    let two_n = 2 * n;
    (0..n)
        .map(|k| {
            let e = 2 * bit_reverse(k, log_n) + 1;
            let e2 = (e * g) % two_n;
            bit_reverse(e2 / 2, log_n)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct RingElement {
    ctx: Arc<RingContext>,
    data: Vec<u64>,
    domain: Domain,
}

impl PartialEq for RingElement {
    fn eq(&self, other: &Self) -> bool {
        self.ctx == other.ctx && self.domain == other.domain && self.data == other.data
    }
}

impl RingElement {
    pub fn zero(ctx: &Arc<RingContext>, domain: Domain) -> Self {
        RingElement {
            ctx: ctx.clone(),
            data: vec![0; ctx.n * ctx.len()],
            domain,
        }
    }

    /// Builds from raw residues laid out residue-major; each must be reduced.
    pub fn from_residues(ctx: &Arc<RingContext>, data: Vec<u64>, domain: Domain) -> Result<Self> {
        if data.len() != ctx.n * ctx.len() {
            return Err(Error::Parameter(
                "residue vector length does not match context",
            ));
        }
        for (i, m) in ctx.moduli.iter().enumerate() {
            if data[i * ctx.n..(i + 1) * ctx.n]
                .iter()
                .any(|&x| x >= m.value())
            {
                return Err(Error::Parameter("residue not reduced"));
            }
        }
        Ok(RingElement {
            ctx: ctx.clone(),
            data,
            domain,
        })
    }

    /// Coefficient-domain element from signed integer coefficients.
    pub fn from_signed(ctx: &Arc<RingContext>, coeffs: &[i64]) -> Result<Self> {
        if coeffs.len() != ctx.n {
            return Err(Error::Parameter(
                "coefficient count does not match ring degree",
            ));
        }
        let mut data = Vec::with_capacity(ctx.n * ctx.len());
        for m in &ctx.moduli {
            data.extend(coeffs.iter().map(|&c| m.reduce_i64(c)));
        }
        Ok(RingElement {
            ctx: ctx.clone(),
            data,
            domain: Domain::Coefficient,
        })
    }

    /// Coefficient-domain element from unsigned coefficients, reduced per prime.
    pub fn from_unsigned(ctx: &Arc<RingContext>, coeffs: &[u64]) -> Result<Self> {
        if coeffs.len() != ctx.n {
            return Err(Error::Parameter(
                "coefficient count does not match ring degree",
            ));
        }
        let mut data = Vec::with_capacity(ctx.n * ctx.len());
        for m in &ctx.moduli {
            data.extend(coeffs.iter().map(|&c| m.reduce(c)));
        }
        Ok(RingElement {
            ctx: ctx.clone(),
            data,
            domain: Domain::Coefficient,
        })
    }

    pub fn context(&self) -> &Arc<RingContext> {
        &self.ctx
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn degree(&self) -> usize {
        self.ctx.n
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u64] {
        &mut self.data
    }

    pub fn residue(&self, i: usize) -> &[u64] {
        &self.data[i * self.ctx.n..(i + 1) * self.ctx.n]
    }

    pub fn residue_mut(&mut self, i: usize) -> &mut [u64] {
        let n = self.ctx.n;
        &mut self.data[i * n..(i + 1) * n]
    }

    fn check_compatible(&self, other: &RingElement) -> Result<()> {
        if !Arc::ptr_eq(&self.ctx, &other.ctx) && *self.ctx != *other.ctx {
            return Err(Error::Parameter("ring elements over different contexts"));
        }
        if self.domain != other.domain {
            return Err(Error::Parameter("ring elements in different domains"));
        }
        Ok(())
    }

    pub fn ntt_forward(&mut self) -> Result<()> {
        if self.domain != Domain::Coefficient {
            return Err(Error::Parameter(
                "forward NTT requires coefficient-domain input",
            ));
        }
        let n = self.ctx.n;
        for (i, t) in self.ctx.tables.iter().enumerate() {
            t.forward(&mut self.data[i * n..(i + 1) * n]);
        }
        self.domain = Domain::Ntt;
        Ok(())
    }

    pub fn ntt_inverse(&mut self) -> Result<()> {
        if self.domain != Domain::Ntt {
            return Err(Error::Parameter("inverse NTT requires NTT-domain input"));
        }
        let n = self.ctx.n;
        for (i, t) in self.ctx.tables.iter().enumerate() {
            t.inverse(&mut self.data[i * n..(i + 1) * n]);
        }
        self.domain = Domain::Coefficient;
        Ok(())
    }

    /// Converts to `domain` if needed.
    pub fn into_domain(mut self, domain: Domain) -> Self {
        match (self.domain, domain) {
            (Domain::Coefficient, Domain::Ntt) => self.ntt_forward().expect("domain checked"),
            (Domain::Ntt, Domain::Coefficient) => self.ntt_inverse().expect("domain checked"),
            _ => {}
        }
        self
    }

    pub fn add_assign(&mut self, other: &RingElement) -> Result<()> {
        self.check_compatible(other)?;
        let n = self.ctx.n;
        for (i, m) in self.ctx.moduli.iter().enumerate() {
            let r = i * n..(i + 1) * n;
            for (a, b) in self.data[r.clone()].iter_mut().zip(&other.data[r]) {
                *a = m.add(*a, *b);
            }
        }
        Ok(())
    }

    pub fn sub_assign(&mut self, other: &RingElement) -> Result<()> {
        self.check_compatible(other)?;
        let n = self.ctx.n;
        for (i, m) in self.ctx.moduli.iter().enumerate() {
            let r = i * n..(i + 1) * n;
            for (a, b) in self.data[r.clone()].iter_mut().zip(&other.data[r]) {
                *a = m.sub(*a, *b);
            }
        }
        Ok(())
    }

    pub fn negate(&mut self) {
        let n = self.ctx.n;
        for (i, m) in self.ctx.moduli.iter().enumerate() {
            for a in &mut self.data[i * n..(i + 1) * n] {
                *a = m.neg(*a);
            }
        }
    }

    /// Pointwise product; both operands must be in the NTT domain.
    pub fn mul_assign_pointwise(&mut self, other: &RingElement) -> Result<()> {
        self.check_compatible(other)?;
        if self.domain != Domain::Ntt {
            return Err(Error::Parameter(
                "pointwise product requires NTT-domain operands",
            ));
        }
        let n = self.ctx.n;
        for (i, m) in self.ctx.moduli.iter().enumerate() {
            let r = i * n..(i + 1) * n;
            for (a, b) in self.data[r.clone()].iter_mut().zip(&other.data[r]) {
                *a = m.mul(*a, *b);
            }
        }
        Ok(())
    }

    /// `self += a * b`, all three in the NTT domain.
    pub fn fma_pointwise(&mut self, a: &RingElement, b: &RingElement) -> Result<()> {
        self.check_compatible(a)?;
        self.check_compatible(b)?;
        if self.domain != Domain::Ntt {
            return Err(Error::Parameter(
                "pointwise product requires NTT-domain operands",
            ));
        }
        let n = self.ctx.n;
        for (i, m) in self.ctx.moduli.iter().enumerate() {
            let r = i * n..(i + 1) * n;
            for ((acc, x), y) in self.data[r.clone()]
                .iter_mut()
                .zip(&a.data[r.clone()])
                .zip(&b.data[r])
            {
                *acc = m.add(*acc, m.mul(*x, *y));
            }
        }
        Ok(())
    }

    /// Multiplies every residue vector by the matching entry of `scalars`.
    pub fn mul_scalar_rns(&mut self, scalars: &[u64]) {
        let n = self.ctx.n;
        for (i, m) in self.ctx.moduli.iter().enumerate() {
            let w = scalars[i];
            let ws = m.shoup(w);
            for a in &mut self.data[i * n..(i + 1) * n] {
                *a = m.mul_shoup(*a, w, ws);
            }
        }
    }

    /// `a(X) -> a(X^g)` for odd `g`, in either domain.
    pub fn automorphism(&self, g: usize) -> RingElement {
        let n = self.ctx.n;
        let mut out = vec![0u64; self.data.len()];
        match self.domain {
            Domain::Coefficient => {
                for (i, m) in self.ctx.moduli.iter().enumerate() {
                    let src = &self.data[i * n..(i + 1) * n];
                    let dst = &mut out[i * n..(i + 1) * n];
                    for (j, &c) in src.iter().enumerate() {
                        let e = (j * g) % (2 * n);
                        if e < n {
                            dst[e] = c;
                        } else {
                            dst[e - n] = m.neg(c);
                        }
                    }
                }
            }
            Domain::Ntt => {
                let perm = galois_permutation(n, g);
                self.permute_into(&perm, &mut out);
            }
        }
        RingElement {
            ctx: self.ctx.clone(),
            data: out,
            domain: self.domain,
        }
    }

    /// Applies a precomputed NTT-domain Galois permutation.
    pub fn permuted(&self, perm: &[usize]) -> RingElement {
        debug_assert_eq!(self.domain, Domain::Ntt);
        let mut out = vec![0u64; self.data.len()];
        self.permute_into(perm, &mut out);
        RingElement {
            ctx: self.ctx.clone(),
            data: out,
            domain: self.domain,
        }
    }

    fn permute_into(&self, perm: &[usize], out: &mut [u64]) {
        let n = self.ctx.n;
        for i in 0..self.ctx.len() {
            let src = &self.data[i * n..(i + 1) * n];
            let dst = &mut out[i * n..(i + 1) * n];
            for (d, &p) in dst.iter_mut().zip(perm) {
                *d = src[p];
            }
        }
    }

    /// Serialized size in bytes.
    pub fn serialized_len(&self) -> usize {
        7 + 8 * self.data.len()
    }

    /// `N (u32) || modulus count (u16) || domain (u8) || residues`, all
    /// little-endian, residues residue-major then coefficient-major.
    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.reserve(self.serialized_len());
        out.extend_from_slice(&(self.ctx.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.ctx.len() as u16).to_le_bytes());
        out.push(self.domain.flag());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out);
        out
    }

    /// Parses one element from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn read_from(ctx: &Arc<RingContext>, bytes: &[u8]) -> Result<(Self, usize)> {
        if bytes.len() < 7 {
            return Err(Error::Format("truncated ring element header"));
        }
        let n = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let count = u16::from_le_bytes(bytes[4..6].try_into().unwrap()) as usize;
        let domain = match bytes[6] {
            0 => Domain::Coefficient,
            1 => Domain::Ntt,
            _ => return Err(Error::Format("bad domain flag")),
        };
        if n != ctx.n || count != ctx.len() {
            return Err(Error::Format("ring element shape does not match context"));
        }
        let total = 7 + 8 * n * count;
        if bytes.len() < total {
            return Err(Error::Format("truncated ring element body"));
        }
        let data = bytes[7..total]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let el = RingElement::from_residues(ctx, data, domain)
            .map_err(|_| Error::Format("unreduced residue in ring element"))?;
        Ok((el, total))
    }
}

/// `a * b mod (X^N + 1, q_i)` through the NTT. The result is in the
/// coefficient domain when both inputs are, otherwise in the NTT domain.
pub fn ring_mul(a: &RingElement, b: &RingElement) -> Result<RingElement> {
    if !Arc::ptr_eq(&a.ctx, &b.ctx) && *a.ctx != *b.ctx {
        return Err(Error::Parameter("ring elements over different contexts"));
    }
    let both_coeff = a.domain == Domain::Coefficient && b.domain == Domain::Coefficient;
    let mut x = a.clone().into_domain(Domain::Ntt);
    let y = b.clone().into_domain(Domain::Ntt);
    x.mul_assign_pointwise(&y)?;
    Ok(if both_coeff {
        x.into_domain(Domain::Coefficient)
    } else {
        x
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::ntt_primes;
    use proptest::prelude::*;

    fn ctx(n: usize) -> Arc<RingContext> {
        let mut primes = ntt_primes(60, n, 2, &[]).unwrap();
        primes.push(65537);
        RingContext::new(n, &primes).unwrap()
    }

    fn schoolbook(a: &[u64], b: &[u64], m: &Modulus) -> Vec<u64> {
        let n = a.len();
        let mut out = vec![0u64; n];
        for i in 0..n {
            for j in 0..n {
                let p = m.mul(a[i], b[j]);
                let k = i + j;
                if k < n {
                    out[k] = m.add(out[k], p);
                } else {
                    out[k - n] = m.sub(out[k - n], p);
                }
            }
        }
        out
    }

    fn arb_elem(ctx: Arc<RingContext>) -> impl Strategy<Value = RingElement> {
        proptest::collection::vec(any::<u64>(), ctx.degree() * ctx.len()).prop_map(move |raw| {
            let n = ctx.degree();
            let data = raw
                .iter()
                .enumerate()
                .map(|(k, x)| x % ctx.moduli()[k / n].value())
                .collect();
            RingElement::from_residues(&ctx, data, Domain::Coefficient).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn ntt_roundtrip(a in arb_elem(ctx(64))) {
            let b = a.clone().into_domain(Domain::Ntt).into_domain(Domain::Coefficient);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn mul_matches_schoolbook(a in arb_elem(ctx(16)), b in arb_elem(ctx(16))) {
            let c = ring_mul(&a, &b).unwrap();
            for (i, m) in a.context().moduli().iter().enumerate() {
                prop_assert_eq!(c.residue(i), &schoolbook(a.residue(i), b.residue(i), m)[..]);
            }
        }
    }

    #[test]
    fn negacyclic_wrap() {
        let n = 16;
        let c = ctx(n);
        let mut x = vec![0i64; n];
        x[1] = 1;
        let mut y = vec![0i64; n];
        y[n - 1] = 1;
        let prod = ring_mul(
            &RingElement::from_signed(&c, &x).unwrap(),
            &RingElement::from_signed(&c, &y).unwrap(),
        )
        .unwrap();
        let mut minus_one = vec![0i64; n];
        minus_one[0] = -1;
        assert_eq!(prod, RingElement::from_signed(&c, &minus_one).unwrap());
        let one = {
            let mut v = vec![0i64; n];
            v[0] = 1;
            RingElement::from_signed(&c, &v).unwrap()
        };
        let a =
            RingElement::from_signed(&c, &(0..n as i64).map(|i| i * 31 - 200).collect::<Vec<_>>())
                .unwrap();
        assert_eq!(ring_mul(&a, &one).unwrap(), a);
    }

    #[test]
    fn domain_contract() {
        let c = ctx(16);
        let mut a = RingElement::zero(&c, Domain::Ntt);
        assert!(a.ntt_forward().is_err());
        a.ntt_inverse().unwrap();
        assert!(a.ntt_inverse().is_err());
        let other = ctx(32);
        assert!(ring_mul(&a, &RingElement::zero(&other, Domain::Coefficient)).is_err());
    }

    #[test]
    fn automorphism_agrees_across_domains() {
        let c = ctx(32);
        let a =
            RingElement::from_signed(&c, &(0..32).map(|i| i * i - 17).collect::<Vec<_>>()).unwrap();
        for g in [3usize, 5, 63, 9] {
            let coeff = a.automorphism(g);
            let ntt = a
                .clone()
                .into_domain(Domain::Ntt)
                .automorphism(g)
                .into_domain(Domain::Coefficient);
            assert_eq!(coeff, ntt);
        }
    }

    #[test]
    fn serialization_roundtrip_and_layout() {
        let c = ctx(16);
        let a = RingElement::from_signed(&c, &(0..16).map(|i| 5 - i).collect::<Vec<_>>()).unwrap();
        let bytes = a.to_bytes();
        assert_eq!(&bytes[0..4], &16u32.to_le_bytes());
        assert_eq!(&bytes[4..6], &3u16.to_le_bytes());
        assert_eq!(bytes[6], 0);
        assert_eq!(&bytes[7..15], &5u64.to_le_bytes());
        assert_eq!(bytes.len(), a.serialized_len());
        let (b, used) = RingElement::read_from(&c, &bytes).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(a, b);
        assert!(RingElement::read_from(&c, &bytes[..20]).is_err());
    }
}
