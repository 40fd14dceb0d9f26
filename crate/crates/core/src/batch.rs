//! CRT slot batching for the plaintext ring `F_p[X]/(X^N + 1)`.
//!
//! Slots are arranged as two rows of N/2. With `psi` the primitive 2N-th root
//! of unity `3^((p-1)/2N) mod p` (3 generates F_65537^*), slot `(0, j)` holds
//! the evaluation at `psi^(3^j mod 2N)` and slot `(1, j)` the evaluation at
//! `psi^(-3^j mod 2N)`. Under this order the automorphism `X -> X^(3^k)`
//! rotates both rows left by `k`, and `X -> X^(2N-1)` swaps the rows.

use alloc::vec;
use alloc::vec::Vec;

use crate::arith::Modulus;
use crate::error::{Error, Result};
use crate::field::{FieldElement, P};
use crate::ntt::NttTables;

#[derive(Clone, Debug)]
pub struct BatchEncoder {
    n: usize,
    tables: NttTables,
    // slot index -> forward-NTT index
    slot_to_ntt: Vec<usize>,
}

impl BatchEncoder {
    pub fn new(n: usize) -> Result<Self> {
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::Parameter("ring degree must be a power of two"));
        }
        let tables = NttTables::new(Modulus::new(P), n)
            .ok_or(Error::Parameter("plaintext modulus is not 1 mod 2N"))?;
        let two_n = 2 * n;
        let half = n / 2;
        let mut slot_to_ntt = vec![0usize; n];
        let mut e = 1usize;
        for j in 0..half {
            slot_to_ntt[j] = tables.slot_of_exponent(e);
            slot_to_ntt[half + j] = tables.slot_of_exponent(two_n - e);
            e = (e * 3) % two_n;
        }
        Ok(BatchEncoder {
            n,
            tables,
            slot_to_ntt,
        })
    }

    pub fn slot_count(&self) -> usize {
        self.n
    }

    pub fn row_size(&self) -> usize {
        self.n / 2
    }

    /// Plaintext polynomial (coefficients in `[0, p)`) whose slots hold `values`,
    /// zero-padded to N.
    pub fn encode(&self, values: &[FieldElement]) -> Result<Vec<u64>> {
        if values.len() > self.n {
            return Err(Error::Capacity {
                len: values.len(),
                capacity: self.n,
            });
        }
        let mut a = vec![0u64; self.n];
        for (v, &k) in values.iter().zip(&self.slot_to_ntt) {
            a[k] = v.value();
        }
        self.tables.inverse(&mut a);
        Ok(a)
    }

    /// Slot values of a plaintext polynomial with coefficients in `[0, p)`.
    pub fn decode(&self, coeffs: &[u64]) -> Result<Vec<FieldElement>> {
        if coeffs.len() != self.n {
            return Err(Error::Parameter(
                "plaintext length does not match ring degree",
            ));
        }
        let mut a = coeffs.to_vec();
        self.tables.forward(&mut a);
        Ok(self
            .slot_to_ntt
            .iter()
            .map(|&k| FieldElement::new(a[k]))
            .collect())
    }

    /// Galois element rotating both rows left by `step` (negative: right).
    pub fn galois_element(&self, step: i64) -> usize {
        let half = (self.n / 2) as i64;
        let k = step.rem_euclid(half) as u64;
        Modulus::new(2 * self.n as u64).pow(3, k) as usize
    }

    /// Galois element exchanging the two rows.
    pub fn row_swap_element(&self) -> usize {
        2 * self.n - 1
    }
}

/// Plaintext-side row rotation, the reference semantics of homomorphic rotation.
pub fn rotate_rows(values: &[FieldElement], step: i64) -> Vec<FieldElement> {
    let half = values.len() / 2;
    let k = step.rem_euclid(half as i64) as usize;
    let mut out = Vec::with_capacity(values.len());
    for row in values.chunks(half) {
        out.extend(row[k..].iter().chain(&row[..k]).copied());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::{ring_mul, RingContext, RingElement};
    use proptest::prelude::*;

    fn to_fe(v: &[u64]) -> Vec<FieldElement> {
        v.iter().map(|&x| FieldElement::new(x)).collect()
    }

    fn from_poly(e: &RingElement) -> Vec<u64> {
        e.residue(0).to_vec()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn slotwise_ring_isomorphism(u in proptest::collection::vec(0u64..P, 32), v in proptest::collection::vec(0u64..P, 32)) {
            let enc = BatchEncoder::new(32).unwrap();
            let ctx = RingContext::new(32, &[P]).unwrap();
            let (u, v) = (to_fe(&u), to_fe(&v));
            let pu = RingElement::from_unsigned(&ctx, &enc.encode(&u).unwrap()).unwrap();
            let pv = RingElement::from_unsigned(&ctx, &enc.encode(&v).unwrap()).unwrap();
            let mut sum = pu.clone();
            sum.add_assign(&pv).unwrap();
            let prod = ring_mul(&pu, &pv).unwrap();
            let s = enc.decode(&from_poly(&sum)).unwrap();
            let m = enc.decode(&from_poly(&prod)).unwrap();
            for i in 0..32 {
                prop_assert_eq!(s[i], u[i] + v[i]);
                prop_assert_eq!(m[i], u[i] * v[i]);
            }
            prop_assert_eq!(enc.decode(&enc.encode(&u).unwrap()).unwrap(), u);
        }
    }

    #[test]
    fn zero_and_padding() {
        let enc = BatchEncoder::new(16).unwrap();
        assert!(enc
            .encode(&[FieldElement::ZERO; 16])
            .unwrap()
            .iter()
            .all(|&c| c == 0));
        let short = to_fe(&[1, 2, 3]);
        let dec = enc.decode(&enc.encode(&short).unwrap()).unwrap();
        assert_eq!(&dec[..3], &short[..]);
        assert!(dec[3..].iter().all(|x| *x == FieldElement::ZERO));
        assert!(matches!(
            enc.encode(&[FieldElement::ONE; 17]),
            Err(Error::Capacity {
                len: 17,
                capacity: 16
            })
        ));
    }

    #[test]
    fn automorphism_rotates_rows() {
        let n = 32;
        let enc = BatchEncoder::new(n).unwrap();
        let ctx = RingContext::new(n, &[P]).unwrap();
        let vals = to_fe(&(1..=n as u64).collect::<Vec<_>>());
        let poly = RingElement::from_unsigned(&ctx, &enc.encode(&vals).unwrap()).unwrap();
        for step in [1i64, 3, -1, -5, 0] {
            let g = enc.galois_element(step);
            let rotated = enc.decode(&from_poly(&poly.automorphism(g))).unwrap();
            assert_eq!(rotated, rotate_rows(&vals, step), "step {step}");
        }
        let swapped = enc
            .decode(&from_poly(&poly.automorphism(enc.row_swap_element())))
            .unwrap();
        assert_eq!(&swapped[..n / 2], &vals[n / 2..]);
    }

    #[test]
    fn plaintext_rotation_example() {
        let row = to_fe(&[1, 2, 3, 0, 0, 0, 0, 0]);
        let mut v = row.clone();
        v.extend(to_fe(&[0; 8]));
        let r = rotate_rows(&v, 1);
        assert_eq!(&r[..8], &to_fe(&[2, 3, 0, 0, 0, 0, 0, 1])[..]);
    }
}
