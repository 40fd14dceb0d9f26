//! Negacyclic number-theoretic transform over a single word-sized prime.
//!
//! The forward transform is a Cooley-Tukey network with the twisting powers of
//! a primitive 2N-th root `psi` merged into the twiddles; its output is in
//! bit-reversed order, so slot `k` holds `a(psi^(2*brev(k)+1))`. The inverse is
//! the matching Gentleman-Sande network. Butterflies use Harvey's lazy
//! reduction, which needs `4q < 2^64`.

use alloc::vec;
use alloc::vec::Vec;

use crate::arith::{root_of_unity, Modulus};

#[derive(Clone, Debug)]
pub struct NttTables {
    modulus: Modulus,
    n: usize,
    log_n: u32,
    psi: u64,
    psi_rev: Vec<u64>,
    psi_rev_shoup: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    psi_inv_rev_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

#[inline]
pub fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

impl NttTables {
    /// Returns `None` when `q` has no primitive 2n-th root of unity.
    pub fn new(modulus: Modulus, n: usize) -> Option<Self> {
        assert!(n.is_power_of_two() && n >= 2);
        let q = modulus.value();
        let psi = root_of_unity(q, 2 * n as u64)?;
        let psi_inv = modulus.inv(psi)?;
        let log_n = n.trailing_zeros();
        let mut psi_rev = vec![0u64; n];
        let mut psi_inv_rev = vec![0u64; n];
        let (mut pw, mut pw_inv) = (1u64, 1u64);
        for i in 0..n {
            let r = bit_reverse(i, log_n);
            psi_rev[r] = pw;
            psi_inv_rev[r] = pw_inv;
            pw = modulus.mul(pw, psi);
            pw_inv = modulus.mul(pw_inv, psi_inv);
        }
        let psi_rev_shoup = psi_rev.iter().map(|&w| modulus.shoup(w)).collect();
        let psi_inv_rev_shoup = psi_inv_rev.iter().map(|&w| modulus.shoup(w)).collect();
        let n_inv = modulus.inv(n as u64)?;
        Some(NttTables {
            modulus,
            n,
            log_n,
            psi,
            psi_rev,
            psi_rev_shoup,
            psi_inv_rev,
            psi_inv_rev_shoup,
            n_inv,
            n_inv_shoup: modulus.shoup(n_inv),
        })
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    /// The primitive 2N-th root used by this transform.
    pub fn psi(&self) -> u64 {
        self.psi
    }

    /// Exponent `e` such that forward output slot `k` is `a(psi^e)`.
    pub fn slot_exponent(&self, k: usize) -> usize {
        2 * bit_reverse(k, self.log_n) + 1
    }

    /// Forward slot holding the evaluation at `psi^e`, `e` odd.
    pub fn slot_of_exponent(&self, e: usize) -> usize {
        debug_assert!(e % 2 == 1);
        bit_reverse((e % (2 * self.n)) / 2, self.log_n)
    }

    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.modulus.value();
        let two_q = 2 * q;
        let n = self.n;
        let mut t = n;
        let mut m = 1;
        while m < n {
            t >>= 1;
            let w = &self.psi_rev[m..2 * m];
            let ws = &self.psi_rev_shoup[m..2 * m];
            if t == 1 {
                for ((pair, &w), &ws) in a.chunks_exact_mut(2).zip(w).zip(ws) {
                    let mut u = pair[0];
                    if u >= two_q {
                        u -= two_q;
                    }
                    let v = self.modulus.mul_shoup_lazy(pair[1], w, ws);
                    pair[0] = u + v;
                    pair[1] = u + two_q - v;
                }
            } else {
                for ((block, &w), &ws) in a.chunks_exact_mut(2 * t).zip(w).zip(ws) {
                    let (lo, hi) = block.split_at_mut(t);
                    for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                        let mut u = *x;
                        if u >= two_q {
                            u -= two_q;
                        }
                        let v = self.modulus.mul_shoup_lazy(*y, w, ws);
                        *x = u + v;
                        *y = u + two_q - v;
                    }
                }
            }
            m <<= 1;
        }
        for x in a.iter_mut() {
            let mut v = *x;
            if v >= two_q {
                v -= two_q;
            }
            if v >= q {
                v -= q;
            }
            *x = v;
        }
    }

    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.modulus.value();
        let two_q = 2 * q;
        let n = self.n;
        let mut t = 1;
        let mut m = n;
        while m > 1 {
            let h = m >> 1;
            for i in 0..h {
                let w = self.psi_inv_rev[h + i];
                let ws = self.psi_inv_rev_shoup[h + i];
                let j1 = 2 * i * t;
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = *y;
                    let mut s = u + v;
                    if s >= two_q {
                        s -= two_q;
                    }
                    *x = s;
                    *y = self.modulus.mul_shoup_lazy(u + two_q - v, w, ws);
                }
            }
            t <<= 1;
            m = h;
        }
        for x in a.iter_mut() {
            *x = self.modulus.mul_shoup(*x, self.n_inv, self.n_inv_shoup);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_k_is_evaluation_at_odd_power() {
        let q = 65537;
        let n = 16;
        let t = NttTables::new(Modulus::new(q), n).unwrap();
        let m = Modulus::new(q);
        let a: Vec<u64> = (0..n as u64).map(|i| (i * 7919 + 3) % q).collect();
        let mut f = a.clone();
        t.forward(&mut f);
        for k in 0..n {
            let x = m.pow(t.psi(), t.slot_exponent(k) as u64);
            let mut acc = 0;
            for c in a.iter().rev() {
                acc = m.add(m.mul(acc, x), *c);
            }
            assert_eq!(f[k], acc, "slot {k}");
            assert_eq!(t.slot_of_exponent(t.slot_exponent(k)), k);
        }
        t.inverse(&mut f);
        assert_eq!(f, a);
    }

    #[test]
    fn zero_maps_to_zero() {
        let t = NttTables::new(Modulus::new(65537), 32).unwrap();
        let mut z = vec![0u64; 32];
        t.forward(&mut z);
        assert!(z.iter().all(|&x| x == 0));
    }

    #[test]
    fn rejects_modulus_without_root() {
        // 97 - 1 = 96 is not divisible by 2 * 64.
        assert!(NttTables::new(Modulus::new(97), 64).is_none());
    }
}
