//! Word-sized modular arithmetic: Barrett reduction for products, Shoup
//! multiplication by precomputed constants, and NTT-friendly prime search.

use alloc::vec::Vec;

/// A prime modulus below 2^62 with its reduction constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    // floor(2^128 / value), split into (low, high) words.
    ratio: (u64, u64),
}

impl Modulus {
    pub const MAX_BITS: u32 = 62;

    /// Panics if `value` is below 2 or not below 2^62.
    pub fn new(value: u64) -> Self {
        assert!(
            value >= 2 && value < (1 << Self::MAX_BITS),
            "modulus out of range"
        );
        let ratio = u128::MAX / value as u128;
        // u128::MAX / q equals floor(2^128 / q) unless q is a power of two.
        let ratio = if (u128::MAX % value as u128) + 1 == value as u128 {
            ratio + 1
        } else {
            ratio
        };
        Modulus {
            value,
            ratio: (ratio as u64, (ratio >> 64) as u64),
        }
    }

    #[inline(always)]
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn bits(&self) -> u32 {
        64 - self.value.leading_zeros()
    }

    /// Reduces any 128-bit value below `q * 2^64`.
    #[inline(always)]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let x0 = x as u64;
        let x1 = (x >> 64) as u64;
        let (r0, r1) = self.ratio;
        let a = ((x0 as u128 * r0 as u128) >> 64) as u64;
        let b = x0 as u128 * r1 as u128;
        let c = x1 as u128 * r0 as u128;
        let mid = a as u128 + (b as u64) as u128 + (c as u64) as u128;
        let qhat = x1
            .wrapping_mul(r1)
            .wrapping_add((b >> 64) as u64)
            .wrapping_add((c >> 64) as u64)
            .wrapping_add((mid >> 64) as u64);
        let mut r = x0.wrapping_sub(qhat.wrapping_mul(self.value));
        while r >= self.value {
            r -= self.value;
        }
        r
    }

    /// Reduces any 128-bit value.
    #[inline(always)]
    pub fn reduce_wide(&self, x: u128) -> u64 {
        let hi = (x >> 64) as u64;
        if hi >= self.value {
            self.reduce_u128((((hi % self.value) as u128) << 64) | (x as u64 as u128))
        } else {
            self.reduce_u128(x)
        }
    }

    #[inline(always)]
    pub fn reduce(&self, x: u64) -> u64 {
        if x >= self.value {
            self.reduce_u128(x as u128)
        } else {
            x
        }
    }

    /// Maps a signed value into `[0, q)`.
    #[inline]
    pub fn reduce_i64(&self, x: i64) -> u64 {
        if x >= 0 {
            self.reduce(x as u64)
        } else {
            self.neg(self.reduce(x.unsigned_abs()))
        }
    }

    #[inline(always)]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline(always)]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline(always)]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    #[inline(always)]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    pub fn pow(&self, base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.value;
        let mut b = self.reduce(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        acc
    }

    /// Inverse via Fermat; `value` must be prime and `a` nonzero mod it.
    pub fn inv(&self, a: u64) -> Option<u64> {
        let a = self.reduce(a);
        if a == 0 {
            None
        } else {
            Some(self.pow(a, self.value - 2))
        }
    }

    /// Shoup companion of a constant `w < q`: floor(w * 2^64 / q).
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        debug_assert!(w < self.value);
        (((w as u128) << 64) / self.value as u128) as u64
    }

    /// `x * w mod q` for any `x < 2^64`, result in `[0, 2q)`.
    #[inline(always)]
    pub fn mul_shoup_lazy(&self, x: u64, w: u64, w_shoup: u64) -> u64 {
        let qhat = ((x as u128 * w_shoup as u128) >> 64) as u64;
        x.wrapping_mul(w)
            .wrapping_sub(qhat.wrapping_mul(self.value))
    }

    #[inline(always)]
    pub fn mul_shoup(&self, x: u64, w: u64, w_shoup: u64) -> u64 {
        let r = self.mul_shoup_lazy(x, w, w_shoup);
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    /// Centered representative in `(-q/2, q/2]`.
    #[inline]
    pub fn center(&self, a: u64) -> i64 {
        if a > self.value / 2 {
            a as i64 - self.value as i64
        } else {
            a as i64
        }
    }
}

fn mulmod_u128(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn powmod_u128(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mulmod_u128(acc, b, m);
        }
        b = mulmod_u128(b, b, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &WITNESSES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'outer: for &a in &WITNESSES {
        let mut x = powmod_u128(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod_u128(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// Primes of exactly `bits` bits, congruent to 1 mod `2n`, in descending
/// order, skipping anything in `exclude`.
pub fn ntt_primes(bits: u32, n: usize, count: usize, exclude: &[u64]) -> Option<Vec<u64>> {
    assert!(bits >= 2 && bits <= Modulus::MAX_BITS);
    let step = 2 * n as u64;
    let upper = 1u64 << bits;
    let lower = 1u64 << (bits - 1);
    // Largest candidate below 2^bits that is 1 mod 2n.
    let mut cand = (upper - 1) / step * step + 1;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if cand < lower || cand < step {
            return None;
        }
        if is_prime(cand) && !exclude.contains(&cand) {
            out.push(cand);
        }
        cand -= step;
    }
    Some(out)
}

/// A generator of the multiplicative group of the prime field `q`.
pub fn primitive_root(q: u64) -> u64 {
    let m = Modulus::new(q);
    let order = q - 1;
    let mut factors = Vec::new();
    let mut rest = order;
    let mut f = 2;
    while f * f <= rest {
        if rest % f == 0 {
            factors.push(f);
            while rest % f == 0 {
                rest /= f;
            }
        }
        f += 1;
    }
    if rest > 1 {
        factors.push(rest);
    }
    (2..q)
        .find(|&g| factors.iter().all(|&f| m.pow(g, order / f) != 1))
        .expect("prime field has a generator")
}

/// A primitive `order`-th root of unity mod `q`; `order` must divide `q - 1`.
pub fn root_of_unity(q: u64, order: u64) -> Option<u64> {
    if (q - 1) % order != 0 {
        return None;
    }
    let m = Modulus::new(q);
    Some(m.pow(primitive_root(q), (q - 1) / order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Q61: u64 = 2305843009213554689;

    proptest! {
        #[test]
        fn barrett_matches_u128_rem(a in any::<u64>(), b in any::<u64>(), which in 0usize..4) {
            let q = [65537u64, 1_152_921_504_606_830_593, (1 << 62) - 57, 97][which];
            let m = Modulus::new(q);
            let (a, b) = (a % q, b % q);
            prop_assert_eq!(m.mul(a, b), mulmod_u128(a, b, q));
        }

        #[test]
        fn barrett_full_range(hi in any::<u64>(), lo in any::<u64>()) {
            let m = Modulus::new((1 << 62) - 57);
            let x = (((hi % m.value()) as u128) << 64) | lo as u128;
            prop_assert_eq!(m.reduce_u128(x) as u128, x % m.value() as u128);
        }

        #[test]
        fn wide_reduction(x in any::<u128>(), which in 0usize..3) {
            let q = [65537u64, Q61, (1 << 62) - 57][which];
            prop_assert_eq!(Modulus::new(q).reduce_wide(x) as u128, x % q as u128);
        }

        #[test]
        fn shoup_matches(x in any::<u64>(), w in any::<u64>()) {
            let m = Modulus::new(Q61);
            let w = w % Q61;
            let ws = m.shoup(w);
            prop_assert_eq!(m.mul_shoup(x % Q61, w, ws), mulmod_u128(x, w, Q61));
            let lazy = m.mul_shoup_lazy(x, w, ws);
            prop_assert!(lazy < 2 * Q61);
            prop_assert_eq!(lazy % Q61, mulmod_u128(x, w, Q61));
        }
    }

    #[test]
    fn prime_search() {
        assert!(is_prime(65537));
        assert!(!is_prime(65535));
        assert!(is_prime(Q61));
        let ps = ntt_primes(50, 1 << 14, 3, &[]).unwrap();
        for &p in &ps {
            assert!(is_prime(p));
            assert_eq!(p % (1 << 15), 1);
            assert_eq!(64 - p.leading_zeros(), 50);
        }
        assert!(ps.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn roots() {
        let w = root_of_unity(65537, 32).unwrap();
        let m = Modulus::new(65537);
        assert_eq!(m.pow(w, 32), 1);
        assert_ne!(m.pow(w, 16), 1);
        assert_eq!(m.inv(3).map(|i| m.mul(i, 3)), Some(1));
        assert_eq!(m.inv(0), None);
    }
}
