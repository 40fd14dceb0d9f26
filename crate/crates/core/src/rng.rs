//! Deterministic randomness.
//!
//! Every random draw in the crate comes from ChaCha20 keyed by a 256-bit
//! seed. Independent consumers derive their own stream with [`derive_rng`],
//! which selects ChaCha20 stream `domain` under the same key, so that adding
//! draws to one consumer never shifts another.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

pub type Seed = [u8; 32];

pub type CryptoRng = ChaCha20Rng;

pub fn rng_from_seed(seed: Seed) -> CryptoRng {
    ChaCha20Rng::from_seed(seed)
}

pub fn derive_rng(seed: Seed, domain: u64) -> CryptoRng {
    let mut rng = ChaCha20Rng::from_seed(seed);
    rng.set_stream(domain);
    rng
}

/// Expands a 64-bit seed (e.g. a CLI seed) into a 256-bit one.
pub fn seed_from_u64(x: u64) -> Seed {
    let mut rng = ChaCha20Rng::seed_from_u64(x);
    let mut s = [0u8; 32];
    rng.fill_bytes(&mut s);
    s
}

/// Uniform in `[0, q)` by rejection on the bit length of `q`.
#[inline]
pub fn uniform_mod<R: RngCore>(rng: &mut R, q: u64) -> u64 {
    let bits = 64 - (q - 1).leading_zeros();
    let mask = if bits == 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    };
    loop {
        let x = rng.next_u64() & mask;
        if x < q {
            return x;
        }
    }
}

/// Uniform over {-1, 0, 1}.
#[inline]
pub fn ternary<R: RngCore>(rng: &mut R) -> i64 {
    loop {
        let b = (rng.next_u32() & 0xff) as i64;
        if b < 255 {
            return b % 3 - 1;
        }
    }
}

/// Centered binomial with parameter 21 (standard deviation ~3.24).
#[inline]
pub fn centered_binomial<R: RngCore>(rng: &mut R) -> i64 {
    const MASK: u64 = (1 << 21) - 1;
    let x = rng.next_u64();
    (x & MASK).count_ones() as i64 - ((x >> 21) & MASK).count_ones() as i64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_separated() {
        let s = seed_from_u64(7);
        let a: [u64; 4] = core::array::from_fn(|_| derive_rng(s, 1).next_u64());
        assert!(a.iter().all(|&x| x == a[0]));
        assert_ne!(derive_rng(s, 1).next_u64(), derive_rng(s, 2).next_u64());
    }

    #[test]
    fn samplers_stay_in_range() {
        let mut rng = rng_from_seed([3; 32]);
        let mut sum = 0i64;
        let mut sq = 0i64;
        for _ in 0..20000 {
            let t = ternary(&mut rng);
            assert!((-1..=1).contains(&t));
            let e = centered_binomial(&mut rng);
            assert!(e.abs() <= 21);
            sum += e;
            sq += e * e;
            assert!(uniform_mod(&mut rng, 65537) < 65537);
        }
        let var = sq as f64 / 20000.0 - (sum as f64 / 20000.0).powi(2);
        assert!((var - 10.5).abs() < 0.6, "variance {var}");
    }
}
