//! The BFV scheme over `R_q = Z_q[X]/(X^N + 1)` with plaintext modulus
//! 65537 and batched slots.
//!
//! Ciphertexts live in the NTT domain over a prefix of the modulus chain
//! (their *level*). Multiplication uses base extension into an auxiliary RNS
//! basis; relinearization and rotations use key switching with one digit per
//! chain prime. Every ciphertext carries a heuristic estimate of its
//! invariant noise; [`noise_budget`] measures the exact value with the
//! secret key.

mod eval;
mod keys;
mod keyswitch;
mod mul;
pub(crate) mod noise;
mod params;
mod serial;

pub use eval::{
    decrypt, decrypt_unchecked, encrypt, he_add, he_mul, he_mul_relin, he_negate, he_plain_add,
    he_plain_mul, he_rotate, he_row_swap, he_square_relin, he_sub, mod_drop_to, noise_budget,
    noise_budget_fractional, relinearize,
};
pub use keys::{
    keygen, BfvKeySet, EvaluationKeys, GaloisKeys, KeySwitchKey, PublicKey, RelinKey,
    RotationSteps, SecretKey,
};
pub use params::{BfvParams, SecurityPreset};
pub use serial::{peek_type, ObjectType, FORMAT_VERSION, MAGIC};

pub(crate) use eval::{plain_dot, PlainAddOperand, PlainMulOperand};
pub(crate) use keyswitch::Hoisted;

use alloc::vec::Vec;

use crate::ring::RingElement;

/// A BFV ciphertext of two components (three before relinearization).
#[derive(Clone, Debug)]
pub struct Ciphertext {
    params: BfvParams,
    level: usize,
    parts: Vec<RingElement>,
    // log2 of the estimated invariant noise, relative to 1
    noise: f64,
}

impl Ciphertext {
    pub fn params(&self) -> &BfvParams {
        &self.params
    }

    pub fn size(&self) -> usize {
        self.parts.len()
    }

    /// Number of chain primes dropped so far.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn parts(&self) -> &[RingElement] {
        &self.parts
    }

    /// Cached noise-budget estimate in bits, clamped at zero.
    pub fn estimated_budget(&self) -> f64 {
        (-self.noise - 1.0).max(0.0)
    }

    /// Serialized size in bytes.
    pub fn serialized_len(&self) -> usize {
        serial::HEADER_LEN + self.parts.iter().map(|p| p.serialized_len()).sum::<usize>()
    }
}

impl PartialEq for Ciphertext {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.parts == other.parts
    }
}
