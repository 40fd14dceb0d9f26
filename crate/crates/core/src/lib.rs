//! Arithmetic core of a hybrid homomorphic encryption toolkit for federated
//! averaging: the prime field F_65537, RNS arithmetic in `Z_q[X]/(X^N + 1)`,
//! the BFV scheme, the PASTA stream cipher, homomorphic evaluation of PASTA
//! decryption (transciphering), and the weight codec that maps model weights
//! into the field.
//!
//! The crate is `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod arith;
pub mod batch;
pub mod bfv;
pub mod codec;
pub mod error;
pub mod field;
pub mod hesd;
pub mod ntt;
pub mod pasta;
pub mod ring;
pub mod rng;

pub use error::{Error, Result};
pub use field::{field_op, FieldElement, FieldOp, P};
pub use ring::{ring_mul, Domain, RingContext, RingElement};
