//! The prime field F_p with p = 65537, shared by the plaintext space of BFV
//! and by the PASTA cipher.

use core::fmt;
use core::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

/// The plaintext modulus: the Fermat prime 2^16 + 1.
pub const P: u64 = 65537;

#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldElement(u32);

/// Operation selector for [`field_op`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldOp {
    Add,
    Sub,
    Mul,
    Pow,
}

impl FieldElement {
    pub const ZERO: Self = FieldElement(0);
    pub const ONE: Self = FieldElement(1);

    /// Reduces an arbitrary integer into the field.
    #[inline]
    pub const fn new(v: u64) -> Self {
        FieldElement((v % P) as u32)
    }

    #[inline]
    pub fn from_i64(v: i64) -> Self {
        FieldElement(v.rem_euclid(P as i64) as u32)
    }

    #[inline]
    pub const fn value(self) -> u64 {
        self.0 as u64
    }

    /// Square-and-multiply exponentiation.
    pub fn pow(self, mut exp: u64) -> Self {
        let mut acc = FieldElement::ONE;
        let mut base = self;
        while exp > 0 {
            if exp & 1 == 1 {
                acc *= base;
            }
            base *= base;
            exp >>= 1;
        }
        acc
    }

    pub fn inverse(self) -> Option<Self> {
        if self.0 == 0 {
            None
        } else {
            Some(self.pow(P - 2))
        }
    }

    /// Centered lift into `(-p/2, p/2]`.
    pub fn centered(self) -> i64 {
        if self.value() > P / 2 {
            self.value() as i64 - P as i64
        } else {
            self.value() as i64
        }
    }
}

pub fn field_op(a: FieldElement, b: FieldElement, kind: FieldOp) -> FieldElement {
    match kind {
        FieldOp::Add => a + b,
        FieldOp::Sub => a - b,
        FieldOp::Mul => a * b,
        FieldOp::Pow => a.pow(b.value()),
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for FieldElement {
    fn from(v: u64) -> Self {
        FieldElement::new(v)
    }
}

impl Add for FieldElement {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let s = self.0 + rhs.0;
        FieldElement(if s >= P as u32 { s - P as u32 } else { s })
    }
}

impl Sub for FieldElement {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        FieldElement(if self.0 >= rhs.0 {
            self.0 - rhs.0
        } else {
            self.0 + P as u32 - rhs.0
        })
    }
}

impl Neg for FieldElement {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        FieldElement::ZERO - self
    }
}

impl Mul for FieldElement {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        FieldElement(((self.0 as u64 * rhs.0 as u64) % P) as u32)
    }
}

impl AddAssign for FieldElement {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for FieldElement {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl MulAssign for FieldElement {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let f = FieldElement::new;
        assert_eq!(field_op(f(65536), f(1), FieldOp::Add), FieldElement::ZERO);
        assert_eq!(field_op(f(2), f(3), FieldOp::Pow), f(8));
        assert_eq!(field_op(f(0), f(1), FieldOp::Sub), f(65536));
        assert_eq!(f(65537), FieldElement::ZERO);
        assert_eq!(FieldElement::from_i64(-1), f(65536));
        assert_eq!(f(65536).centered(), -1);
        assert_eq!(f(32768).centered(), 32768);
    }

    proptest! {
        #[test]
        fn mul_identity_and_range(x in 0u64..P, y in 0u64..P) {
            let (a, b) = (FieldElement::new(x), FieldElement::new(y));
            prop_assert_eq!(field_op(a, FieldElement::ONE, FieldOp::Mul), a);
            for op in [FieldOp::Add, FieldOp::Sub, FieldOp::Mul, FieldOp::Pow] {
                prop_assert!(field_op(a, b, op).value() < P);
            }
            prop_assert_eq!((a * b).value(), x * y % P);
            prop_assert_eq!((a - b) + b, a);
        }

        #[test]
        fn inverse(x in 1u64..P) {
            let a = FieldElement::new(x);
            prop_assert_eq!(a * a.inverse().unwrap(), FieldElement::ONE);
        }
    }
}
