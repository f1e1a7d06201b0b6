//! The numeric carrier the network, kernels and covering code are generic
//! over.
//!
//! [`Fx`] is the verified, bit-exact carrier. `f64` and `f32` use the exact
//! logistic function and serve as high-precision references.

use std::fmt::{Debug, Display};
use std::ops::{Add, Mul};

use num_traits::{One, Zero};

use crate::fixed::Fx;
use crate::sigmoid::sigmoid_lut;

pub trait Scalar:
    Copy
    + Debug
    + Display
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Mul<Output = Self>
    + Send
    + Sync
    + 'static
{
    /// Short name used in diagnostics.
    const NAME: &'static str;

    /// Nearest representable value, saturating at the range ends.
    fn from_f64(r: f64) -> Self;

    /// Nearest representable value, or `None` when `r` is out of range.
    fn from_f64_checked(r: f64) -> Option<Self>;

    fn to_f64(self) -> f64;

    /// Logistic activation as realized by this carrier.
    fn sigmoid(self) -> Self;

    #[inline]
    fn relu(self) -> Self {
        if self < Self::zero() {
            Self::zero()
        } else {
            self
        }
    }

    /// Binary sign: `true` iff `self >= 0`.
    #[inline]
    fn sign_bit(self) -> bool {
        self >= Self::zero()
    }
}

impl Scalar for Fx {
    const NAME: &'static str = "q16.16";

    #[inline]
    fn from_f64(r: f64) -> Fx {
        Fx::encode(r).value
    }

    #[inline]
    fn from_f64_checked(r: f64) -> Option<Fx> {
        Fx::encode_in_range(r)
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self.decode()
    }

    #[inline]
    fn sigmoid(self) -> Fx {
        sigmoid_lut(self)
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    fn from_f64(r: f64) -> f64 {
        r
    }

    fn from_f64_checked(r: f64) -> Option<f64> {
        r.is_finite().then_some(r)
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn sigmoid(self) -> f64 {
        1.0 / (1.0 + (-self).exp())
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    fn from_f64(r: f64) -> f32 {
        r as f32
    }

    fn from_f64_checked(r: f64) -> Option<f32> {
        let v = r as f32;
        v.is_finite().then_some(v)
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn sigmoid(self) -> f32 {
        1.0 / (1.0 + (-self).exp())
    }
}
