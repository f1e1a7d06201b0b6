//! Signed Q16.16 fixed-point numbers with saturating, round-to-nearest-even
//! arithmetic.
//!
//! Every operation here is bit-exact and has a direct bit-vector counterpart
//! in the SMT emitter, so changes to rounding or saturation must be mirrored
//! there.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{Bounded, One, Zero};

/// Number of fractional bits.
pub const FRAC_BITS: u32 = 16;
/// Raw value of 1.0.
pub const ONE_RAW: i32 = 1 << FRAC_BITS;

/// A signed 32-bit Q16.16 value: `raw / 2^16`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[repr(transparent)]
pub struct Fx(i32);

/// Result of encoding a real number, with the saturation flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Encoded {
    pub value: Fx,
    pub saturated: bool,
}

impl Fx {
    pub const ZERO: Fx = Fx(0);
    pub const ONE: Fx = Fx(ONE_RAW);
    pub const HALF: Fx = Fx(ONE_RAW / 2);
    pub const MAX: Fx = Fx(i32::MAX);
    pub const MIN: Fx = Fx(i32::MIN);
    /// Smallest positive step, 2^-16.
    pub const EPSILON: Fx = Fx(1);

    #[inline]
    pub const fn from_raw(raw: i32) -> Fx {
        Fx(raw)
    }

    #[inline]
    pub const fn raw(self) -> i32 {
        self.0
    }

    /// Nearest representable value to `r`; ties go to the even raw value and
    /// out-of-range inputs saturate. NaN encodes as zero and is flagged.
    pub fn encode(r: f64) -> Encoded {
        if r.is_nan() {
            return Encoded {
                value: Fx::ZERO,
                saturated: true,
            };
        }
        // Scaling by a power of two is exact in binary floating point.
        let scaled = (r * ONE_RAW as f64).round_ties_even();
        if scaled > i32::MAX as f64 {
            Encoded {
                value: Fx::MAX,
                saturated: true,
            }
        } else if scaled < i32::MIN as f64 {
            Encoded {
                value: Fx::MIN,
                saturated: true,
            }
        } else {
            Encoded {
                value: Fx(scaled as i32),
                saturated: false,
            }
        }
    }

    /// Like [`Fx::encode`] but `None` when the value would saturate.
    pub fn encode_in_range(r: f64) -> Option<Fx> {
        let e = Fx::encode(r);
        (!e.saturated).then_some(e.value)
    }

    /// Exact decoding; every Q16.16 value is representable as an `f64`.
    #[inline]
    pub fn decode(self) -> f64 {
        self.0 as f64 / ONE_RAW as f64
    }

    #[inline]
    pub fn saturating_add(self, rhs: Fx) -> Fx {
        Fx(self.0.saturating_add(rhs.0))
    }

    #[inline]
    pub fn saturating_sub(self, rhs: Fx) -> Fx {
        Fx(self.0.saturating_sub(rhs.0))
    }

    /// 64-bit product shifted right by 16 with round-to-nearest-even, then
    /// saturated to 32 bits.
    #[inline]
    pub fn saturating_mul(self, rhs: Fx) -> Fx {
        let wide = self.0 as i64 * rhs.0 as i64;
        Fx(saturate_i64(shift_right_rne(wide, FRAC_BITS)))
    }

    /// Sign of the activation potential as used by the covering predicates:
    /// `true` (bit 1) iff the value is `>= 0`.
    #[inline]
    pub fn sign_bit(self) -> bool {
        self.0 >= 0
    }

    pub fn clamp(self, lo: Fx, hi: Fx) -> Fx {
        Fx(self.0.clamp(lo.0, hi.0))
    }
}

/// `value / 2^shift` rounded to nearest with ties to even. Arithmetic shift,
/// so negative values round the same way as positive ones.
#[inline]
pub fn shift_right_rne(value: i64, shift: u32) -> i64 {
    if shift == 0 {
        return value;
    }
    let quotient = value >> shift;
    let remainder = value & ((1i64 << shift) - 1);
    let half = 1i64 << (shift - 1);
    if remainder > half || (remainder == half && quotient & 1 == 1) {
        quotient + 1
    } else {
        quotient
    }
}

#[inline]
pub fn saturate_i64(value: i64) -> i32 {
    value.clamp(i32::MIN as i64, i32::MAX as i64) as i32
}

/// Binary sign function over Q16.16 values.
#[inline]
pub fn sign_bit(x: Fx) -> bool {
    x.sign_bit()
}

impl Add for Fx {
    type Output = Fx;
    #[inline]
    fn add(self, rhs: Fx) -> Fx {
        self.saturating_add(rhs)
    }
}

impl Sub for Fx {
    type Output = Fx;
    #[inline]
    fn sub(self, rhs: Fx) -> Fx {
        self.saturating_sub(rhs)
    }
}

impl Mul for Fx {
    type Output = Fx;
    #[inline]
    fn mul(self, rhs: Fx) -> Fx {
        self.saturating_mul(rhs)
    }
}

impl Neg for Fx {
    type Output = Fx;
    #[inline]
    fn neg(self) -> Fx {
        Fx(self.0.saturating_neg())
    }
}

impl Zero for Fx {
    fn zero() -> Fx {
        Fx::ZERO
    }
    fn is_zero(&self) -> bool {
        self.0 == 0
    }
}

impl One for Fx {
    fn one() -> Fx {
        Fx::ONE
    }
}

impl Bounded for Fx {
    fn min_value() -> Fx {
        Fx::MIN
    }
    fn max_value() -> Fx {
        Fx::MAX
    }
}

impl fmt::Debug for Fx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fx({} = {})", self.0, self.decode())
    }
}

/// Shortest decimal that decodes back to the same raw value.
impl fmt::Display for Fx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.decode(), f)
    }
}
