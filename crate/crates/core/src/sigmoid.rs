//! Piecewise-linear sigmoid over a uniform Q16.16 table.
//!
//! The table covers `[-16, 16]` in steps of `2^-8` (8193 points). Inputs
//! outside the domain clamp to the end entries. Between table points the
//! result is `entry[i] + rne((entry[i+1] - entry[i]) * frac / 256)` where
//! `frac` is the low 8 bits of the offset from the domain start.

use std::sync::OnceLock;

use crate::fixed::{shift_right_rne, Fx, ONE_RAW};

/// Raw value of the lower domain bound, -16.0.
pub const DOMAIN_LO_RAW: i32 = -16 * ONE_RAW;
/// Raw value of the upper domain bound, +16.0.
pub const DOMAIN_HI_RAW: i32 = 16 * ONE_RAW;
/// log2 of the raw table step (2^-8 in value units is 2^8 raw units).
pub const STEP_SHIFT: u32 = 8;
/// Raw table step.
pub const STEP_RAW: i32 = 1 << STEP_SHIFT;
/// Number of table points, both ends inclusive.
pub const TABLE_LEN: usize = ((DOMAIN_HI_RAW - DOMAIN_LO_RAW) / STEP_RAW) as usize + 1;

#[derive(Clone, Debug)]
pub struct SigmoidTable {
    entries: Vec<Fx>,
}

impl SigmoidTable {
    /// Builds the table. The upper half is the rounded logistic function; the
    /// lower half mirrors it as `1 - entry(-x)` so `entry(0)` is exactly 0.5.
    pub fn build() -> SigmoidTable {
        let mid = TABLE_LEN / 2;
        let mut entries = vec![Fx::ZERO; TABLE_LEN];
        for j in 0..=mid {
            let x = j as f64 / STEP_RAW as f64;
            let y = Fx::encode(1.0 / (1.0 + (-x).exp())).value;
            entries[mid + j] = y;
            entries[mid - j] = Fx::from_raw(ONE_RAW - y.raw());
        }
        SigmoidTable { entries }
    }

    pub fn global() -> &'static SigmoidTable {
        static TABLE: OnceLock<SigmoidTable> = OnceLock::new();
        TABLE.get_or_init(SigmoidTable::build)
    }

    pub fn entries(&self) -> &[Fx] {
        &self.entries
    }

    pub fn domain_lo(&self) -> Fx {
        Fx::from_raw(DOMAIN_LO_RAW)
    }

    pub fn domain_hi(&self) -> Fx {
        Fx::from_raw(DOMAIN_HI_RAW)
    }

    pub fn step(&self) -> Fx {
        Fx::from_raw(STEP_RAW)
    }

    /// Input coordinate of table point `i`.
    pub fn point(&self, i: usize) -> Fx {
        Fx::from_raw(DOMAIN_LO_RAW + (i as i32) * STEP_RAW)
    }

    /// Difference to the next entry; zero past the last point.
    pub fn slope(&self, i: usize) -> i32 {
        match self.entries.get(i + 1) {
            Some(next) => next.raw() - self.entries[i].raw(),
            None => 0,
        }
    }

    pub fn eval(&self, x: Fx) -> Fx {
        let clamped = x.raw().clamp(DOMAIN_LO_RAW, DOMAIN_HI_RAW);
        let offset = (clamped - DOMAIN_LO_RAW) as i64;
        let index = (offset >> STEP_SHIFT) as usize;
        let frac = offset & (STEP_RAW as i64 - 1);
        let base = self.entries[index].raw() as i64;
        let delta = self.slope(index) as i64 * frac;
        Fx::from_raw((base + shift_right_rne(delta, STEP_SHIFT)) as i32)
    }
}

/// Table sigmoid using the shared global table.
pub fn sigmoid_lut(x: Fx) -> Fx {
    SigmoidTable::global().eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Independent of the table's construction route (exp vs tanh).
    fn logistic_oracle(x: f64) -> f64 {
        0.5 * (1.0 + (0.5 * x).tanh())
    }

    #[test]
    fn geometry() {
        let t = SigmoidTable::global();
        assert_eq!(TABLE_LEN, 8193);
        assert_eq!(t.entries().len(), 8193);
        assert_eq!(t.domain_lo().decode(), -16.0);
        assert_eq!(t.domain_hi().decode(), 16.0);
        assert_eq!(t.step().decode(), 1.0 / 256.0);
        assert_eq!(t.point(8192), t.domain_hi());
    }

    #[test]
    fn midpoint_is_exactly_half() {
        assert_eq!(sigmoid_lut(Fx::ZERO).raw(), 32768);
        assert_eq!(SigmoidTable::global().entries()[4096].raw(), 32768);
    }

    #[test]
    fn clamps_outside_domain() {
        let t = SigmoidTable::global();
        assert_eq!(sigmoid_lut(Fx::encode(20.0).value), t.entries()[8192]);
        assert_eq!(sigmoid_lut(Fx::encode(-20.0).value), t.entries()[0]);
        assert_eq!(sigmoid_lut(Fx::MAX), t.entries()[8192]);
        assert_eq!(sigmoid_lut(Fx::MIN), t.entries()[0]);
    }

    #[test]
    fn one_is_close_to_logistic() {
        let y = sigmoid_lut(Fx::ONE).decode();
        assert!((y - 0.731059).abs() <= 1.0 / 256.0, "{y}");
        assert!((y - logistic_oracle(1.0)).abs() <= 1.0 / 256.0);
    }

    #[test]
    fn table_points_are_exact_entries() {
        let t = SigmoidTable::global();
        for i in (0..TABLE_LEN).step_by(37) {
            assert_eq!(t.eval(t.point(i)), t.entries()[i]);
        }
    }

    #[test]
    fn entries_in_unit_interval_and_monotone() {
        let e = SigmoidTable::global().entries();
        assert!(e.iter().all(|v| (0..=ONE_RAW).contains(&v.raw())));
        assert!(e.windows(2).all(|w| w[0] <= w[1]));
    }

    proptest! {
        #[test]
        fn monotone(a in any::<i32>(), b in any::<i32>()) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(sigmoid_lut(Fx::from_raw(lo)) <= sigmoid_lut(Fx::from_raw(hi)));
        }

        #[test]
        fn near_symmetric(raw in DOMAIN_LO_RAW..=DOMAIN_HI_RAW) {
            let x = Fx::from_raw(raw);
            let s = sigmoid_lut(x).decode() + sigmoid_lut(-x).decode();
            prop_assert!((s - 1.0).abs() <= 2.0 / 256.0);
        }

        #[test]
        fn interpolation_close_to_logistic(raw in DOMAIN_LO_RAW..=DOMAIN_HI_RAW) {
            let x = Fx::from_raw(raw);
            let err = (sigmoid_lut(x).decode() - logistic_oracle(x.decode())).abs();
            prop_assert!(err <= 1.0 / 256.0);
        }
    }
}
