use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed-point multiplier `M ≈ m0 · 2^-shift` with `m0` normalized into
/// `[2^30, 2^31)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Requantizer {
    pub m0: i64,
    pub shift: u32,
}

pub const M0_MIN: i64 = 1 << 30;
pub const M0_LIMIT: i64 = 1 << 31;
pub const MAX_SHIFT: u32 = 62;

impl Requantizer {
    pub fn from_real(m: f64) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::Range(format!("requantization multiplier {m} must be positive and finite")));
        }
        // m = f * 2^e with f in [0.5, 1)
        let mut e = m.log2().floor() as i32 + 1;
        let mut f = m / 2f64.powi(e);
        while f >= 1.0 {
            f /= 2.0;
            e += 1;
        }
        while f < 0.5 {
            f *= 2.0;
            e -= 1;
        }
        let mut m0 = (f * M0_LIMIT as f64).round() as i64;
        if m0 == M0_LIMIT {
            m0 = M0_MIN;
            e += 1;
        }
        let shift = 31 - e;
        if shift < 1 || shift > MAX_SHIFT as i32 {
            return Err(Error::Range(format!("multiplier {m} outside the representable shift range")));
        }
        Ok(Requantizer { m0, shift: shift as u32 })
    }

    pub fn multiplier(&self) -> f64 {
        self.m0 as f64 / 2f64.powi(self.shift as i32)
    }

    pub fn validate(&self) -> Result<()> {
        if !(M0_MIN..M0_LIMIT).contains(&self.m0) || !(1..=MAX_SHIFT).contains(&self.shift) {
            return Err(Error::Quant(format!("requantizer (m0={}, shift={}) not normalized", self.m0, self.shift)));
        }
        Ok(())
    }

    /// `round(acc · m0 / 2^shift)`, halves away from zero. Exact for any
    /// 32-bit accumulator.
    #[inline]
    pub fn apply(&self, acc: i64) -> i64 {
        let p = acc as i128 * self.m0 as i128;
        let half = 1i128 << (self.shift - 1);
        let mag = (p.abs() + half) >> self.shift;
        (if p < 0 { -mag } else { mag }) as i64
    }
}
