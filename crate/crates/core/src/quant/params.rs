use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BITWIDTHS: [u32; 3] = [4, 6, 8];

pub fn check_bits(b: u32) -> Result<()> {
    if BITWIDTHS.contains(&b) {
        Ok(())
    } else {
        Err(Error::Config(format!("bitwidth {b} not in {{4, 6, 8}}")))
    }
}

/// Signed `b`-bit range `[-2^(b-1), 2^(b-1) - 1]`.
pub fn qrange(b: u32) -> (i32, i32) {
    (-(1 << (b - 1)), (1 << (b - 1)) - 1)
}

/// Round half away from zero; the single rounding rule on every path.
#[inline]
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub bits: u32,
    pub scale: f64,
    pub zero_point: i32,
    pub symmetric: bool,
}

impl QuantParams {
    pub fn qmin(&self) -> i32 {
        qrange(self.bits).0
    }

    pub fn qmax(&self) -> i32 {
        qrange(self.bits).1
    }

    /// Fixed parameters for normalized sensor input in [-1, 1).
    pub fn input(bits: u32) -> Self {
        QuantParams { bits, scale: 1.0 / (1u64 << (bits - 1)) as f64, zero_point: 0, symmetric: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=32).contains(&self.bits) {
            return Err(Error::Quant(format!("bitwidth {} unsupported", self.bits)));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::Quant(format!("scale {} must be positive and finite", self.scale)));
        }
        if self.symmetric && self.zero_point != 0 {
            return Err(Error::Quant("symmetric parameters need zero_point 0".into()));
        }
        if self.bits < 32 && !(self.qmin()..=self.qmax()).contains(&self.zero_point) {
            return Err(Error::Quant(format!("zero_point {} outside the {}-bit range", self.zero_point, self.bits)));
        }
        Ok(())
    }

    pub fn quantize(&self, x: f64) -> i32 {
        let q = round_half_away(x / self.scale) + self.zero_point as f64;
        q.clamp(self.qmin() as f64, self.qmax() as f64) as i32
    }

    pub fn dequantize(&self, q: i32) -> f64 {
        (q - self.zero_point) as f64 * self.scale
    }

    pub fn fake_quant(&self, x: f64) -> f64 {
        self.dequantize(self.quantize(x))
    }

    /// Real interval that survives the clamp; the straight-through
    /// gradient is passed only inside it.
    pub fn real_range(&self) -> (f64, f64) {
        (self.dequantize(self.qmin()), self.dequantize(self.qmax()))
    }
}

/// Derive parameters from an observed real range. The range is widened to
/// contain 0 so that zero stays exactly representable.
pub fn qparams_from_range(lo: f64, hi: f64, bits: u32, symmetric: bool) -> Result<QuantParams> {
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::Quant(format!("invalid range [{lo}, {hi}]")));
    }
    let (qmin, qmax) = qrange(bits);
    let lo = lo.min(0.0);
    let hi = hi.max(0.0);
    if symmetric {
        let m = lo.abs().max(hi.abs());
        let scale = if m == 0.0 { 1.0 } else { m / qmax as f64 };
        return Ok(QuantParams { bits, scale, zero_point: 0, symmetric });
    }
    if hi == lo {
        return Ok(QuantParams { bits, scale: 1.0, zero_point: 0, symmetric });
    }
    let scale = (hi - lo) / (qmax - qmin) as f64;
    let zp = round_half_away(qmin as f64 - lo / scale).clamp(qmin as f64, qmax as f64) as i32;
    Ok(QuantParams { bits, scale, zero_point: zp, symmetric })
}

pub fn derive_qparams(values: &[f64], bits: u32, symmetric: bool) -> Result<QuantParams> {
    if values.is_empty() {
        return Err(Error::Quant("cannot derive parameters from an empty tensor".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Quant("tensor contains NaN or infinite values".into()));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    qparams_from_range(lo, hi, bits, symmetric)
}

pub fn fake_quant(x: &[f64], qp: &QuantParams) -> Vec<f64> {
    x.iter().map(|&v| qp.fake_quant(v)).collect()
}
