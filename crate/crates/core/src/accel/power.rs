use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::accel::fit::nnls;
use crate::accel::resources::ResourceReport;
use crate::error::{Error, Result};

/// Resource usage paired with a measured (or reported) power figure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub luts: f64,
    /// 36 Kbit blocks.
    pub bram_blocks: f64,
    pub dsps: f64,
    pub bits: u32,
    pub power_mw: f64,
}

impl PowerSample {
    pub fn from_report(r: &ResourceReport, power_mw: f64) -> Self {
        PowerSample { luts: r.luts as f64, bram_blocks: r.bram_blocks(), dsps: r.dsps as f64, bits: r.bits, power_mw }
    }

    fn features(&self) -> [f64; 5] {
        [1.0, self.luts, self.bram_blocks, self.dsps, self.bits as f64 * self.dsps]
    }
}

/// Linear power surrogate: static power plus per-LUT, per-BRAM-block and
/// per-DSP terms, and a switching proxy of bitwidth times DSPs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub calibrated: bool,
    pub p_static: f64,
    pub per_lut: f64,
    pub per_bram_block: f64,
    pub per_dsp: f64,
    pub per_dsp_bit: f64,
}

impl PowerModel {
    pub fn uncalibrated() -> Self {
        PowerModel { calibrated: false, p_static: 0.0, per_lut: 0.0, per_bram_block: 0.0, per_dsp: 0.0, per_dsp_bit: 0.0 }
    }

    pub fn predict(&self, s: &PowerSample) -> Result<f64> {
        if !self.calibrated {
            return Err(Error::Uncalibrated);
        }
        let c = [self.p_static, self.per_lut, self.per_bram_block, self.per_dsp, self.per_dsp_bit];
        Ok(c.iter().zip(s.features()).map(|(c, f)| c * f).sum())
    }

    pub fn validate(&self) -> Result<()> {
        let c = [self.p_static, self.per_lut, self.per_bram_block, self.per_dsp, self.per_dsp_bit];
        if c.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Calibration("power coefficients must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

pub fn estimate_power(report: &ResourceReport, model: &PowerModel) -> Result<f64> {
    model.predict(&PowerSample::from_report(report, 0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub model: PowerModel,
    /// Predicted minus measured, per row (mW).
    pub residuals: Vec<f64>,
    pub max_rel_residual: f64,
}

/// Nonnegative least-squares fit of the surrogate to `rows`.
pub fn calibrate_power(rows: &[PowerSample]) -> Result<Calibration> {
    if rows.len() < 4 {
        return Err(Error::Calibration(format!("need at least 4 rows, got {}", rows.len())));
    }
    if rows.iter().any(|r| r.features().iter().chain([&r.power_mw]).any(|v| !v.is_finite())) {
        return Err(Error::Calibration("non-finite calibration row".into()));
    }
    let a = DMatrix::from_fn(rows.len(), 5, |i, j| rows[i].features()[j]);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.power_mw));
    let x = nnls(&a, &y)?;
    let model = PowerModel {
        calibrated: true,
        p_static: x[0],
        per_lut: x[1],
        per_bram_block: x[2],
        per_dsp: x[3],
        per_dsp_bit: x[4],
    };
    let residuals: Vec<f64> = rows.iter().map(|r| model.predict(r).map(|p| p - r.power_mw)).collect::<Result<_>>()?;
    let max_rel_residual =
        residuals.iter().zip(rows).map(|(e, r)| (e / r.power_mw).abs()).fold(0.0, f64::max);
    Ok(Calibration { model, residuals, max_rel_residual })
}
