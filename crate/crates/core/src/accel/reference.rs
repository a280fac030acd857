//! Published operating points of the reference designs on an XC7S25 at
//! 100 MHz, used to calibrate the cycle and power surrogates and as fixed
//! comparison rows in reports.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::accel::design::{analytic_cycles, compile_with, AcceleratorDesign, CycleParams};
use crate::accel::device::DeviceProfile;
use crate::accel::fit::nnls;
use crate::accel::power::{calibrate_power, Calibration, PowerModel, PowerSample};
use crate::dataio::SplitMethod;
use crate::error::{Error, Result};
use crate::nn::{build_model, Arch, ModelConfig, Seq};
use crate::quant::quantize_model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub split: SplitMethod,
    pub arch: Arch,
    pub blocks: usize,
    pub bits: u32,
    pub bs: usize,
    pub lr: f64,
    pub fp32_accuracy: f64,
    pub quant_accuracy: f64,
    pub lut_pct: f64,
    pub bram_pct: f64,
    pub dsp_pct: f64,
    pub latency_ms: f64,
    pub power_mw: f64,
    pub energy_mj: f64,
}

const fn row(
    split: SplitMethod,
    arch: Arch,
    blocks: usize,
    bits: u32,
    bs: usize,
    lr: f64,
    acc: (f64, f64),
    res: (f64, f64, f64),
    hw: (f64, f64, f64),
) -> ReferenceRow {
    ReferenceRow {
        split,
        arch,
        blocks,
        bits,
        bs,
        lr,
        fp32_accuracy: acc.0,
        quant_accuracy: acc.1,
        lut_pct: res.0,
        bram_pct: res.1,
        dsp_pct: res.2,
        latency_ms: hw.0,
        power_mw: hw.1,
        energy_mj: hw.2,
    }
}

use Arch::{Cnn, SepCnn};
use SplitMethod::{Aos, Loso, Ps};

pub const REFERENCE_ROWS: [ReferenceRow; 6] = [
    row(Ps, Cnn, 3, 6, 32, 5.082e-4, (0.998, 0.996), (13.35, 50.00, 7.50), (9.22, 129.0, 1.189)),
    row(Ps, SepCnn, 3, 8, 48, 5.550e-4, (0.952, 0.952), (19.74, 66.67, 11.25), (6.83, 163.0, 1.113)),
    row(Loso, Cnn, 5, 6, 56, 3.251e-4, (0.744, 0.738), (18.98, 73.33, 10.00), (20.94, 152.0, 3.182)),
    row(Loso, SepCnn, 3, 6, 56, 3.330e-4, (0.702, 0.675), (16.08, 50.00, 11.25), (6.83, 146.0, 0.996)),
    row(Aos, Cnn, 4, 8, 32, 4.810e-4, (0.948, 0.941), (19.08, 83.33, 8.75), (13.32, 159.0, 2.118)),
    row(Aos, SepCnn, 5, 8, 48, 9.967e-4, (0.930, 0.909), (29.82, 96.67, 16.25), (11.16, 199.0, 2.221)),
];

/// Figures that describe physical hardware or an external baseline; they are
/// reported as constants and never recomputed.
pub mod fixed {
    /// Measured vs simulated latency deviation on the board (percent).
    pub const HW_LATENCY_DEVIATION_PCT: f64 = 1.95;
    /// Measured vs estimated power deviation on the board (percent).
    pub const HW_POWER_DEVIATION_PCT: f64 = 5.6;
    /// Parameters of the spectrogram 2D-CNN baseline.
    pub const BASELINE_2D_CNN_PARAMS: u64 = 369_000_000;
    /// Spectrogram input of the baseline (frequency bins x frames).
    pub const BASELINE_INPUT: (usize, usize) = (4096, 90);
    /// Average FP32 test accuracy of the baseline per split method, on the
    /// by-person and by-table datasets.
    pub const BASELINE_2D_CNN_ACCURACY: [(&str, f64, f64); 3] = [("PS", 0.994, 0.980), ("LOSO", 0.671, 0.499), ("AOS", 0.897, 0.841)];
    /// End-to-end latency of the baseline (feature extraction + inference).
    pub const BASELINE_LATENCY_MS: f64 = 365.0;
    /// BRAM utilization of the 8-bit SepCNN-3 without / with ping-pong.
    pub const PING_PONG_BRAM_PCT: (f64, f64) = (97.78, 66.67);
    /// LUT utilization of the same pair.
    pub const PING_PONG_LUT_PCT: (f64, f64) = (20.62, 19.74);
}

impl ReferenceRow {
    pub fn power_sample(&self, device: &DeviceProfile) -> PowerSample {
        PowerSample {
            luts: self.lut_pct / 100.0 * device.luts as f64,
            bram_blocks: self.bram_pct / 100.0 * device.bram_blocks as f64,
            dsps: (self.dsp_pct / 100.0 * device.dsps as f64).round(),
            bits: self.bits,
            power_mw: self.power_mw,
        }
    }

    pub fn cycles(&self, device: &DeviceProfile) -> u64 {
        (self.latency_ms * device.clock_hz / 1000.0).round() as u64
    }
}

/// Surrogate fitted to the reference rows.
pub fn reference_calibration() -> Result<Calibration> {
    let dev = DeviceProfile::xc7s25();
    calibrate_power(&REFERENCE_ROWS.map(|r| r.power_sample(&dev)))
}

pub fn reference_power_model() -> PowerModel {
    reference_calibration().map(|c| c.model).unwrap_or_else(|_| PowerModel::uncalibrated())
}

/// Design of an untrained model; its timing and resources depend only on
/// the architecture and bitwidth.
pub fn structural_design(
    arch: Arch,
    blocks: usize,
    bits: u32,
    device: &DeviceProfile,
    ping_pong: bool,
    cycle: CycleParams,
) -> Result<AcceleratorDesign> {
    let cfg = ModelConfig::new(arch, blocks);
    let graph = build_model(&cfg, 0)?;
    let qm = quantize_model(&graph, bits, &[Seq::zeros(cfg.input_len, cfg.input_ch)], None)?;
    compile_with(&qm, device, ping_pong, cycle)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleFit {
    /// Integer constants used by the simulator.
    pub params: CycleParams,
    /// Unrounded least-squares optimum (overhead, fill per parameter).
    pub raw: (f64, f64),
    /// Relative error of each row under `params`.
    pub rel_errors: Vec<f64>,
}

/// Fits (overhead, fill per parameter) so that analytic cycles of each
/// design match its target, minimizing relative squared error.
pub fn fit_cycle_params(rows: &[(AcceleratorDesign, u64)]) -> Result<CycleFit> {
    if rows.len() < 2 {
        return Err(Error::Calibration("need at least two designs to fit two constants".into()));
    }
    // cycles are affine in (overhead, fill): c = base + o * a + f * b
    let eval = |d: &AcceleratorDesign, o: u64, f: u64| -> Result<f64> {
        let mut d = d.clone();
        d.cycle = CycleParams { overhead: o, fill_per_param: f };
        for s in &mut d.stages {
            let (per, fill) = crate::accel::design::stage_timing(&s.op, s.in_len, s.in_ch, s.out_ch, &d.cycle);
            s.cycles_per_output = per;
            s.fill_cycles = fill;
        }
        Ok(analytic_cycles(&d) as f64)
    };
    let mut a = DMatrix::zeros(rows.len(), 2);
    let mut y = DVector::zeros(rows.len());
    for (i, (d, target)) in rows.iter().enumerate() {
        let base = eval(d, 0, 0)?;
        let t = *target as f64;
        a[(i, 0)] = (eval(d, 1, 0)? - base) / t;
        a[(i, 1)] = (eval(d, 0, 1)? - base) / t;
        y[i] = (t - base) / t;
    }
    let x = nnls(&a, &y)?;
    let params = CycleParams { overhead: x[0].round() as u64, fill_per_param: x[1].round() as u64 };
    let rel_errors = rows
        .iter()
        .map(|(d, target)| Ok((eval(d, params.overhead, params.fill_per_param)? - *target as f64) / *target as f64))
        .collect::<Result<_>>()?;
    Ok(CycleFit { params, raw: (x[0], x[1]), rel_errors })
}

/// The fit over the six reference rows, SepCNN designs with ping-pong.
pub fn reference_cycle_fit() -> Result<CycleFit> {
    let dev = DeviceProfile::xc7s25();
    let rows = REFERENCE_ROWS
        .iter()
        .map(|r| {
            let d = structural_design(r.arch, r.blocks, r.bits, &dev, true, CycleParams::default())?;
            Ok((d, r.cycles(&dev)))
        })
        .collect::<Result<Vec<_>>>()?;
    fit_cycle_params(&rows)
}
