use serde::{Deserialize, Serialize};

use crate::accel::design::{AcceleratorDesign, StageOp};
use crate::accel::device::BRAM18_BITS;

/// Buffers up to this size are built from registers instead of block RAM.
pub const REGISTER_BUFFER_BITS: u64 = 512;

/// Affine LUT costs per stage kind. The defaults were chosen to land near
/// the reference designs' LUT counts; they drive feasibility and relative
/// comparisons, not absolute synthesis numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LutModel {
    pub base: f64,
    pub mac_stage: f64,
    pub mac_stage_per_bit: f64,
    pub other_stage: f64,
    pub bram_buffer: f64,
    pub register_bit: f64,
}

impl Default for LutModel {
    fn default() -> Self {
        LutModel { base: 200.0, mac_stage: 10.0, mac_stage_per_bit: 26.0, other_stage: 20.0, bram_buffer: 130.0, register_bit: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Memory {
    pub name: String,
    pub bits: u64,
    /// RAMB18 primitives; zero when register-mapped.
    pub bram18: u64,
}

impl Memory {
    fn new(name: String, bits: u64) -> Self {
        let bram18 = if bits > REGISTER_BUFFER_BITS { bits.div_ceil(BRAM18_BITS) } else { 0 };
        Memory { name, bits, bram18 }
    }
}

/// Input memory, every stage's output buffer and the weight ROM.
pub fn memories(design: &AcceleratorDesign) -> Vec<Memory> {
    if design.stages.is_empty() {
        return Vec::new();
    }
    let b = design.bits as u64;
    let mut out = vec![Memory::new("input".into(), (design.input_len * design.input_ch) as u64 * b)];
    for (i, s) in design.stages.iter().enumerate() {
        out.push(Memory::new(format!("buf{i}"), s.buffer_elements() as u64 * b));
    }
    out.push(Memory::new("weights".into(), design.weight_bits()));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub bits: u32,
    pub luts: u64,
    pub bram18: u64,
    pub dsps: u64,
    pub lut_pct: f64,
    pub bram_pct: f64,
    pub dsp_pct: f64,
    pub feasible: bool,
}

impl ResourceReport {
    /// Block RAM in 36 Kbit blocks (halves count as 0.5).
    pub fn bram_blocks(&self) -> f64 {
        self.bram18 as f64 / 2.0
    }
}

pub fn estimate_resources(design: &AcceleratorDesign) -> ResourceReport {
    estimate_resources_with(design, &LutModel::default())
}

pub fn estimate_resources_with(design: &AcceleratorDesign, model: &LutModel) -> ResourceReport {
    let mems = memories(design);
    let bram18: u64 = mems.iter().map(|m| m.bram18).sum();
    let dsps: u64 = design.stages.iter().map(|s| s.mac_units()).sum();
    let mut luts = 0.0;
    if !design.stages.is_empty() {
        luts += model.base;
        for s in &design.stages {
            luts += match s.op {
                StageOp::Mac(_) => model.mac_stage + model.mac_stage_per_bit * design.bits as f64,
                _ => model.other_stage,
            };
        }
        for m in &mems {
            luts += if m.bram18 > 0 { model.bram_buffer } else { model.register_bit * m.bits as f64 };
        }
    }
    let luts = luts.round() as u64;
    let dev = &design.device;
    let lut_pct = 100.0 * luts as f64 / dev.luts as f64;
    let bram_pct = 100.0 * bram18 as f64 / dev.bram18_capacity() as f64;
    let dsp_pct = 100.0 * dsps as f64 / dev.dsps as f64;
    ResourceReport {
        bits: design.bits,
        luts,
        bram18,
        dsps,
        lut_pct,
        bram_pct,
        dsp_pct,
        feasible: lut_pct <= 100.0 && bram_pct <= 100.0 && dsp_pct <= 100.0,
    }
}
