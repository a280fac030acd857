//! Compilation of a quantized model into a linear pipeline of stages.
//!
//! Every stage owns one MAC unit (or none), reads its input through a
//! ready/valid link and writes one output slice (all channels of one time
//! step) per firing. A `Full` link buffers the whole tensor and releases the
//! consumer only once the producer is done; a `PingPong` link holds a single
//! slice, so a depthwise/pointwise pair alternates slice by slice.
//!
//! Cycle costs per output slice, with `o` the per-output overhead:
//!
//! | stage     | cycles per output slice |
//! |-----------|-------------------------|
//! | conv      | `co * (ci * K + o)`     |
//! | depthwise | `c * (K + o)`           |
//! | pointwise | `co * (ci + o)`         |
//! | maxpool   | `c * (kernel + o)`      |
//! | gap       | `L * c + c * (1 + o)`   |
//! | dense     | `co * (ci + o)`         |
//!
//! Before its first firing a stage loads its parameters from the shared
//! weight ROM, costing `fill_per_param` cycles per weight or bias.

use serde::{Deserialize, Serialize};

use crate::accel::device::DeviceProfile;
use crate::error::{Error, Result};
use crate::quant::{MacKind, QGap, QLayer, QMac, QuantParams, QuantizedModel};
use crate::quant::model::{QMODEL_FORMAT, QMODEL_VERSION};

/// Width of a stored bias word.
pub const BIAS_BITS: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkPlan {
    /// Whole tensor buffered; consumer waits for the producer to finish.
    Full,
    /// One slice, written and read alternately.
    PingPong,
}

impl LinkPlan {
    pub fn name(self) -> &'static str {
        match self {
            LinkPlan::Full => "full",
            LinkPlan::PingPong => "ping_pong",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StageOp {
    Mac(QMac),
    MaxPool { kernel: usize, stride: usize },
    Gap(QGap),
    /// Copies each input slice to its output; used to probe the pipeline.
    PassThrough,
}

impl StageOp {
    pub fn name(&self) -> &'static str {
        match self {
            StageOp::Mac(m) => m.kind.name(),
            StageOp::MaxPool { .. } => "maxpool",
            StageOp::Gap(_) => "gap",
            StageOp::PassThrough => "passthrough",
        }
    }
}

/// The two free constants of the cycle model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleParams {
    pub overhead: u64,
    pub fill_per_param: u64,
}

impl Default for CycleParams {
    /// Fitted to the six reference latencies; see [`crate::accel::fit_cycle_params`].
    fn default() -> Self {
        CycleParams { overhead: 2, fill_per_param: 1353 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSchedule {
    pub op: StageOp,
    pub in_len: usize,
    pub in_ch: usize,
    pub out_len: usize,
    pub out_ch: usize,
    /// Plan of the buffer this stage writes.
    pub output: LinkPlan,
    pub cycles_per_output: u64,
    pub fill_cycles: u64,
}

impl LayerSchedule {
    /// Input slices needed for one output.
    pub fn window(&self) -> usize {
        match &self.op {
            StageOp::Mac(m) => m.kernel,
            StageOp::MaxPool { kernel, .. } => *kernel,
            StageOp::Gap(_) => self.in_len,
            StageOp::PassThrough => 1,
        }
    }

    /// Input slices retired per output.
    pub fn step(&self) -> usize {
        match &self.op {
            StageOp::MaxPool { stride, .. } => *stride,
            StageOp::Gap(_) => self.in_len,
            _ => 1,
        }
    }

    /// Loop bounds (out_len, out_ch, in_ch, K).
    pub fn loop_bounds(&self) -> (usize, usize, usize, usize) {
        (self.out_len, self.out_ch, self.in_ch, self.window())
    }

    pub fn mac_units(&self) -> u64 {
        matches!(self.op, StageOp::Mac(_) | StageOp::Gap(_)) as u64
    }

    pub fn has_requantizer(&self) -> bool {
        matches!(self.op, StageOp::Mac(_) | StageOp::Gap(_))
    }

    /// Weights and biases stored for this stage.
    pub fn params(&self) -> (usize, usize) {
        match &self.op {
            StageOp::Mac(m) => (m.weights.len(), m.bias.len()),
            _ => (0, 0),
        }
    }

    /// Elements held by the output buffer.
    pub fn buffer_elements(&self) -> usize {
        match self.output {
            LinkPlan::Full => self.out_len * self.out_ch,
            LinkPlan::PingPong => self.out_ch,
        }
    }

    pub fn total_cycles(&self) -> u64 {
        self.fill_cycles + self.out_len as u64 * self.cycles_per_output
    }
}

/// Per-output cost and parameter fill of a stage under `cycle`.
pub fn stage_timing(op: &StageOp, in_len: usize, in_ch: usize, out_ch: usize, cycle: &CycleParams) -> (u64, u64) {
    let o = cycle.overhead;
    let (ci, co) = (in_ch as u64, out_ch as u64);
    match op {
        StageOp::Mac(m) => {
            let k = m.kernel as u64;
            let per = match m.kind {
                MacKind::Conv => co * (ci * k + o),
                MacKind::Depthwise => co * (k + o),
                MacKind::Pointwise | MacKind::Dense => co * (ci + o),
            };
            (per, cycle.fill_per_param * (m.weights.len() + m.bias.len()) as u64)
        }
        StageOp::MaxPool { kernel, .. } => (ci * (*kernel as u64 + o), 0),
        StageOp::Gap(_) => (in_len as u64 * ci + ci * (1 + o), 0),
        StageOp::PassThrough => (1, 0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceleratorDesign {
    pub device: DeviceProfile,
    pub bits: u32,
    pub input_len: usize,
    pub input_ch: usize,
    pub input_qp: QuantParams,
    pub cycle: CycleParams,
    pub stages: Vec<LayerSchedule>,
}

/// One side of a handshake edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Port {
    Input,
    Stage(usize),
    Output,
}

pub fn compile(qm: &QuantizedModel, device: &DeviceProfile, ping_pong: bool) -> Result<AcceleratorDesign> {
    compile_with(qm, device, ping_pong, CycleParams::default())
}

pub fn compile_with(
    qm: &QuantizedModel,
    device: &DeviceProfile,
    ping_pong: bool,
    cycle: CycleParams,
) -> Result<AcceleratorDesign> {
    qm.validate()?;
    device.validate()?;
    let shapes = qm.shapes()?;
    let mut stages = Vec::with_capacity(qm.layers.len());
    for (i, (layer, s)) in qm.layers.iter().zip(&shapes).enumerate() {
        let op = match layer {
            QLayer::Mac(m) => StageOp::Mac(m.clone()),
            QLayer::MaxPool { kernel, stride } => StageOp::MaxPool { kernel: *kernel, stride: *stride },
            QLayer::Gap(g) => StageOp::Gap(g.clone()),
        };
        let next_is_pointwise = matches!(qm.layers.get(i + 1), Some(QLayer::Mac(m)) if m.kind == MacKind::Pointwise);
        let is_depthwise = matches!(layer, QLayer::Mac(m) if m.kind == MacKind::Depthwise);
        let output = if ping_pong && is_depthwise && next_is_pointwise { LinkPlan::PingPong } else { LinkPlan::Full };
        let (cycles_per_output, fill_cycles) = stage_timing(&op, s.in_len, s.in_ch, s.out_ch, &cycle);
        stages.push(LayerSchedule {
            op,
            in_len: s.in_len,
            in_ch: s.in_ch,
            out_len: s.out_len,
            out_ch: s.out_ch,
            output,
            cycles_per_output,
            fill_cycles,
        });
    }
    let design = AcceleratorDesign {
        device: device.clone(),
        bits: qm.bits,
        input_len: qm.input_len,
        input_ch: qm.input_ch,
        input_qp: qm.input_qp,
        cycle,
        stages,
    };
    design.validate()?;
    Ok(design)
}

impl AcceleratorDesign {
    /// Structural checks: chained shapes, legal link plans and timing that
    /// matches the cycle model.
    pub fn validate(&self) -> Result<()> {
        self.device.validate()?;
        let bad = |i: usize, r: String| Error::Structure(format!("stage {i}: {r}"));
        let (mut len, mut ch) = (self.input_len, self.input_ch);
        for (i, s) in self.stages.iter().enumerate() {
            if s.in_len != len || s.in_ch != ch {
                return Err(bad(i, format!("input {}x{} does not match upstream {len}x{ch}", s.in_len, s.in_ch)));
            }
            if s.out_len == 0 || s.out_ch == 0 {
                return Err(bad(i, "empty output".into()));
            }
            let expected_out = match &s.op {
                StageOp::Mac(m) => {
                    if m.in_ch != s.in_ch || m.out_ch != s.out_ch || m.kernel == 0 || m.kernel > s.in_len {
                        return Err(bad(i, "MAC parameters do not match the stage shape".into()));
                    }
                    (s.in_len + 1 - m.kernel, m.out_ch)
                }
                StageOp::MaxPool { kernel, stride } => {
                    if *kernel == 0 || *stride == 0 || *kernel > s.in_len {
                        return Err(bad(i, "invalid pooling window".into()));
                    }
                    ((s.in_len - kernel) / stride + 1, s.in_ch)
                }
                StageOp::Gap(g) => {
                    if g.len != s.in_len || g.ch != s.in_ch {
                        return Err(bad(i, "GAP length does not match its input".into()));
                    }
                    (1, s.in_ch)
                }
                StageOp::PassThrough => (s.in_len, s.in_ch),
            };
            if (s.out_len, s.out_ch) != expected_out {
                return Err(bad(i, format!("output {}x{} should be {}x{}", s.out_len, s.out_ch, expected_out.0, expected_out.1)));
            }
            if s.output == LinkPlan::PingPong {
                let dw = matches!(&s.op, StageOp::Mac(m) if m.kind == MacKind::Depthwise);
                let pw = matches!(self.stages.get(i + 1).map(|n| &n.op), Some(StageOp::Mac(m)) if m.kind == MacKind::Pointwise);
                if !(dw && pw) {
                    return Err(bad(i, "ping-pong links are only legal from a depthwise to a pointwise stage".into()));
                }
            }
            let (per, fill) = stage_timing(&s.op, s.in_len, s.in_ch, s.out_ch, &self.cycle);
            let fill_ok = matches!(s.op, StageOp::PassThrough) || s.fill_cycles == fill;
            if s.cycles_per_output != per || !fill_ok {
                return Err(bad(i, "timing does not follow the cycle model".into()));
            }
            len = s.out_len;
            ch = s.out_ch;
        }
        let integer = self.integer_layers();
        if !integer.layers.is_empty() {
            integer.validate()?;
        }
        Ok(())
    }

    /// The design's integer layers with probe stages dropped.
    fn integer_layers(&self) -> QuantizedModel {
        let layers = self
            .stages
            .iter()
            .filter_map(|s| match &s.op {
                StageOp::Mac(m) => Some(QLayer::Mac(m.clone())),
                StageOp::MaxPool { kernel, stride } => Some(QLayer::MaxPool { kernel: *kernel, stride: *stride }),
                StageOp::Gap(g) => Some(QLayer::Gap(g.clone())),
                StageOp::PassThrough => None,
            })
            .collect();
        QuantizedModel {
            format: QMODEL_FORMAT.into(),
            version: QMODEL_VERSION,
            bits: self.bits,
            config: None,
            input_len: self.input_len,
            input_ch: self.input_ch,
            input_qp: self.input_qp,
            layers,
        }
    }

    /// Ready/valid edges from the input memory through every stage to the
    /// output register, with the plan of the buffer on each edge.
    pub fn handshake_edges(&self) -> Vec<(Port, Port, LinkPlan)> {
        let n = self.stages.len();
        let mut edges = Vec::with_capacity(n + 1);
        let mut from = Port::Input;
        let mut plan = LinkPlan::Full;
        for (i, s) in self.stages.iter().enumerate() {
            edges.push((from, Port::Stage(i), plan));
            from = Port::Stage(i);
            plan = s.output;
        }
        edges.push((from, Port::Output, plan));
        edges
    }

    /// Total stored parameter bits: weights at the model bitwidth, biases
    /// as 32-bit words.
    pub fn weight_bits(&self) -> u64 {
        self.stages
            .iter()
            .map(|s| {
                let (w, b) = s.params();
                w as u64 * self.bits as u64 + b as u64 * BIAS_BITS
            })
            .sum()
    }

    /// Weight ROM address range `[start, end)` in bits of every MAC stage.
    pub fn weight_map(&self) -> Vec<(usize, u64, u64)> {
        let mut at = 0;
        let mut out = Vec::new();
        for (i, s) in self.stages.iter().enumerate() {
            let (w, b) = s.params();
            if w + b > 0 {
                let bits = w as u64 * self.bits as u64 + b as u64 * BIAS_BITS;
                out.push((i, at, at + bits));
                at += bits;
            }
        }
        out
    }

    /// The integer model the pipeline evaluates, when it has no probe stages.
    pub fn quantized_model(&self) -> Option<QuantizedModel> {
        let probes = self.stages.iter().any(|s| matches!(s.op, StageOp::PassThrough));
        (!probes && !self.stages.is_empty()).then(|| self.integer_layers())
    }
}

/// Closed-form cycle count; equals what [`crate::accel::simulate`] measures.
pub fn analytic_cycles(design: &AcceleratorDesign) -> u64 {
    design.stages.iter().map(LayerSchedule::total_cycles).sum()
}

pub fn latency_ms(cycles: u64, device: &DeviceProfile) -> f64 {
    cycles as f64 / device.clock_hz * 1000.0
}

pub fn energy_mj(latency_ms: f64, power_mw: f64) -> f64 {
    latency_ms * power_mw / 1000.0
}
