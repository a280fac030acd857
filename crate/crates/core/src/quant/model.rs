use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::{argmax, ConvKind, Seq};
use crate::nn::{Layer, ModelConfig, ModelGraph};
use crate::quant::fold::{fused_plan, FusedOp};
use crate::quant::params::{check_bits, qrange, QuantParams};
use crate::quant::qat::{bias_limit, mac_tensors, QatState};
use crate::quant::requant::Requantizer;

pub const QMODEL_FORMAT: &str = "vibeswipe-qmodel";
pub const QMODEL_VERSION: u32 = 1;

/// Time-major integer tensor.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IntSeq {
    pub len: usize,
    pub ch: usize,
    pub data: Vec<i32>,
}

impl IntSeq {
    pub fn from_vec(len: usize, ch: usize, data: Vec<i32>) -> Self {
        assert_eq!(data.len(), len * ch);
        IntSeq { len, ch, data }
    }

    pub fn row(&self, t: usize) -> &[i32] {
        &self.data[t * self.ch..(t + 1) * self.ch]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacKind {
    Conv,
    Depthwise,
    Pointwise,
    Dense,
}

impl MacKind {
    pub fn name(self) -> &'static str {
        match self {
            MacKind::Conv => "conv",
            MacKind::Depthwise => "depthwise",
            MacKind::Pointwise => "pointwise",
            MacKind::Dense => "dense",
        }
    }
}

/// Integer multiply-accumulate layer with fused BatchNorm and optional ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QMac {
    pub kind: MacKind,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub weights: Vec<i32>,
    pub bias: Vec<i32>,
    pub weight_qp: QuantParams,
    pub input_qp: QuantParams,
    pub output_qp: QuantParams,
    pub requant: Requantizer,
    pub relu: bool,
}

impl QMac {
    pub fn taps(&self) -> usize {
        match self.kind {
            MacKind::Depthwise => self.kernel,
            _ => self.kernel * self.in_ch,
        }
    }

    /// Output channel vector for the input window `rows` (`kernel`
    /// consecutive time steps, time-major).
    pub fn compute(&self, rows: &[i32], out: &mut [i32]) {
        let (zi, zw) = (self.input_qp.zero_point as i64, self.weight_qp.zero_point as i64);
        let taps = self.taps();
        for (o, slot) in out.iter_mut().enumerate() {
            let mut acc = self.bias[o] as i64;
            match self.kind {
                MacKind::Depthwise => {
                    for k in 0..self.kernel {
                        acc += (rows[k * self.in_ch + o] as i64 - zi) * (self.weights[o * taps + k] as i64 - zw);
                    }
                }
                _ => {
                    for (x, w) in rows.iter().zip(&self.weights[o * taps..(o + 1) * taps]) {
                        acc += (*x as i64 - zi) * (*w as i64 - zw);
                    }
                }
            }
            debug_assert!(acc >= i32::MIN as i64 && acc <= i32::MAX as i64, "accumulator overflow");
            *slot = requantize(acc, &self.requant, &self.output_qp, self.relu);
        }
    }
}

fn requantize(acc: i64, r: &Requantizer, out: &QuantParams, relu: bool) -> i32 {
    let z = out.zero_point as i64;
    let mut q = (z + r.apply(acc)).clamp(out.qmin() as i64, out.qmax() as i64);
    if relu {
        q = q.max(z);
    }
    q as i32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QGap {
    pub len: usize,
    pub ch: usize,
    pub input_qp: QuantParams,
    pub output_qp: QuantParams,
    pub requant: Requantizer,
}

impl QGap {
    pub fn finish(&self, sums: &[i64], out: &mut [i32]) {
        for (s, o) in sums.iter().zip(out) {
            *o = requantize(*s, &self.requant, &self.output_qp, false);
        }
    }

    /// Zero-point corrected contribution of one input row.
    pub fn accumulate(&self, row: &[i32], sums: &mut [i64]) {
        let z = self.input_qp.zero_point as i64;
        for (s, &x) in sums.iter_mut().zip(row) {
            *s += x as i64 - z;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum QLayer {
    Mac(QMac),
    MaxPool { kernel: usize, stride: usize },
    Gap(QGap),
}

impl QLayer {
    pub fn name(&self) -> &'static str {
        match self {
            QLayer::Mac(m) => m.kind.name(),
            QLayer::MaxPool { .. } => "maxpool",
            QLayer::Gap(_) => "gap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedModel {
    pub format: String,
    pub version: u32,
    pub bits: u32,
    pub config: Option<ModelConfig>,
    pub input_len: usize,
    pub input_ch: usize,
    pub input_qp: QuantParams,
    pub layers: Vec<QLayer>,
}

/// Fold, quantize and derive requantizers. Activation parameters come from
/// `observers` (QAT) or, when absent, from min/max over `calibration`.
pub fn quantize_model(
    graph: &ModelGraph,
    bits: u32,
    calibration: &[Seq],
    observers: Option<&QatState>,
) -> Result<QuantizedModel> {
    check_bits(bits)?;
    let state = match observers {
        Some(s) if s.bits == bits && s.is_ready() => s.clone(),
        Some(s) if s.bits != bits => {
            return Err(Error::Quant(format!("observers were trained at {} bits, not {bits}", s.bits)))
        }
        _ => QatState::calibrate(graph, bits, calibration)?,
    };
    let plan = fused_plan(graph)?;
    let shapes = graph.shapes();
    let input_qp = QuantParams::input(bits);
    let mut qp = input_qp;
    let mut layers = Vec::with_capacity(plan.len());
    for (i, op) in plan.iter().enumerate() {
        match *op {
            FusedOp::Mac { layer, bn, relu } => {
                let bn = bn.map(|j| match &graph.layers()[j] {
                    Layer::BatchNorm(b) => b,
                    _ => unreachable!(),
                });
                let t = mac_tensors(graph, layer, bn, &qp, bits)?;
                let out_qp = state.activation_qparams(i)?;
                let kind = match (&graph.layers()[layer], t.shape.kind) {
                    (Layer::Dense(_), _) => MacKind::Dense,
                    (_, ConvKind::Standard) => MacKind::Conv,
                    (_, ConvKind::Depthwise) => MacKind::Depthwise,
                    (_, ConvKind::Pointwise) => MacKind::Pointwise,
                };
                let requant = Requantizer::from_real(t.bias_scale / out_qp.scale)?;
                layers.push(QLayer::Mac(QMac {
                    kind,
                    in_ch: t.shape.in_ch,
                    out_ch: t.shape.out_ch,
                    kernel: t.shape.kernel,
                    weights: t.w_int,
                    bias: t.b_int,
                    weight_qp: t.qp_w,
                    input_qp: qp,
                    output_qp: out_qp,
                    requant,
                    relu,
                }));
                qp = out_qp;
            }
            FusedOp::Pool { kernel, stride } => layers.push(QLayer::MaxPool { kernel, stride }),
            FusedOp::Gap { layer } => {
                let s = shapes[layer];
                let out_qp = state.activation_qparams(i)?;
                let requant = Requantizer::from_real(qp.scale / (s.in_len as f64 * out_qp.scale))?;
                layers.push(QLayer::Gap(QGap { len: s.in_len, ch: s.in_ch, input_qp: qp, output_qp: out_qp, requant }));
                qp = out_qp;
            }
        }
    }
    let qm = QuantizedModel {
        format: QMODEL_FORMAT.into(),
        version: QMODEL_VERSION,
        bits,
        config: graph.config,
        input_len: graph.input_len(),
        input_ch: graph.input_ch(),
        input_qp,
        layers,
    };
    qm.validate()?;
    Ok(qm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QShape {
    pub in_len: usize,
    pub in_ch: usize,
    pub out_len: usize,
    pub out_ch: usize,
}

impl QuantizedModel {
    pub fn n_classes(&self) -> usize {
        self.shapes().ok().and_then(|s| s.last().map(|l| l.out_ch)).unwrap_or(0)
    }

    /// Per-layer shapes; errors on any inconsistency.
    pub fn shapes(&self) -> Result<Vec<QShape>> {
        let mut len = self.input_len;
        let mut ch = self.input_ch;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let bad = |r: &str| Error::Quant(format!("layer {i} ({}): {r}", l.name()));
            let (ol, oc) = match l {
                QLayer::Mac(m) => {
                    if m.in_ch != ch || m.kernel == 0 || m.kernel > len {
                        return Err(bad("input shape mismatch"));
                    }
                    match m.kind {
                        MacKind::Depthwise if m.out_ch != m.in_ch => return Err(bad("depthwise must keep channels")),
                        MacKind::Pointwise | MacKind::Dense if m.kernel != 1 => return Err(bad("kernel must be 1")),
                        MacKind::Dense if len != 1 => return Err(bad("dense input must be a single vector")),
                        _ => {}
                    }
                    let wl = m.out_ch.checked_mul(m.taps()).ok_or_else(|| bad("weight size overflow"))?;
                    if m.weights.len() != wl || m.bias.len() != m.out_ch || m.out_ch == 0 {
                        return Err(bad("parameter lengths do not match"));
                    }
                    (len + 1 - m.kernel, m.out_ch)
                }
                QLayer::MaxPool { kernel, stride } => {
                    if *kernel == 0 || *stride == 0 || len < *kernel {
                        return Err(bad("invalid pooling window"));
                    }
                    ((len - kernel) / stride + 1, ch)
                }
                QLayer::Gap(g) => {
                    if g.len != len || g.ch != ch || len == 0 {
                        return Err(bad("declared length does not match its input"));
                    }
                    (1, ch)
                }
            };
            out.push(QShape { in_len: len, in_ch: ch, out_len: ol, out_ch: oc });
            len = ol;
            ch = oc;
        }
        Ok(out)
    }

    /// Structural and numeric checks; a validated model can run through
    /// [`int_forward`] without overflow.
    pub fn validate(&self) -> Result<()> {
        if self.format != QMODEL_FORMAT || self.version != QMODEL_VERSION {
            return Err(Error::Quant(format!("unsupported format {} v{}", self.format, self.version)));
        }
        check_bits(self.bits).map_err(|e| Error::Quant(e.to_string()))?;
        if self.input_len == 0 || self.input_ch == 0 || self.layers.is_empty() {
            return Err(Error::Quant("empty model".into()));
        }
        let shapes = self.shapes()?;
        if shapes.last().map(|s| s.out_len) != Some(1) {
            return Err(Error::Quant("model must end in a single output vector".into()));
        }
        self.input_qp.validate()?;
        let (wmin, wmax) = qrange(self.bits);
        let mut qp = self.input_qp;
        for (i, l) in self.layers.iter().enumerate() {
            let bad = |r: String| Error::Quant(format!("layer {i} ({}): {r}", l.name()));
            match l {
                QLayer::Mac(m) => {
                    for p in [&m.weight_qp, &m.input_qp, &m.output_qp] {
                        p.validate()?;
                        if p.bits != self.bits {
                            return Err(bad("bitwidth differs from the model".into()));
                        }
                    }
                    if m.input_qp != qp {
                        return Err(bad("input parameters differ from the previous output".into()));
                    }
                    m.requant.validate()?;
                    if m.weights.iter().any(|w| !(wmin..=wmax).contains(w)) {
                        return Err(bad(format!("weight outside [{wmin}, {wmax}]")));
                    }
                    let limit = bias_limit(m.taps(), self.bits);
                    if m.bias.iter().any(|b| (*b as i64).abs() > limit) {
                        return Err(bad("bias can overflow the 32-bit accumulator".into()));
                    }
                    qp = m.output_qp;
                }
                QLayer::MaxPool { .. } => {}
                QLayer::Gap(g) => {
                    g.input_qp.validate()?;
                    g.output_qp.validate()?;
                    g.requant.validate()?;
                    if g.input_qp != qp || g.output_qp.bits != self.bits {
                        return Err(bad("quantization parameters do not chain".into()));
                    }
                    let span = (1i64 << self.bits) - 1;
                    if (g.len as i64).saturating_mul(span) > i32::MAX as i64 {
                        return Err(bad("sum can overflow the 32-bit accumulator".into()));
                    }
                    qp = g.output_qp;
                }
            }
        }
        Ok(())
    }

    /// Quantize a real input with the model's fixed input parameters.
    pub fn quantize_input(&self, x: &Seq) -> IntSeq {
        IntSeq { len: x.len, ch: x.ch, data: x.data.iter().map(|&v| self.input_qp.quantize(v)).collect() }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let qm: QuantizedModel = serde_json::from_str(text)?;
        qm.validate()?;
        Ok(qm)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub fn check_input(qm: &QuantizedModel, x: &IntSeq) -> Result<()> {
    if x.len != qm.input_len || x.ch != qm.input_ch || x.data.len() != x.len * x.ch {
        return Err(Error::Shape(format!("input is {}x{}, model expects {}x{}", x.len, x.ch, qm.input_len, qm.input_ch)));
    }
    let (lo, hi) = (qm.input_qp.qmin(), qm.input_qp.qmax());
    if let Some(v) = x.data.iter().find(|v| !(lo..=hi).contains(*v)) {
        return Err(Error::Range(format!("input value {v} outside [{lo}, {hi}]")));
    }
    Ok(())
}

/// Integer-only reference interpreter; returns the output of every layer.
pub fn int_forward_trace(qm: &QuantizedModel, x: &IntSeq) -> Result<Vec<IntSeq>> {
    check_input(qm, x)?;
    let mut trace: Vec<IntSeq> = Vec::with_capacity(qm.layers.len());
    for layer in &qm.layers {
        let cur = trace.last().unwrap_or(x);
        let next = match layer {
            QLayer::Mac(m) => {
                let out_len = cur.len + 1 - m.kernel;
                let mut y = IntSeq { len: out_len, ch: m.out_ch, data: vec![0; out_len * m.out_ch] };
                for t in 0..out_len {
                    let rows = &cur.data[t * cur.ch..(t + m.kernel) * cur.ch];
                    m.compute(rows, &mut y.data[t * m.out_ch..(t + 1) * m.out_ch]);
                }
                y
            }
            QLayer::MaxPool { kernel, stride } => {
                let out_len = (cur.len - kernel) / stride + 1;
                let mut y = IntSeq { len: out_len, ch: cur.ch, data: Vec::with_capacity(out_len * cur.ch) };
                for t in 0..out_len {
                    for c in 0..cur.ch {
                        let v = (0..*kernel).map(|k| cur.data[(t * stride + k) * cur.ch + c]).max().unwrap();
                        y.data.push(v);
                    }
                }
                y
            }
            QLayer::Gap(g) => {
                let mut sums = vec![0i64; cur.ch];
                for t in 0..cur.len {
                    g.accumulate(cur.row(t), &mut sums);
                }
                let mut y = IntSeq { len: 1, ch: cur.ch, data: vec![0; cur.ch] };
                g.finish(&sums, &mut y.data);
                y
            }
        };
        trace.push(next);
    }
    Ok(trace)
}

/// Integer logits of `x`.
pub fn int_forward(qm: &QuantizedModel, x: &IntSeq) -> Result<Vec<i32>> {
    let mut trace = int_forward_trace(qm, x)?;
    Ok(trace.pop().map(|s| s.data).unwrap_or_default())
}

pub fn int_predict(qm: &QuantizedModel, x: &IntSeq) -> Result<usize> {
    let logits = int_forward(qm, x)?;
    let as_f: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
    Ok(argmax(&as_f))
}
