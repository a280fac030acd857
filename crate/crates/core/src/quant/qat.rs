//! Fake-quantized forward and straight-through backward passes.
//!
//! The forward mirrors the integer pipeline op for op: BatchNorm is folded
//! into its convolution (batch statistics while training, running
//! statistics otherwise), folded weights are
//! quantized per tensor, biases land on the `s_in * s_w` lattice and every
//! fused op output is fake-quantized with observer-derived parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::{self, ConvKind, ConvShape, Seq};
use crate::nn::{BatchNorm, Layer, ModelGraph, BN_MOMENTUM};
use crate::quant::fold::{bn_gain, fold_conv, fused_plan, FusedOp};
use crate::quant::params::{check_bits, derive_qparams, qparams_from_range, QuantParams};

pub const OBSERVER_MOMENTUM: f64 = 0.99;

/// Largest bias magnitude that keeps a `taps`-term accumulator in 32 bits.
pub fn bias_limit(taps: usize, bits: u32) -> i64 {
    let span = (1i64 << bits) - 1;
    i32::MAX as i64 - taps as i64 * span * span
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observer {
    pub lo: f64,
    pub hi: f64,
    pub seen: bool,
}

impl Observer {
    fn empty() -> Self {
        Observer { lo: 0.0, hi: 0.0, seen: false }
    }

    fn update(&mut self, lo: f64, hi: f64, momentum: f64) {
        if self.seen {
            self.lo = momentum * self.lo + (1.0 - momentum) * lo;
            self.hi = momentum * self.hi + (1.0 - momentum) * hi;
        } else {
            *self = Observer { lo, hi, seen: true };
        }
    }

    fn widen(&mut self, lo: f64, hi: f64) {
        if self.seen {
            self.lo = self.lo.min(lo);
            self.hi = self.hi.max(hi);
        } else {
            *self = Observer { lo, hi, seen: true };
        }
    }
}

/// Activation observers, one slot per fused op; pooling reuses its input
/// parameters and has none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QatState {
    pub bits: u32,
    pub momentum: f64,
    pub observers: Vec<Option<Observer>>,
}

impl QatState {
    pub fn new(graph: &ModelGraph, bits: u32) -> Result<Self> {
        check_bits(bits)?;
        let observers = fused_plan(graph)?
            .iter()
            .map(|op| (!matches!(op, FusedOp::Pool { .. })).then(Observer::empty))
            .collect();
        Ok(QatState { bits, momentum: OBSERVER_MOMENTUM, observers })
    }

    /// Observers set to the exact min/max seen over `batch`.
    pub fn calibrate(graph: &ModelGraph, bits: u32, batch: &[Seq]) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::Quant("calibration batch is empty".into()));
        }
        let mut state = QatState::new(graph, bits)?;
        for chunk in batch.chunks(64) {
            run(graph, &mut state, chunk.to_vec(), Mode::Calibrate, None)?;
        }
        Ok(state)
    }

    pub fn is_ready(&self) -> bool {
        self.observers.iter().flatten().all(|o| o.seen)
    }

    pub(crate) fn activation_qparams(&self, op: usize) -> Result<QuantParams> {
        let o = match self.observers.get(op) {
            Some(Some(o)) => o,
            _ => return Err(Error::Quant(format!("op {op} has no activation observer"))),
        };
        if !o.seen {
            return Err(Error::Quant(format!("activation observer {op} has seen no data")));
        }
        qparams_from_range(o.lo, o.hi, self.bits, false)
    }
}

/// Integer weights and biases of one fused MAC op, plus what the
/// straight-through backward needs to reach the unfolded parameters.
pub(crate) struct MacTensors {
    pub shape: ConvShape,
    pub dense: bool,
    pub qp_w: QuantParams,
    pub w_int: Vec<i32>,
    pub b_int: Vec<i32>,
    pub bias_scale: f64,
    /// Unfolded conv weight/bias and BN gain/sigma when BN is folded in.
    pub fold: Option<FoldTape>,
}

pub(crate) struct FoldTape {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub mean: Vec<f64>,
    pub gain: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl MacTensors {
    pub fn weights_real(&self) -> Vec<f64> {
        self.w_int.iter().map(|&q| self.qp_w.dequantize(q)).collect()
    }

    pub fn bias_real(&self) -> Vec<f64> {
        self.b_int.iter().map(|&q| q as f64 * self.bias_scale).collect()
    }
}

pub(crate) fn mac_tensors(
    graph: &ModelGraph,
    layer: usize,
    bn: Option<&BatchNorm>,
    qp_in: &QuantParams,
    bits: u32,
) -> Result<MacTensors> {
    let (shape, dense, w_f, b_f, fold) = match (&graph.layers()[layer], bn) {
        (Layer::Conv(c), Some(bn)) => {
            let (w, b) = fold_conv(c, bn);
            let tape = FoldTape {
                weight: c.weight.clone(),
                bias: c.bias.clone(),
                mean: bn.running_mean.clone(),
                gain: bn_gain(bn),
                sigma: bn.running_var.iter().map(|v| (v + bn.eps).sqrt()).collect(),
            };
            (c.shape(), false, w, b, Some(tape))
        }
        (Layer::Conv(c), None) => (c.shape(), false, c.weight.clone(), c.bias.clone(), None),
        (Layer::Dense(d), _) => {
            let shape =
                ConvShape { kind: ConvKind::Pointwise, in_ch: d.in_features, out_ch: d.out_features, kernel: 1 };
            (shape, true, d.weight.clone(), d.bias.clone(), None)
        }
        (other, _) => return Err(Error::Structure(format!("layer {layer} ({}) is not a MAC layer", other.name()))),
    };
    let qp_w = derive_qparams(&w_f, bits, false)?;
    let w_int: Vec<i32> = w_f.iter().map(|&v| qp_w.quantize(v)).collect();
    let bias_scale = qp_in.scale * qp_w.scale;
    let limit = bias_limit(shape.taps(), bits) as f64;
    let b_int = b_f.iter().map(|&v| (v / bias_scale).round().clamp(-limit, limit) as i32).collect();
    Ok(MacTensors { shape, dense, qp_w, w_int, b_int, bias_scale, fold })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Train,
    Calibrate,
    Eval,
}

enum OpTape {
    Mac { tensors: MacTensors, w_q: Vec<f64>, x: Vec<Seq>, pre: Vec<Seq>, act: Vec<Seq>, range: (f64, f64), relu: bool },
    Pool { in_len: usize, ch: usize, args: Vec<Vec<usize>> },
    Gap { in_len: usize, act: Vec<Seq>, range: (f64, f64) },
}

struct Forward {
    logits: Vec<Seq>,
    tapes: Vec<OpTape>,
    plan: Vec<FusedOp>,
}

fn batch_range(batch: &[Seq]) -> (f64, f64) {
    batch.iter().flat_map(|s| s.data.iter()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

fn fq_seq(x: &Seq, qp: &QuantParams) -> Seq {
    Seq { len: x.len, ch: x.ch, data: x.data.iter().map(|&v| qp.fake_quant(v)).collect() }
}

fn run(
    graph: &ModelGraph,
    state: &mut QatState,
    batch: Vec<Seq>,
    mode: Mode,
    mut bn_updates: Option<&mut Vec<(usize, BatchNorm)>>,
) -> Result<Forward> {
    let plan = fused_plan(graph)?;
    if state.observers.len() != plan.len() {
        return Err(Error::Quant("observer count does not match the model".into()));
    }
    for x in &batch {
        if x.len != graph.input_len() || x.ch != graph.input_ch() {
            return Err(Error::Shape(format!("input is {}x{}", x.len, x.ch)));
        }
    }
    let bits = state.bits;
    let mut qp = QuantParams::input(bits);
    let mut cur: Vec<Seq> = batch.iter().map(|x| fq_seq(x, &qp)).collect();
    let mut tapes = Vec::with_capacity(plan.len());
    for (i, op) in plan.iter().enumerate() {
        match *op {
            FusedOp::Mac { layer, bn, relu } => {
                let mut bn_layer = bn.map(|j| match &graph.layers()[j] {
                    Layer::BatchNorm(b) => b.clone(),
                    _ => unreachable!(),
                });
                if let (Mode::Train, Some(b), Some(j), Layer::Conv(c)) =
                    (mode, bn_layer.as_mut(), bn, &graph.layers()[layer])
                {
                    // Training folds with the batch statistics of the float
                    // conv output, held constant in the backward pass.
                    let s = c.shape();
                    let z: Vec<Seq> = cur.iter().map(|x| ops::conv_forward(x, &c.weight, &c.bias, &s)).collect();
                    let (mean, var) = ops::channel_stats(&z);
                    let n: usize = z.iter().map(|s| s.len).sum();
                    let corr = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
                    let mut running = b.clone();
                    for ch in 0..b.channels {
                        running.running_mean[ch] =
                            (1.0 - BN_MOMENTUM) * b.running_mean[ch] + BN_MOMENTUM * mean[ch];
                        running.running_var[ch] =
                            (1.0 - BN_MOMENTUM) * b.running_var[ch] + BN_MOMENTUM * var[ch] * corr;
                    }
                    if let Some(u) = bn_updates.as_deref_mut() {
                        u.push((j, running));
                    }
                    b.running_mean = mean;
                    b.running_var = var;
                }
                let t = mac_tensors(graph, layer, bn_layer.as_ref(), &qp, bits)?;
                let w_q = t.weights_real();
                let b_q = t.bias_real();
                let pre: Vec<Seq> = if t.dense {
                    cur.iter().map(|x| ops::dense_forward(x, &w_q, &b_q, t.shape.out_ch)).collect()
                } else {
                    cur.iter().map(|x| ops::conv_forward(x, &w_q, &b_q, &t.shape)).collect()
                };
                let act: Vec<Seq> = if relu { pre.iter().map(ops::relu_forward).collect() } else { pre.clone() };
                let out_qp = observe(state, i, &act, mode)?;
                let next = act.iter().map(|a| fq_seq(a, &out_qp)).collect();
                let x = std::mem::replace(&mut cur, next);
                let range = out_qp.real_range();
                tapes.push(OpTape::Mac { tensors: t, w_q, x, pre, act, range, relu });
                qp = out_qp;
            }
            FusedOp::Pool { kernel, stride } => {
                let (in_len, ch) = (cur[0].len, cur[0].ch);
                let (next, args): (Vec<Seq>, Vec<Vec<usize>>) =
                    cur.iter().map(|x| ops::maxpool_forward(x, kernel, stride)).unzip();
                cur = next;
                tapes.push(OpTape::Pool { in_len, ch, args });
            }
            FusedOp::Gap { .. } => {
                let in_len = cur[0].len;
                let act: Vec<Seq> = cur.iter().map(ops::gap_forward).collect();
                let out_qp = observe(state, i, &act, mode)?;
                cur = act.iter().map(|a| fq_seq(a, &out_qp)).collect();
                tapes.push(OpTape::Gap { in_len, act, range: out_qp.real_range() });
                qp = out_qp;
            }
        }
    }
    Ok(Forward { logits: cur, tapes, plan })
}

fn observe(state: &mut QatState, i: usize, act: &[Seq], mode: Mode) -> Result<QuantParams> {
    let (lo, hi) = batch_range(act);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Quant(format!("non-finite activations at op {i}")));
    }
    let m = state.momentum;
    if let Some(Some(o)) = state.observers.get_mut(i) {
        match mode {
            Mode::Train => o.update(lo, hi, m),
            Mode::Calibrate => o.widen(lo, hi),
            Mode::Eval => {}
        }
    }
    state.activation_qparams(i)
}

fn inside(v: f64, (lo, hi): (f64, f64)) -> bool {
    v >= lo && v <= hi
}

pub struct QatPass {
    pub loss: f64,
    pub grads: Vec<Vec<f64>>,
    pub logits: Vec<Seq>,
}

/// One quantization-aware forward/backward step on `batch`. Updates BN
/// running statistics in `graph` and the activation observers in `state`;
/// parameter gradients come back in [`ModelGraph::params`] order.
pub fn qat_step(graph: &mut ModelGraph, state: &mut QatState, batch: Vec<Seq>, labels: &[usize]) -> Result<QatPass> {
    if batch.is_empty() || batch.len() != labels.len() {
        return Err(Error::Argument("batch and labels must be nonempty and of equal length".into()));
    }
    let mut updates = Vec::new();
    let fwd = run(graph, state, batch, Mode::Train, Some(&mut updates))?;
    for (j, bn) in updates {
        if let Some(slot) = graph.batch_norm_mut(j) {
            *slot = bn;
        }
    }
    let (loss, dlogits) = ops::softmax_cross_entropy(&fwd.logits, labels);
    let grads = backward(graph, &fwd, dlogits);
    Ok(QatPass { loss, grads, logits: fwd.logits })
}

fn backward(graph: &ModelGraph, fwd: &Forward, dlogits: Vec<Seq>) -> Vec<Vec<f64>> {
    let mut grads = graph.zero_grads();
    let slots = graph.param_slots();
    let mut dy = dlogits;
    for (op, tape) in fwd.plan.iter().zip(&fwd.tapes).rev() {
        dy = match (op, tape) {
            (FusedOp::Mac { layer, bn, .. }, OpTape::Mac { tensors, w_q, x, pre, act, range, relu }) => {
                let t = tensors;
                let mut d_pre: Vec<Seq> = dy
                    .iter()
                    .zip(act)
                    .map(|(g, a)| {
                        let data = g.data.iter().zip(&a.data).map(|(&g, &v)| if inside(v, *range) { g } else { 0.0 });
                        Seq { len: g.len, ch: g.ch, data: data.collect() }
                    })
                    .collect();
                if *relu {
                    d_pre = d_pre.iter().zip(pre).map(|(g, p)| ops::relu_backward(p, g)).collect();
                }
                let mut dw = vec![0.0; w_q.len()];
                let mut db = vec![0.0; t.shape.out_ch];
                let dx: Vec<Seq> = x
                    .iter()
                    .zip(&d_pre)
                    .map(|(xi, g)| {
                        if t.dense {
                            ops::dense_backward(xi, w_q, g, &mut dw, &mut db)
                        } else {
                            ops::conv_backward(xi, w_q, g, &t.shape, &mut dw, &mut db)
                        }
                    })
                    .collect();
                let slot = slots[*layer].expect("MAC layer has parameters");
                match (&t.fold, bn) {
                    (Some(f), Some(j)) => {
                        let taps = t.shape.taps();
                        let bslot = slots[*j].expect("BN layer has parameters");
                        for o in 0..t.shape.out_ch {
                            let mut dgain = db[o] * (f.bias[o] - f.mean[o]);
                            for k in 0..taps {
                                let i = o * taps + k;
                                grads[slot][i] += dw[i] * f.gain[o];
                                dgain += dw[i] * f.weight[i];
                            }
                            grads[slot + 1][o] += db[o] * f.gain[o];
                            grads[bslot][o] += dgain / f.sigma[o];
                            grads[bslot + 1][o] += db[o];
                        }
                    }
                    _ => {
                        grads[slot].iter_mut().zip(&dw).for_each(|(g, d)| *g += d);
                        grads[slot + 1].iter_mut().zip(&db).for_each(|(g, d)| *g += d);
                    }
                }
                dx
            }
            (FusedOp::Pool { .. }, OpTape::Pool { in_len, ch, args }) => {
                dy.iter().zip(args).map(|(g, a)| ops::maxpool_backward(*in_len, *ch, a, g)).collect()
            }
            (FusedOp::Gap { .. }, OpTape::Gap { in_len, act, range }) => dy
                .iter()
                .zip(act)
                .map(|(g, a)| {
                    let data = g.data.iter().zip(&a.data).map(|(&g, &v)| if inside(v, *range) { g } else { 0.0 });
                    ops::gap_backward(*in_len, &Seq { len: 1, ch: g.ch, data: data.collect() })
                })
                .collect(),
            _ => unreachable!("tape out of step with plan"),
        };
    }
    grads
}

/// Evaluation-mode fake-quantized logits (frozen observers, running BN).
pub fn qat_forward(graph: &ModelGraph, state: &QatState, batch: &[Seq]) -> Result<Vec<Seq>> {
    let mut frozen = state.clone();
    Ok(run(graph, &mut frozen, batch.to_vec(), Mode::Eval, None)?.logits)
}

/// Straight-through gradients of the evaluation-mode loss (no statistics
/// or observer updates).
pub fn qat_eval_grads(graph: &ModelGraph, state: &QatState, batch: &[Seq], labels: &[usize]) -> Result<Vec<Vec<f64>>> {
    let mut frozen = state.clone();
    let fwd = run(graph, &mut frozen, batch.to_vec(), Mode::Eval, None)?;
    let (_, dlogits) = ops::softmax_cross_entropy(&fwd.logits, labels);
    Ok(backward(graph, &fwd, dlogits))
}
