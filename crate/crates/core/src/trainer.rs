//! Adam training with early stopping, optionally quantization-aware, and
//! confusion-matrix evaluation.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::{GestureSample, SplitData};
use crate::error::{Error, Result};
use crate::nn::{ops, BnMode, ModelGraph, Seq, BN_MOMENTUM};
use crate::quant::{check_bits, int_predict, qat_forward, qat_step, QatState, QuantizedModel};
use crate::rng;

pub const BATCH_SIZES: [usize; 7] = [16, 24, 32, 40, 48, 56, 64];
pub const LR_MIN: f64 = 1e-5;
pub const LR_MAX: f64 = 1e-3;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub epochs_max: usize,
    pub patience: usize,
    pub bs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Bitwidth for quantization-aware training; `None` trains in float.
    pub qat_bits: Option<u32>,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec { epochs_max: 100, patience: 10, bs: 32, lr: 1e-3, seed: 0, qat_bits: None }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epochs_max == 0 {
            return Err(Error::Config("epochs_max must be at least 1".into()));
        }
        if !BATCH_SIZES.contains(&self.bs) {
            return Err(Error::Config(format!("batch size {} not in {BATCH_SIZES:?}", self.bs)));
        }
        if !(LR_MIN..=LR_MAX).contains(&self.lr) {
            return Err(Error::Config(format!("learning rate {} outside [{LR_MIN}, {LR_MAX}]", self.lr)));
        }
        if let Some(b) = self.qat_bits {
            check_bits(b)?;
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EpochLimit,
    EarlyStopping,
    Monitor,
}

/// Returned by a training monitor after every epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Parameters (and BN statistics) from the best validation epoch.
    pub graph: ModelGraph,
    /// Activation observers from the best epoch, for QAT runs.
    pub qat: Option<QatState>,
    pub best_val_accuracy: f64,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub curves: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    pub stop_reason: StopReason,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(graph: &ModelGraph) -> Self {
        Adam { m: graph.zero_grads(), v: graph.zero_grads(), t: 0 }
    }

    fn step(&mut self, graph: &mut ModelGraph, grads: &[Vec<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (((p, g), m), v) in graph.params_mut().into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

pub fn train(graph: ModelGraph, data: &SplitData, spec: &TrainSpec) -> Result<TrainResult> {
    train_with(graph, data, spec, |_, _| Control::Continue)
}

/// [`train`] with a callback run after every epoch. It sees the epoch record
/// and the best validation accuracy so far and may end training early.
pub fn train_with<F>(mut graph: ModelGraph, data: &SplitData, spec: &TrainSpec, mut monitor: F) -> Result<TrainResult>
where
    F: FnMut(&EpochRecord, f64) -> Control,
{
    spec.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::Argument(format!(
            "training needs nonempty train and validation sets (got {} and {})",
            data.train.len(),
            data.val.len()
        )));
    }
    let n_out = graph.n_outputs();
    if let Some(s) = data.train.iter().chain(&data.val).find(|s| s.label >= n_out) {
        return Err(Error::Argument(format!("label {} outside 0..{n_out}", s.label)));
    }
    let mut qat = spec.qat_bits.map(|b| QatState::new(&graph, b)).transpose()?;
    let mut adam = Adam::new(&graph);
    let mut order: Vec<usize> = (0..data.train.len()).collect();

    let mut curves = Vec::new();
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    let mut best_epoch = 0;
    let mut best_graph = graph.clone();
    let mut best_qat = qat.clone();
    let mut wait = 0;
    let mut stop_reason = StopReason::EpochLimit;

    for epoch in 1..=spec.epochs_max {
        let mut shuffle = rng::stream(spec.seed, &[rng::hash_str("shuffle"), epoch as u64]);
        order.shuffle(&mut shuffle);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for idx in order.chunks(spec.bs) {
            let batch: Vec<Seq> = idx.iter().map(|&i| Seq::from_sample(&data.train[i])).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| data.train[i].label).collect();
            let (loss, grads, logits) = match qat.as_mut() {
                Some(state) => {
                    let p = qat_step(&mut graph, state, batch, &labels)?;
                    (p.loss, p.grads, p.logits)
                }
                None => {
                    let p = graph.backward(batch, &labels, BnMode::Batch)?;
                    graph.update_running_stats(&p.bn_stats, BN_MOMENTUM);
                    (p.loss, p.grads, p.logits)
                }
            };
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            loss_sum += loss * idx.len() as f64;
            correct += logits.iter().zip(&labels).filter(|(l, &y)| ops::argmax(&l.data) == y).count();
            adam.step(&mut graph, &grads, spec.lr);
        }
        let (val_loss, val_accuracy) = score(&graph, qat.as_ref(), &data.val)?;
        if !val_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / data.train.len() as f64,
            train_accuracy: correct as f64 / data.train.len() as f64,
            val_loss,
            val_accuracy,
        };
        log::debug!("epoch {epoch}: loss {:.4} val_acc {:.4}", record.train_loss, val_accuracy);
        curves.push(record);

        if val_accuracy > best.0 || (val_accuracy == best.0 && val_loss < best.1) {
            best = (val_accuracy, val_loss);
            best_epoch = epoch;
            best_graph = graph.clone();
            best_qat = qat.clone();
            wait = 0;
        } else {
            wait += 1;
        }
        if monitor(&record, best.0) == Control::Stop {
            stop_reason = StopReason::Monitor;
            break;
        }
        if wait >= spec.patience.max(1) {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
    }

    Ok(TrainResult {
        graph: best_graph,
        qat: best_qat,
        best_val_accuracy: best.0,
        best_val_loss: best.1,
        best_epoch,
        stopped_epoch: curves.len(),
        curves,
        stop_reason,
    })
}

/// Mean cross-entropy and accuracy in evaluation mode.
fn score(graph: &ModelGraph, qat: Option<&QatState>, samples: &[GestureSample]) -> Result<(f64, f64)> {
    let (mut loss, mut correct) = (0.0, 0usize);
    for chunk in samples.chunks(EVAL_CHUNK) {
        let xs: Vec<Seq> = chunk.iter().map(Seq::from_sample).collect();
        let labels: Vec<usize> = chunk.iter().map(|s| s.label).collect();
        let logits = match qat {
            Some(state) => qat_forward(graph, state, &xs)?,
            None => xs.iter().map(|x| graph.forward_seq(x)).collect::<Result<_>>()?,
        };
        loss += ops::softmax_cross_entropy(&logits, &labels).0 * chunk.len() as f64;
        correct += logits.iter().zip(&labels).filter(|(l, &y)| ops::argmax(&l.data) == y).count();
    }
    let n = samples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Writes one JSON object per epoch.
pub fn write_log(curves: &[EpochRecord], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in curves {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_log(text: &str) -> Result<Vec<EpochRecord>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

/// Anything that maps a sample to a class index.
pub trait Classifier {
    fn n_classes(&self) -> usize;
    fn classify(&self, sample: &GestureSample) -> Result<usize>;
}

impl Classifier for ModelGraph {
    fn n_classes(&self) -> usize {
        self.n_outputs()
    }

    fn classify(&self, sample: &GestureSample) -> Result<usize> {
        self.predict(&Seq::from_sample(sample))
    }
}

impl Classifier for QuantizedModel {
    fn n_classes(&self) -> usize {
        QuantizedModel::n_classes(self)
    }

    fn classify(&self, sample: &GestureSample) -> Result<usize> {
        int_predict(self, &self.quantize_input(&Seq::from_sample(sample)))
    }
}

/// A float graph evaluated through fake quantization with frozen observers.
pub struct FakeQuant<'a> {
    pub graph: &'a ModelGraph,
    pub state: &'a QatState,
}

impl Classifier for FakeQuant<'_> {
    fn n_classes(&self) -> usize {
        self.graph.n_outputs()
    }

    fn classify(&self, sample: &GestureSample) -> Result<usize> {
        let logits = qat_forward(self.graph, self.state, &[Seq::from_sample(sample)])?;
        Ok(ops::argmax(&logits[0].data))
    }
}

/// Square count matrix; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    n: usize,
    counts: Vec<u64>,
}

impl Confusion {
    pub fn new(n: usize) -> Self {
        Confusion { n, counts: vec![0; n * n] }
    }

    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut c = Confusion::new(n);
        for (t, p) in pairs {
            c.add(t, p)?;
        }
        Ok(c)
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<()> {
        if truth >= self.n || pred >= self.n {
            return Err(Error::Argument(format!("class pair ({truth}, {pred}) outside 0..{}", self.n)));
        }
        self.counts[truth * self.n + pred] += 1;
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n + pred]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.n..(truth + 1) * self.n]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: Confusion,
}

pub fn evaluate<C: Classifier + ?Sized>(model: &C, samples: &[GestureSample]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Argument("evaluation set is empty".into()));
    }
    let mut confusion = Confusion::new(model.n_classes());
    for s in samples {
        confusion.add(s.label, model.classify(s)?)?;
    }
    Ok(Evaluation { accuracy: confusion.accuracy(), confusion })
}
