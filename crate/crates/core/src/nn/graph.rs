use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::GestureSample;
use crate::error::{Error, Result};
use crate::nn::config::{Arch, ModelConfig};
use crate::nn::ops::{self, ConvKind, ConvShape, Seq};
use crate::rng;

pub const MODEL_FORMAT: &str = "vibeswipe-model";
pub const MODEL_VERSION: u32 = 1;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv {
    pub kind: ConvKind,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv {
    pub fn zeros(kind: ConvKind, in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        let mut c = Conv { kind, in_ch, out_ch, kernel, weight: Vec::new(), bias: vec![0.0; out_ch] };
        c.weight = vec![0.0; c.shape().weight_len()];
        c
    }

    pub fn shape(&self) -> ConvShape {
        ConvShape { kind: self.kind, in_ch: self.in_ch, out_ch: self.out_ch, kernel: self.kernel }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
}

impl BatchNorm {
    pub fn identity(channels: usize) -> Self {
        BatchNorm {
            channels,
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: BN_EPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        Dense { in_features, out_features, weight: vec![0.0; in_features * out_features], bias: vec![0.0; out_features] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Layer {
    Conv(Conv),
    BatchNorm(BatchNorm),
    Relu,
    MaxPool { kernel: usize, stride: usize },
    GlobalAvgPool,
    Dense(Dense),
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv(c) => match c.kind {
                ConvKind::Standard => "Conv1D",
                ConvKind::Depthwise => "DepthConv1D",
                ConvKind::Pointwise => "PointConv1D",
            },
            Layer::BatchNorm(_) => "BatchNorm",
            Layer::Relu => "ReLU",
            Layer::MaxPool { .. } => "MaxPool1D",
            Layer::GlobalAvgPool => "GlobalAvgPool",
            Layer::Dense(_) => "Dense",
        }
    }

    fn params(&self) -> Vec<&Vec<f64>> {
        match self {
            Layer::Conv(c) => vec![&c.weight, &c.bias],
            Layer::BatchNorm(bn) => vec![&bn.gamma, &bn.beta],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            _ => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Layer::Conv(c) => vec![&mut c.weight, &mut c.bias],
            Layer::BatchNorm(bn) => vec![&mut bn.gamma, &mut bn.beta],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub in_len: usize,
    pub in_ch: usize,
    pub out_len: usize,
    pub out_ch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with the statistics of the current batch.
    Batch,
    /// Normalize with the stored running statistics.
    Running,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub config: Option<ModelConfig>,
    input_len: usize,
    input_ch: usize,
    layers: Vec<Layer>,
    shapes: Vec<LayerShape>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    config: Option<ModelConfig>,
    input_len: usize,
    input_ch: usize,
    layers: Vec<Layer>,
}

fn infer_shapes(input_len: usize, input_ch: usize, layers: &[Layer]) -> Result<Vec<LayerShape>> {
    let mut len = input_len;
    let mut ch = input_ch;
    let mut shapes = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let bad = |reason: String| Error::Shape(format!("layer {i} ({}): {reason}", layer.name()));
        let (out_len, out_ch) = match layer {
            Layer::Conv(c) => {
                if c.in_ch != ch {
                    return Err(bad(format!("expects {} channels, got {ch}", c.in_ch)));
                }
                if c.kind == ConvKind::Depthwise && c.out_ch != c.in_ch {
                    return Err(bad("depthwise output channels must equal input channels".into()));
                }
                if c.kind == ConvKind::Pointwise && c.kernel != 1 {
                    return Err(bad("pointwise kernel must be 1".into()));
                }
                if c.kernel == 0 || len < c.kernel {
                    return Err(bad(format!("length {len} shorter than kernel {}", c.kernel)));
                }
                if c.weight.len() != c.shape().weight_len() || c.bias.len() != c.out_ch {
                    return Err(bad("parameter lengths do not match the declared shape".into()));
                }
                (len + 1 - c.kernel, c.out_ch)
            }
            Layer::BatchNorm(bn) => {
                if bn.channels != ch
                    || [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var].iter().any(|v| v.len() != ch)
                {
                    return Err(bad(format!("expects {ch} channels")));
                }
                if !(bn.eps > 0.0) || bn.running_var.iter().any(|v| !(*v >= 0.0)) {
                    return Err(bad("eps must be positive and running variances non-negative".into()));
                }
                (len, ch)
            }
            Layer::Relu => (len, ch),
            Layer::MaxPool { kernel, stride } => {
                if *kernel == 0 || *stride == 0 {
                    return Err(bad("pool kernel and stride must be positive".into()));
                }
                let out = ops::pool_out_len(len, *kernel, *stride);
                if out == 0 {
                    return Err(bad(format!("length {len} collapses under pooling")));
                }
                (out, ch)
            }
            Layer::GlobalAvgPool => (1, ch),
            Layer::Dense(d) => {
                if len != 1 || d.in_features != ch {
                    return Err(bad(format!("expects a 1x{} vector, got {len}x{ch}", d.in_features)));
                }
                if d.weight.len() != d.in_features * d.out_features || d.bias.len() != d.out_features {
                    return Err(bad("parameter lengths do not match the declared shape".into()));
                }
                (1, d.out_features)
            }
        };
        shapes.push(LayerShape { in_len: len, in_ch: ch, out_len, out_ch });
        len = out_len;
        ch = out_ch;
    }
    Ok(shapes)
}

fn uniform(rng: &mut impl Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

/// Expand `cfg` into its layer graph with seeded fan-in uniform initialization.
pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<ModelGraph> {
    cfg.validate()?;
    let mut layers = Vec::new();
    let mut ch = cfg.input_ch;
    for i in 1..=cfg.num_blocks {
        let out = cfg.block_channels(i);
        match cfg.arch {
            Arch::Cnn => layers.push(Layer::Conv(Conv::zeros(ConvKind::Standard, ch, out, cfg.kernel))),
            Arch::SepCnn => {
                layers.push(Layer::Conv(Conv::zeros(ConvKind::Depthwise, ch, ch, cfg.kernel)));
                layers.push(Layer::Conv(Conv::zeros(ConvKind::Pointwise, ch, out, 1)));
            }
        }
        layers.push(Layer::BatchNorm(BatchNorm::identity(out)));
        layers.push(Layer::Relu);
        if i < cfg.num_blocks {
            layers.push(Layer::MaxPool { kernel: 2, stride: 2 });
        }
        ch = out;
    }
    layers.push(Layer::GlobalAvgPool);
    layers.push(Layer::Dense(Dense::zeros(ch, cfg.dense_hidden)));
    layers.push(Layer::Relu);
    layers.push(Layer::Dense(Dense::zeros(cfg.dense_hidden, cfg.n_classes)));

    for (i, layer) in layers.iter_mut().enumerate() {
        let mut r = rng::stream(seed, &[rng::hash_str("init"), i as u64]);
        match layer {
            Layer::Conv(c) => {
                let fan_in = c.shape().taps() as f64;
                c.weight = uniform(&mut r, c.weight.len(), (6.0 / fan_in).sqrt());
                c.bias = uniform(&mut r, c.out_ch, 1.0 / fan_in.sqrt());
            }
            Layer::Dense(d) => {
                let fan_in = d.in_features as f64;
                d.weight = uniform(&mut r, d.weight.len(), (6.0 / fan_in).sqrt());
                d.bias = uniform(&mut r, d.out_features, 1.0 / fan_in.sqrt());
            }
            _ => {}
        }
    }
    let mut g = ModelGraph::from_layers(cfg.input_len, cfg.input_ch, layers)?;
    g.config = Some(*cfg);
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlopConvention {
    Mac,
    TwoPerMac,
}

enum Aux {
    None,
    Bn { x_hat: Vec<Seq>, inv_std: Vec<f64> },
    Pool(Vec<Vec<usize>>),
}

/// Activations recorded by [`ModelGraph::forward_train`].
pub struct Tape {
    mode: BnMode,
    inputs: Vec<Vec<Seq>>,
    aux: Vec<Aux>,
    /// Per BatchNorm layer (in order): batch mean, biased variance, count.
    pub bn_stats: Vec<(Vec<f64>, Vec<f64>, usize)>,
}

/// Result of a combined forward/backward pass.
pub struct Pass {
    pub loss: f64,
    pub grads: Vec<Vec<f64>>,
    pub logits: Vec<Seq>,
    pub bn_stats: Vec<(Vec<f64>, Vec<f64>, usize)>,
}

impl ModelGraph {
    pub fn from_layers(input_len: usize, input_ch: usize, layers: Vec<Layer>) -> Result<Self> {
        let shapes = infer_shapes(input_len, input_ch, &layers)?;
        Ok(ModelGraph { config: None, input_len, input_ch, layers, shapes })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn input_ch(&self) -> usize {
        self.input_ch
    }

    pub fn n_outputs(&self) -> usize {
        self.shapes.last().map_or(self.input_ch, |s| s.out_ch)
    }

    /// Trainable tensors in layer order: conv/dense (weight, bias), BN (gamma, beta).
    pub fn params(&self) -> Vec<&Vec<f64>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    /// Index into [`ModelGraph::params`] of each layer's first tensor.
    pub fn param_slots(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        self.layers
            .iter()
            .map(|l| {
                let n = l.params().len();
                let slot = (n > 0).then_some(next);
                next += n;
                slot
            })
            .collect()
    }

    pub(crate) fn batch_norm_mut(&mut self, layer: usize) -> Option<&mut BatchNorm> {
        match self.layers.get_mut(layer) {
            Some(Layer::BatchNorm(bn)) => Some(bn),
            _ => None,
        }
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params().iter().map(|p| vec![0.0; p.len()]).collect()
    }

    pub fn param_count(&self, bn_folded: bool) -> usize {
        self.layers
            .iter()
            .filter(|l| !(bn_folded && matches!(l, Layer::BatchNorm(_))))
            .flat_map(|l| l.params())
            .map(|p| p.len())
            .sum()
    }

    pub fn flop_count(&self, convention: FlopConvention) -> u64 {
        let mut macs = 0u64;
        let mut bias_adds = 0u64;
        for (layer, s) in self.layers.iter().zip(&self.shapes) {
            let outputs = (s.out_len * s.out_ch) as u64;
            match layer {
                Layer::Conv(c) => {
                    macs += outputs * c.shape().taps() as u64;
                    bias_adds += outputs;
                }
                Layer::Dense(d) => {
                    macs += outputs * d.in_features as u64;
                    bias_adds += outputs;
                }
                _ => {}
            }
        }
        match convention {
            FlopConvention::Mac => macs,
            FlopConvention::TwoPerMac => 2 * macs + bias_adds,
        }
    }

    fn check_input(&self, x: &Seq) -> Result<()> {
        if x.len != self.input_len || x.ch != self.input_ch {
            return Err(Error::Shape(format!(
                "input is {}x{}, graph expects {}x{}",
                x.len, x.ch, self.input_len, self.input_ch
            )));
        }
        Ok(())
    }

    /// Inference-mode forward of one sequence (BN uses running statistics).
    pub fn forward_seq(&self, x: &Seq) -> Result<Seq> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = match layer {
                Layer::Conv(c) => ops::conv_forward(&cur, &c.weight, &c.bias, &c.shape()),
                Layer::BatchNorm(bn) => bn_running(&cur, bn).0,
                Layer::Relu => ops::relu_forward(&cur),
                Layer::MaxPool { kernel, stride } => ops::maxpool_forward(&cur, *kernel, *stride).0,
                Layer::GlobalAvgPool => ops::gap_forward(&cur),
                Layer::Dense(d) => ops::dense_forward(&cur, &d.weight, &d.bias, d.out_features),
            };
        }
        Ok(cur)
    }

    /// Logits for each sample, in batch order.
    pub fn forward(&self, batch: &[GestureSample]) -> Result<Vec<Vec<f64>>> {
        batch.iter().map(|s| self.forward_seq(&Seq::from_sample(s)).map(|y| y.data)).collect()
    }

    pub fn predict(&self, x: &Seq) -> Result<usize> {
        Ok(ops::argmax(&self.forward_seq(x)?.data))
    }

    /// Batched forward that records what [`ModelGraph::backward_tape`] needs.
    pub fn forward_train(&self, batch: Vec<Seq>, mode: BnMode) -> Result<(Vec<Seq>, Tape)> {
        if batch.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        for x in &batch {
            self.check_input(x)?;
        }
        let mut tape = Tape { mode, inputs: Vec::new(), aux: Vec::new(), bn_stats: Vec::new() };
        let mut cur = batch;
        for layer in &self.layers {
            let (next, aux) = match layer {
                Layer::Conv(c) => {
                    let s = c.shape();
                    (cur.iter().map(|x| ops::conv_forward(x, &c.weight, &c.bias, &s)).collect(), Aux::None)
                }
                Layer::BatchNorm(bn) => {
                    let (mean, var) = match mode {
                        BnMode::Batch => ops::channel_stats(&cur),
                        BnMode::Running => (bn.running_mean.clone(), bn.running_var.clone()),
                    };
                    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.eps).sqrt()).collect();
                    let x_hat: Vec<Seq> = cur.iter().map(|x| normalize(x, &mean, &inv_std)).collect();
                    let out = x_hat.iter().map(|h| affine(h, &bn.gamma, &bn.beta)).collect();
                    if mode == BnMode::Batch {
                        let n = cur.iter().map(|x| x.len).sum();
                        tape.bn_stats.push((mean, var, n));
                    }
                    (out, Aux::Bn { x_hat, inv_std })
                }
                Layer::Relu => (cur.iter().map(ops::relu_forward).collect(), Aux::None),
                Layer::MaxPool { kernel, stride } => {
                    let (outs, args) = cur.iter().map(|x| ops::maxpool_forward(x, *kernel, *stride)).unzip();
                    (outs, Aux::Pool(args))
                }
                Layer::GlobalAvgPool => (cur.iter().map(ops::gap_forward).collect(), Aux::None),
                Layer::Dense(d) => (
                    cur.iter().map(|x| ops::dense_forward(x, &d.weight, &d.bias, d.out_features)).collect(),
                    Aux::None,
                ),
            };
            tape.inputs.push(cur);
            tape.aux.push(aux);
            cur = next;
        }
        Ok((cur, tape))
    }

    /// Gradients of every parameter given the loss gradient at the logits.
    pub fn backward_tape(&self, tape: &Tape, dlogits: Vec<Seq>) -> Vec<Vec<f64>> {
        let mut grads = self.zero_grads();
        let mut slot = grads.len();
        let mut dy = dlogits;
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let xs = &tape.inputs[idx];
            dy = match layer {
                Layer::Conv(c) => {
                    slot -= 2;
                    let (gw, gb) = two_mut(&mut grads, slot);
                    let s = c.shape();
                    xs.iter().zip(&dy).map(|(x, g)| ops::conv_backward(x, &c.weight, g, &s, gw, gb)).collect()
                }
                Layer::BatchNorm(bn) => {
                    slot -= 2;
                    let Aux::Bn { x_hat, inv_std } = &tape.aux[idx] else { unreachable!() };
                    let (gg, gb) = two_mut(&mut grads, slot);
                    bn_backward(bn, x_hat, inv_std, &dy, gg, gb, tape.mode == BnMode::Batch)
                }
                Layer::Relu => xs.iter().zip(&dy).map(|(x, g)| ops::relu_backward(x, g)).collect(),
                Layer::MaxPool { .. } => {
                    let Aux::Pool(args) = &tape.aux[idx] else { unreachable!() };
                    xs.iter().zip(args).zip(&dy).map(|((x, a), g)| ops::maxpool_backward(x.len, x.ch, a, g)).collect()
                }
                Layer::GlobalAvgPool => xs.iter().zip(&dy).map(|(x, g)| ops::gap_backward(x.len, g)).collect(),
                Layer::Dense(d) => {
                    slot -= 2;
                    let (gw, gb) = two_mut(&mut grads, slot);
                    xs.iter().zip(&dy).map(|(x, g)| ops::dense_backward(x, &d.weight, g, gw, gb)).collect()
                }
            };
        }
        grads
    }

    /// Mean softmax cross-entropy over `batch` and its parameter gradients.
    pub fn backward(&self, batch: Vec<Seq>, labels: &[usize], mode: BnMode) -> Result<Pass> {
        if labels.len() != batch.len() {
            return Err(Error::Argument("labels and batch differ in length".into()));
        }
        let n_out = self.n_outputs();
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_out) {
            return Err(Error::Argument(format!("label {bad} outside 0..{n_out}")));
        }
        let (logits, tape) = self.forward_train(batch, mode)?;
        let (loss, dlogits) = ops::softmax_cross_entropy(&logits, labels);
        let grads = self.backward_tape(&tape, dlogits);
        Ok(Pass { loss, grads, logits, bn_stats: tape.bn_stats })
    }

    /// Exponential update of BN running statistics from batch statistics
    /// (unbiased variance), in BN layer order.
    pub fn update_running_stats(&mut self, stats: &[(Vec<f64>, Vec<f64>, usize)], momentum: f64) {
        let bns = self.layers.iter_mut().filter_map(|l| match l {
            Layer::BatchNorm(bn) => Some(bn),
            _ => None,
        });
        for (bn, (mean, var, n)) in bns.zip(stats) {
            let correction = if *n > 1 { *n as f64 / (*n - 1) as f64 } else { 1.0 };
            for c in 0..bn.channels {
                bn.running_mean[c] = (1.0 - momentum) * bn.running_mean[c] + momentum * mean[c];
                bn.running_var[c] = (1.0 - momentum) * bn.running_var[c] + momentum * var[c] * correction;
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            config: self.config,
            input_len: self.input_len,
            input_ch: self.input_ch,
            layers: self.layers.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Argument(format!(
                "unsupported model file {} v{} (expected {MODEL_FORMAT} v{MODEL_VERSION})",
                file.format, file.version
            )));
        }
        if file.layers.iter().flat_map(|l| l.params()).flatten().any(|v| !v.is_finite()) {
            return Err(Error::Argument("model file contains non-finite parameters".into()));
        }
        let mut g = ModelGraph::from_layers(file.input_len, file.input_ch, file.layers)?;
        g.config = file.config;
        Ok(g)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

fn two_mut(grads: &mut [Vec<f64>], slot: usize) -> (&mut [f64], &mut [f64]) {
    let (a, b) = grads[slot..].split_at_mut(1);
    (&mut a[0], &mut b[0])
}

fn normalize(x: &Seq, mean: &[f64], inv_std: &[f64]) -> Seq {
    let ch = x.ch;
    let data = x.data.iter().enumerate().map(|(i, v)| (v - mean[i % ch]) * inv_std[i % ch]).collect();
    Seq { len: x.len, ch, data }
}

fn affine(x: &Seq, gamma: &[f64], beta: &[f64]) -> Seq {
    let ch = x.ch;
    let data = x.data.iter().enumerate().map(|(i, v)| v * gamma[i % ch] + beta[i % ch]).collect();
    Seq { len: x.len, ch, data }
}

fn bn_running(x: &Seq, bn: &BatchNorm) -> (Seq, Vec<f64>) {
    let inv_std: Vec<f64> = bn.running_var.iter().map(|v| 1.0 / (v + bn.eps).sqrt()).collect();
    (affine(&normalize(x, &bn.running_mean, &inv_std), &bn.gamma, &bn.beta), inv_std)
}

fn bn_backward(
    bn: &BatchNorm,
    x_hat: &[Seq],
    inv_std: &[f64],
    dy: &[Seq],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
    batch_stats: bool,
) -> Vec<Seq> {
    let ch = bn.channels;
    let mut sum_dy = vec![0.0; ch];
    let mut sum_dy_xhat = vec![0.0; ch];
    let mut n = 0usize;
    for (h, g) in x_hat.iter().zip(dy) {
        for (i, (hv, gv)) in h.data.iter().zip(&g.data).enumerate() {
            sum_dy[i % ch] += gv;
            sum_dy_xhat[i % ch] += gv * hv;
        }
        n += h.len;
    }
    for c in 0..ch {
        dgamma[c] += sum_dy_xhat[c];
        dbeta[c] += sum_dy[c];
    }
    let nf = n as f64;
    x_hat
        .iter()
        .zip(dy)
        .map(|(h, g)| {
            let data = h
                .data
                .iter()
                .zip(&g.data)
                .enumerate()
                .map(|(i, (hv, gv))| {
                    let c = i % ch;
                    let k = bn.gamma[c] * inv_std[c];
                    if batch_stats {
                        k * (gv - sum_dy[c] / nf - hv * sum_dy_xhat[c] / nf)
                    } else {
                        k * gv
                    }
                })
                .collect();
            Seq { len: h.len, ch, data }
        })
        .collect()
}
