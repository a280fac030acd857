//! Real-valued kernels shared by the float graph and the quantization-aware
//! path. Sequences are time-major: element (t, c) lives at `t * ch + c`.

use serde::{Deserialize, Serialize};

use crate::dataio::GestureSample;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Seq {
    pub len: usize,
    pub ch: usize,
    pub data: Vec<f64>,
}

impl Seq {
    pub fn zeros(len: usize, ch: usize) -> Self {
        Seq { len, ch, data: vec![0.0; len * ch] }
    }

    pub fn from_vec(len: usize, ch: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), len * ch, "sequence data does not match {len}x{ch}");
        Seq { len, ch, data }
    }

    pub fn from_sample(s: &GestureSample) -> Self {
        Seq { len: s.len(), ch: s.channels(), data: s.to_real() }
    }

    #[inline]
    pub fn at(&self, t: usize, c: usize) -> f64 {
        self.data[t * self.ch + c]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvKind {
    /// Full cross-channel convolution, weights laid out `[out][k][in]`.
    Standard,
    /// One filter per channel, weights `[ch][k]`; `out_ch == in_ch`.
    Depthwise,
    /// Kernel-1 cross-channel mixing, weights `[out][in]`.
    Pointwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub kind: ConvKind,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
}

impl ConvShape {
    /// Multiply-accumulates per output element.
    pub fn taps(&self) -> usize {
        match self.kind {
            ConvKind::Depthwise => self.kernel,
            _ => self.kernel * self.in_ch,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.out_ch * self.taps()
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        in_len + 1 - self.kernel
    }
}

pub fn conv_forward(x: &Seq, w: &[f64], b: &[f64], s: &ConvShape) -> Seq {
    debug_assert_eq!(x.ch, s.in_ch);
    let out_len = s.out_len(x.len);
    let mut y = Seq::zeros(out_len, s.out_ch);
    let taps = s.taps();
    match s.kind {
        ConvKind::Standard | ConvKind::Pointwise => {
            for t in 0..out_len {
                let window = &x.data[t * s.in_ch..(t + s.kernel) * s.in_ch];
                let out = &mut y.data[t * s.out_ch..(t + 1) * s.out_ch];
                for (o, slot) in out.iter_mut().enumerate() {
                    let wo = &w[o * taps..(o + 1) * taps];
                    *slot = b[o] + wo.iter().zip(window).map(|(a, v)| a * v).sum::<f64>();
                }
            }
        }
        ConvKind::Depthwise => {
            let c_n = s.in_ch;
            for t in 0..out_len {
                for c in 0..c_n {
                    let mut acc = b[c];
                    for k in 0..s.kernel {
                        acc += w[c * s.kernel + k] * x.data[(t + k) * c_n + c];
                    }
                    y.data[t * c_n + c] = acc;
                }
            }
        }
    }
    y
}

/// Accumulates weight and bias gradients and returns the input gradient.
pub fn conv_backward(x: &Seq, w: &[f64], dy: &Seq, s: &ConvShape, dw: &mut [f64], db: &mut [f64]) -> Seq {
    let mut dx = Seq::zeros(x.len, x.ch);
    let taps = s.taps();
    match s.kind {
        ConvKind::Standard | ConvKind::Pointwise => {
            for t in 0..dy.len {
                let lo = t * s.in_ch;
                let hi = (t + s.kernel) * s.in_ch;
                for o in 0..s.out_ch {
                    let g = dy.data[t * s.out_ch + o];
                    if g == 0.0 {
                        continue;
                    }
                    db[o] += g;
                    let wo = &w[o * taps..(o + 1) * taps];
                    let dwo = &mut dw[o * taps..(o + 1) * taps];
                    for ((dwv, &xv), (dxv, &wv)) in
                        dwo.iter_mut().zip(&x.data[lo..hi]).zip(dx.data[lo..hi].iter_mut().zip(wo))
                    {
                        *dwv += g * xv;
                        *dxv += g * wv;
                    }
                }
            }
        }
        ConvKind::Depthwise => {
            let c_n = s.in_ch;
            for t in 0..dy.len {
                for c in 0..c_n {
                    let g = dy.data[t * c_n + c];
                    db[c] += g;
                    for k in 0..s.kernel {
                        let xi = (t + k) * c_n + c;
                        dw[c * s.kernel + k] += g * x.data[xi];
                        dx.data[xi] += g * w[c * s.kernel + k];
                    }
                }
            }
        }
    }
    dx
}

pub fn relu_forward(x: &Seq) -> Seq {
    Seq { len: x.len, ch: x.ch, data: x.data.iter().map(|v| v.max(0.0)).collect() }
}

pub fn relu_backward(x: &Seq, dy: &Seq) -> Seq {
    let data = x.data.iter().zip(&dy.data).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect();
    Seq { len: x.len, ch: x.ch, data }
}

pub fn pool_out_len(in_len: usize, kernel: usize, stride: usize) -> usize {
    if in_len < kernel {
        0
    } else {
        (in_len - kernel) / stride + 1
    }
}

/// Max pooling; returns the pooled sequence and the flat source index of
/// each output element (first maximum wins).
pub fn maxpool_forward(x: &Seq, kernel: usize, stride: usize) -> (Seq, Vec<usize>) {
    let out_len = pool_out_len(x.len, kernel, stride);
    let mut y = Seq::zeros(out_len, x.ch);
    let mut arg = vec![0; out_len * x.ch];
    for t in 0..out_len {
        for c in 0..x.ch {
            let mut best_i = (t * stride) * x.ch + c;
            for k in 1..kernel {
                let i = (t * stride + k) * x.ch + c;
                if x.data[i] > x.data[best_i] {
                    best_i = i;
                }
            }
            y.data[t * x.ch + c] = x.data[best_i];
            arg[t * x.ch + c] = best_i;
        }
    }
    (y, arg)
}

pub fn maxpool_backward(in_len: usize, ch: usize, arg: &[usize], dy: &Seq) -> Seq {
    let mut dx = Seq::zeros(in_len, ch);
    for (g, &i) in dy.data.iter().zip(arg) {
        dx.data[i] += g;
    }
    dx
}

pub fn gap_forward(x: &Seq) -> Seq {
    let mut y = Seq::zeros(1, x.ch);
    for t in 0..x.len {
        for c in 0..x.ch {
            y.data[c] += x.data[t * x.ch + c];
        }
    }
    let inv = 1.0 / x.len as f64;
    y.data.iter_mut().for_each(|v| *v *= inv);
    y
}

pub fn gap_backward(in_len: usize, dy: &Seq) -> Seq {
    let inv = 1.0 / in_len as f64;
    let mut dx = Seq::zeros(in_len, dy.ch);
    for t in 0..in_len {
        for c in 0..dy.ch {
            dx.data[t * dy.ch + c] = dy.data[c] * inv;
        }
    }
    dx
}

/// Dense layer on a length-1 sequence; weights `[out][in]`.
pub fn dense_forward(x: &Seq, w: &[f64], b: &[f64], out: usize) -> Seq {
    let n_in = x.ch;
    let data = (0..out)
        .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(&x.data).map(|(a, v)| a * v).sum::<f64>())
        .collect();
    Seq { len: 1, ch: out, data }
}

pub fn dense_backward(x: &Seq, w: &[f64], dy: &Seq, dw: &mut [f64], db: &mut [f64]) -> Seq {
    let n_in = x.ch;
    let mut dx = Seq::zeros(1, n_in);
    for (o, &g) in dy.data.iter().enumerate() {
        db[o] += g;
        for i in 0..n_in {
            dw[o * n_in + i] += g * x.data[i];
            dx.data[i] += g * w[o * n_in + i];
        }
    }
    dx
}

/// Per-channel batch statistics over every (sample, time) position:
/// returns (mean, biased variance).
pub fn channel_stats(batch: &[Seq]) -> (Vec<f64>, Vec<f64>) {
    let ch = batch[0].ch;
    let n: usize = batch.iter().map(|s| s.len).sum();
    let mut mean = vec![0.0; ch];
    for s in batch {
        for t in 0..s.len {
            for c in 0..ch {
                mean[c] += s.data[t * ch + c];
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; ch];
    for s in batch {
        for t in 0..s.len {
            for c in 0..ch {
                let d = s.data[t * ch + c] - mean[c];
                var[c] += d * d;
            }
        }
    }
    var.iter_mut().for_each(|v| *v /= n as f64);
    (mean, var)
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy(logits: &[Seq], labels: &[usize]) -> (f64, Vec<Seq>) {
    let b = logits.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (z, &y) in logits.iter().zip(labels) {
        let m = z.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.data.iter().map(|v| (v - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += sum.ln() + m - z.data[y];
        let g = exps.iter().enumerate().map(|(i, e)| (e / sum - if i == y { 1.0 } else { 0.0 }) / b).collect();
        grads.push(Seq { len: 1, ch: z.ch, data: g });
    }
    (loss / b, grads)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
