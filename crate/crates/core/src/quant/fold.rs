use crate::error::{Error, Result};
use crate::nn::{BatchNorm, Conv, ConvKind, Layer, ModelGraph};

/// A graph step as the integer pipeline sees it: every multiply-accumulate
/// layer absorbs the BatchNorm and ReLU that follow it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusedOp {
    Mac { layer: usize, bn: Option<usize>, relu: bool },
    Pool { kernel: usize, stride: usize },
    Gap { layer: usize },
}

pub fn fused_plan(graph: &ModelGraph) -> Result<Vec<FusedOp>> {
    let layers = graph.layers();
    let mut plan = Vec::new();
    let mut i = 0;
    while i < layers.len() {
        match &layers[i] {
            Layer::Conv(_) | Layer::Dense(_) => {
                let mut bn = None;
                let mut relu = false;
                let mut j = i + 1;
                if let (Layer::Conv(_), Some(Layer::BatchNorm(_))) = (&layers[i], layers.get(j)) {
                    bn = Some(j);
                    j += 1;
                }
                if let Some(Layer::Relu) = layers.get(j) {
                    relu = true;
                    j += 1;
                }
                plan.push(FusedOp::Mac { layer: i, bn, relu });
                i = j;
            }
            Layer::MaxPool { kernel, stride } => {
                plan.push(FusedOp::Pool { kernel: *kernel, stride: *stride });
                i += 1;
            }
            Layer::GlobalAvgPool => {
                plan.push(FusedOp::Gap { layer: i });
                i += 1;
            }
            other => {
                return Err(Error::Structure(format!(
                    "layer {i} ({}) does not follow a convolution or dense layer",
                    other.name()
                )))
            }
        }
    }
    Ok(plan)
}

/// Per-output-channel factor `gamma / sqrt(var + eps)`.
pub fn bn_gain(bn: &BatchNorm) -> Vec<f64> {
    bn.gamma.iter().zip(&bn.running_var).map(|(g, v)| g / (v + bn.eps).sqrt()).collect()
}

/// Folded (weight, bias) of a conv followed by `bn`.
pub fn fold_conv(conv: &Conv, bn: &BatchNorm) -> (Vec<f64>, Vec<f64>) {
    let gain = bn_gain(bn);
    let taps = conv.shape().taps();
    let mut w = conv.weight.clone();
    for (o, chunk) in w.chunks_mut(taps).enumerate() {
        chunk.iter_mut().for_each(|v| *v *= gain[o]);
    }
    let b = (0..conv.out_ch).map(|o| (conv.bias[o] - bn.running_mean[o]) * gain[o] + bn.beta[o]).collect();
    (w, b)
}

/// Merge every BatchNorm into the convolution in front of it.
pub fn fold_bn(graph: &ModelGraph) -> Result<ModelGraph> {
    let mut out: Vec<Layer> = Vec::with_capacity(graph.layers().len());
    for (i, layer) in graph.layers().iter().enumerate() {
        match layer {
            Layer::BatchNorm(bn) => {
                let Some(Layer::Conv(conv)) = out.last_mut() else {
                    return Err(Error::Structure(format!("BatchNorm at layer {i} has no preceding convolution")));
                };
                if conv.kind == ConvKind::Depthwise && conv.out_ch != bn.channels {
                    return Err(Error::Structure(format!("BatchNorm at layer {i} does not match its convolution")));
                }
                let (w, b) = fold_conv(conv, bn);
                conv.weight = w;
                conv.bias = b;
            }
            other => out.push(other.clone()),
        }
    }
    let mut folded = ModelGraph::from_layers(graph.input_len(), graph.input_ch(), out)?;
    folded.config = graph.config;
    Ok(folded)
}
