//! Float reference models: graph construction, forward/backward and
//! size statistics.

pub mod config;
pub mod graph;
pub mod ops;

pub use config::{Arch, ModelConfig, MAX_BLOCKS};
pub use graph::{
    build_model, BatchNorm, BnMode, Conv, Dense, FlopConvention, Layer, LayerShape, ModelGraph, Pass, Tape, BN_MOMENTUM,
};
pub use ops::{argmax, ConvKind, Seq};

pub fn param_count(graph: &ModelGraph, bn_folded: bool) -> usize {
    graph.param_count(bn_folded)
}

pub fn flop_count(graph: &ModelGraph, convention: FlopConvention) -> u64 {
    graph.flop_count(convention)
}
