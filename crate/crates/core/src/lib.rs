//! Tiny 1D convolutional gesture classifiers for four-channel vibration
//! waveforms, from raw recordings to an integer-only streaming accelerator.
//!
//! The crate is organised along the deployment flow:
//!
//! - [`dataio`]: WAV ingestion, window truncation, phase decimation
//!   (augmentation), PS/LOSO/AOS splits and a synthetic dataset generator.
//! - [`nn`]: 1D-CNN / 1D-SepCNN graphs with real-valued forward and backward
//!   passes plus parameter and FLOP statistics.
//! - [`trainer`]: Adam training with early stopping, optionally
//!   quantization-aware, and confusion-matrix evaluation.
//! - [`quant`]: per-tensor affine quantization, BatchNorm folding and the
//!   bit-exact integer interpreter.
//! - [`accel`]: compilation of a quantized model into a linear pipeline of
//!   stages, a cycle-accurate simulator and resource/power/energy models.
//! - [`search`]: NSGA-II search over bitwidth, batch size, learning rate and
//!   depth with staged constraint pruning.
//! - [`report`]: CSV and SVG renderings of results.

pub mod accel;
pub mod dataio;
pub mod error;
pub mod nn;
pub mod quant;
pub mod report;
pub mod rng;
pub mod search;
pub mod trainer;

pub use error::{Error, Result};

/// Library version string, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
