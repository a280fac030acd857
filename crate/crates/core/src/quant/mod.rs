//! Per-tensor affine quantization, BatchNorm folding, quantization-aware
//! training passes and the integer-only interpreter.

pub mod fold;
pub mod model;
pub mod params;
pub mod qat;
pub mod requant;

pub use fold::{fold_bn, fused_plan, FusedOp};
pub use model::{
    int_forward, int_forward_trace, int_predict, quantize_model, IntSeq, MacKind, QGap, QLayer, QMac, QuantizedModel,
};
pub use params::{check_bits, derive_qparams, fake_quant, qparams_from_range, qrange, QuantParams, BITWIDTHS};
pub use qat::{bias_limit, qat_eval_grads, qat_forward, qat_step, QatPass, QatState};
pub use requant::Requantizer;
