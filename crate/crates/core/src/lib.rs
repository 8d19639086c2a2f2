//! Structure-predictor confidence metrics over predicted-aligned-error (pAE)
//! logits: pTM, ipTM, interface pAE and the LogSumExp energy pTMEnergy, with
//! closed-form gradients, a four-stage binder hallucination loop against a
//! pluggable predictor, and virtual-screening ranking metrics.
//!
//! Numerical code is generic over [`Scalar`]; the `*F64` aliases below fix it
//! to `f64`, which is what the file readers produce.

pub mod dd;
pub mod gradients;
pub mod hallucination;
pub mod metrics;
pub mod scalar;
pub mod screening;
pub mod tensor_io;

pub use dd::DoubleDouble;
pub use scalar::Scalar;
pub use tensor_io::{ChainMap, PaeLogits};

pub type PaeLogitsF64 = PaeLogits<f64>;
pub type TmKernelF64 = metrics::TmKernel<f64>;
pub type GradTensorF64 = gradients::GradTensor<f64>;
pub type ConfidenceBundleF64 = hallucination::ConfidenceBundle<f64>;
pub type SequenceLogitsF64 = hallucination::SequenceLogits<f64>;
pub type ToyPredictorF64 = hallucination::ToyPredictor<f64>;
