//! Deterministic 8-bit fixed-point inference for Q-EEGNet.
//!
//! Every optimization strategy of the engine produces bit-identical logits;
//! they differ only in how work is scheduled, laid out in memory and
//! counted. [`reference`] holds the floating-point oracles the integer
//! pipeline is checked against.

pub mod error;
pub mod fxp;
pub mod instrument;
pub mod kernels;
pub mod model;
pub mod quant;
pub mod reference;

pub use error::{EngineError, LoadError, QuantError, ReportError};
pub use instrument::{compare_reports, RunReport};
pub use kernels::{run_inference, RunOutput, StrategyConfig};
pub use model::{load_weights, save_weights, synth_trial, synth_weights, ModelShape, ModelWeights, QTensor, QEEGNET};
