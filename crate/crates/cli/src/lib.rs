//! Command-line driver for the qeegnet engine: trial file I/O, synthetic
//! data, strategy runs, cross-strategy checks and the float oracle bridge.

pub mod args;
pub mod commands;
pub mod trial;

pub use commands::CliError;
pub use trial::{TrialData, TrialError, TrialFile};
