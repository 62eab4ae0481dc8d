use std::io;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QuantError {
    #[error("divisor must be positive, got {0}")]
    NonPositiveDivisor(i64),
    #[error("{0} overflows 32 bits")]
    Overflow(&'static str),
    #[error("pool factor must be at least 1")]
    EmptyPool,
    #[error("calibration needs at least one trial")]
    EmptyStream,
}

/// Weight-file loading failures; every variant names the offending record.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected QEEG1")]
    BadMagic,
    #[error("unsupported weight file version {0}")]
    UnsupportedVersion(String),
    #[error("manifest line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("unknown tensor `{0}`")]
    UnknownTensor(String),
    #[error("tensor `{name}`: expected shape {expected}, found {found}")]
    ShapeMismatch { name: String, expected: String, found: String },
    #[error("tensor `{name}`: expected dtype {expected}, found {found}")]
    DtypeMismatch { name: String, expected: &'static str, found: String },
    #[error("tensor `{0}`: scale must be a positive rational")]
    BadScale(String),
    #[error("tensor `{name}`: channel {channel} has non-positive divisor {divisor}")]
    NonPositiveDivisor { name: String, channel: usize, divisor: i32 },
    #[error("tensor `{name}`: bytes {offset}..{end} outside blob of {blob} bytes")]
    OutOfBounds { name: String, offset: usize, end: usize, blob: usize },
    #[error("parameter count {found} does not match the architecture ({expected})")]
    ParamCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("row of {len} bytes is not a whole number of packed words")]
    Misaligned { len: usize },
    #[error("row too short: {have} bytes, need {need}")]
    ShortRow { have: usize, need: usize },
    #[error("replicated copies are inconsistent with their source at copy {copy}, byte {index}")]
    InconsistentReplica { copy: usize, index: usize },
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },
    #[error("trial scale {found} does not match the model input scale {expected}")]
    ScaleMismatch { expected: String, found: String },
    #[error("tile plan infeasible: {parts} parts need {required} bytes of L1, budget is {budget}")]
    TileBudget { parts: usize, required: usize, budget: usize },
    #[error(transparent)]
    Quant(#[from] QuantError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("reports describe different model shapes ({0} vs {1})")]
    ShapeMismatch(String, String),
    #[error("report line {line}: {reason}")]
    Parse { line: usize, reason: String },
}
