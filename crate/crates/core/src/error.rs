use alloc::string::String;

use thiserror::Error;

/// Every failure the core can report, grouped by the subsystem that raised it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("attention query row {row} has no unmasked key")]
    EmptyAttention { row: usize },
    #[error("backward requires a scalar loss, got shape {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },
    #[error("unknown parameter `{0}`")]
    MissingParam(String),
    #[error("non-finite gradient for parameter `{0}`")]
    NanGradient(String),
    #[error("heading vector has norm {norm}, expected a unit vector")]
    NonUnitHeading { norm: f64 },
    #[error("resync needs at least 2 observed frames, {remaining} remain")]
    Resync { remaining: usize },
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("split failed: {0}")]
    Split(String),
    #[error("encoding failed: {0}")]
    Encoding(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("invalid configuration: {field}: {constraint}")]
    Config { field: &'static str, constraint: String },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        op,
        detail: detail.into(),
    }
}
