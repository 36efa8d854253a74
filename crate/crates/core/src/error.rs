use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("rotor is not unit length (norm = {norm})")]
    NonUnitRotor { norm: f64 },

    #[error("quaternion is not pure (real part = {w})")]
    NotPure { w: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid frequency {value} on axis {axis}: must be finite and > 0")]
    InvalidFrequency { axis: char, value: f64 },

    #[error("vector length {len} is not a positive multiple of 3")]
    NotSegmented { len: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("frequency plan has {plan} entries but vector has {segments} segments")]
    PlanMismatch { plan: usize, segments: usize },

    #[error("per-axis encoding needs a segment count divisible by 3, got {segments}")]
    AxisGrouping { segments: usize },

    #[error("rotary dimension must be even, got {0}")]
    OddDimension(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown category {0}")]
    UnknownCategory(u32),

    #[error("unknown relation token {0}")]
    UnknownRelation(String),

    #[error("scene generation failed: {0}")]
    SceneGen(String),

    #[error("NaN or infinity in {stage} (layer {layer})")]
    NumericalFault { stage: &'static str, layer: usize },

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status for this error: 1 for numerical failures during a
    /// run, 2 for anything caused by the input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericalFault { .. } | Error::Divergence { .. } => 1,
            _ => 2,
        }
    }
}
