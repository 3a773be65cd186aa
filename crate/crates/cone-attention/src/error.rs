//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid point: {reason}")]
    InvalidPoint { reason: String },

    #[error("point at or above light source: height {height} >= {light_height}")]
    AboveLightSource { height: f64, light_height: f64 },

    #[error("numeric range: {reason}")]
    NumericRange { reason: String },

    #[error("degenerate direction: zero horizontal part with nonzero radial coordinate")]
    DegenerateDirection,

    #[error("point outside Klein ball: norm {norm} >= 1")]
    OutsideKleinBall { norm: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("attention row {row} has no unmasked entry")]
    MaskedRow { row: usize },

    #[error("dimension {dim} not divisible by {heads} heads")]
    HeadsDivisibility { dim: usize, heads: usize },

    #[error("oracle inconsistency: {0}")]
    OracleInconsistency(String),

    #[error("infeasible embedding placement at node {node}: {reason}")]
    InfeasiblePlacement { node: usize, reason: String },

    #[error("training diverged at step {step}")]
    Diverged { step: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for I/O and format problems,
    /// 3 for numeric-range failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Parse { .. } | Error::InvalidConfig(_) | Error::InvalidTree(_) => 2,
            Error::NumericRange { .. } => 3,
            _ => 1,
        }
    }
}
