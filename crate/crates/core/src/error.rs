use thiserror::Error;

use crate::grid::{Axis, Mode};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("axis {axis:?} is not available in {mode:?} mode")]
    InvalidAxis { axis: Axis, mode: Mode },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    Shape {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("unsupported hamiltonian variant: {0}")]
    UnsupportedVariant(&'static str),

    #[error("mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("dense dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("transform not commensurate with grid: {0}")]
    NonCommensurate(String),

    #[error("time step {dt} exceeds stability bound {dt_max}")]
    StepTooLarge { dt: f64, dt_max: f64 },

    #[error("non-finite state at step {step} (t = {t}): {detail}")]
    NonFinite { step: usize, t: f64, detail: String },

    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("insufficient snapshots: need {need}, got {got}")]
    InsufficientSnapshots { need: usize, got: usize },

    #[error("state corruption: {0}")]
    StateCorruption(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("snapshot format error at byte {offset}: {detail}")]
    SnapshotFormat { offset: usize, detail: String },

    #[error(transparent)]
    Config(#[from] crate::scenario::config::ConfigError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(expected: &[usize], found: &[usize]) -> Self {
        Error::Shape {
            expected: expected.to_vec(),
            found: found.to_vec(),
        }
    }

    /// True for errors caused by the inputs (config, parameters, grid choice)
    /// rather than by the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidGrid(_)
                | Error::InvalidAxis { .. }
                | Error::Shape { .. }
                | Error::UnsupportedVariant(_)
                | Error::ModeMismatch(_)
                | Error::DimensionCap { .. }
                | Error::NonCommensurate(_)
                | Error::StepTooLarge { .. }
                | Error::InvalidParameter(_)
                | Error::Config(_)
        )
    }
}
