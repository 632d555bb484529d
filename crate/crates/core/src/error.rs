use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;

pub type Result<T, E = ChbError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ChbError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("mean-zero required (mean = {mean:e})")]
    MeanZeroRequired { mean: f64 },

    #[error("incompatible singular system (rhs mean = {mean:e})")]
    IncompatibleSingular { mean: f64 },

    #[error("singular system requires a mean constraint")]
    MissingMeanConstraint,

    #[error("ν ≤ 0: use darcy_solve")]
    UseDarcySolve,

    #[error("flow solver did not converge after {iterations} iterations (best residual {residual:e})")]
    FlowNotConverged { iterations: usize, residual: f64 },

    #[error("stationary solver did not converge after {iterations} iterations (best residual {residual:e})")]
    StationaryNotConverged { iterations: usize, residual: f64 },

    #[error("blow-up detected at step {step}: {detail}")]
    BlowUp { step: usize, detail: String },

    #[error("diagnostics are not uniformly spaced at record {index}")]
    NonUniformSpacing { index: usize },

    #[error("no decay detected")]
    NoDecay,

    #[error("too few usable points for a fit: {found} (need at least {needed})")]
    InsufficientData { found: usize, needed: usize },

    #[error("initial means differ: {0:e} vs {1:e}")]
    MeanMismatch(f64, f64),

    #[error("run with ν = {nu:e} failed: {source}")]
    SweepRunFailed {
        nu: f64,
        #[source]
        source: Box<ChbError>,
    },

    #[error("snapshot format error in {path}: {reason}")]
    Snapshot { path: PathBuf, reason: String },

    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl ChbError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        ChbError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ChbError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the user's configuration rather than the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            ChbError::Config(_)
                | ChbError::InvalidGrid(_)
                | ChbError::InvalidParameter { .. }
                | ChbError::MeanMismatch(..)
                | ChbError::Snapshot { .. }
        )
    }
}
