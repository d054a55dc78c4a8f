use thiserror::Error;

/// Errors raised by the simulation engines, the criteria evaluators and the
/// experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid overflow at t={t}: {mass:.3e} of the probability sits in the outer cells")]
    GridOverflow { t: f64, mass: f64 },

    #[error("non-finite quantum state at t={t}")]
    NonfiniteState { t: f64 },

    #[error("non-finite phase-space field at t={t}")]
    NonfiniteField { t: f64 },

    #[error("density matrix trace drifted to {trace} at t={t}")]
    TraceDrift { t: f64, trace: f64 },

    #[error("Gaussian closure broke down at t={t}: C_xx = {cxx} exceeds {bound}")]
    ClosureBreakdown { t: f64, cxx: f64, bound: f64 },

    #[error("criterion undefined at x={x}: force {force:.3e} vanishes")]
    SingularPoint { x: f64, force: f64 },

    #[error("divergence stretched by {stretch:.3e} within one renormalization interval at t={t}")]
    StretchOverflow { t: f64, stretch: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidGrid(_)
            | Error::InvalidModel(_)
            | Error::InvalidParameter(_) => 3,
            Error::Io(_) | Error::Json(_) => 1,
            _ => 2,
        }
    }
}
