use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite function value at {point:?}")]
    NonFinite { point: Vec<f64> },

    #[error("no history entries inside the neighbourhood of the current iterate")]
    EmptyHistory,

    #[error("empty input set")]
    EmptyInput,

    #[error("point coincides with the neighbourhood centre")]
    DegenerateDirection,

    #[error("point lies outside the neighbourhood (radicand {radicand})")]
    OutsideNeighbourhood { radicand: f64 },

    #[error("kernel matrix is not positive definite after jitter")]
    SingularKernel,

    #[error("vapour pressure has no root in [1e2, 1e7] Pa for density {rho}")]
    NoPressureRoot { rho: f64 },

    #[error("liquid level {h} m outside the tank")]
    TankLevel { h: f64 },

    #[error("no concentration possible: x_B = {x_b} <= x_F = {x_f}")]
    NoConcentration { x_b: f64, x_f: f64 },

    #[error("simulation aborted at t = {t}: {reason}")]
    SimulationAbort { t: f64, reason: String },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
