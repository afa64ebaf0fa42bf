use thiserror::Error;

/// Errors raised while building or propagating a donor spin model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid spin system: {0}")]
    InvalidSpec(String),

    #[error("invalid pulse schedule: {0}")]
    InvalidSchedule(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (relative residual {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("operator is not an orthogonal projector (residual {residual:.3e})")]
    NotProjector { residual: f64 },

    #[error("eigenstate {index} has electron-up population {population} too close to 1/2 to classify")]
    AmbiguousClassification { index: usize, population: f64 },

    #[error("eigensystem has the wrong layout: {0}")]
    WrongLayout(String),

    #[error("unknown state label `{0}`")]
    UnknownLabel(String),

    #[error("matrix exponential overflow (1-norm {norm:.3e})")]
    Overflow { norm: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("trajectory norm underflow at t = {time} us")]
    NormUnderflow { time: f64 },

    #[error("invalid jump channel weights: {0}")]
    InvalidChannelWeights(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
