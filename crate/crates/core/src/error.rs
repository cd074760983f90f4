use thiserror::Error;

/// Errors raised by the filtering library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("hyperparameter index {index} out of range for {count} hyperparameters")]
    InvalidIndex { index: usize, count: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("matrix not positive definite after jitter {jitter:e} (size {size})")]
    Factorization { size: usize, jitter: f64 },

    #[error("posterior variance {0:e} is negative beyond round-off")]
    NegativeVariance(f64),

    #[error("timestamp {next} does not follow previous timestamp {prev}")]
    NonIncreasingTime { prev: f64, next: f64 },

    #[error("prediction time {t} precedes last posterior refresh at {refreshed}")]
    StalePrediction { t: f64, refreshed: f64 },

    #[error("window holds {len} of {capacity} samples; a full window is required")]
    WindowNotFull { len: usize, capacity: usize },

    #[error("near-singular block update: denominator {0:e}")]
    NearSingular(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("closed loop diverged at t = {t} s")]
    Unstable { t: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
