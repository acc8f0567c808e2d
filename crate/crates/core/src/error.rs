use thiserror::Error;

/// Errors produced by the analytic, stochastic and engine layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A scalar parameter falls outside its admissible range.
    #[error("{name} out of range: {value}")]
    OutOfRange { name: &'static str, value: f64 },

    /// Prior probabilities that are negative or do not sum to one.
    #[error("invalid priors: xi0 = {xi0}, xi1 = {xi1} (must be non-negative and sum to 1)")]
    InvalidPriors { xi0: f64, xi1: f64 },

    /// A function was evaluated where it is undefined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A simulation configuration that cannot be run.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// A rate function exceeded the upper bound it declared for thinning.
    #[error("rate {rate} at t = {time} exceeds declared bound {bound}")]
    RateBoundExceeded { time: f64, rate: f64, bound: f64 },

    /// An adaptive numerical routine failed to reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::OutOfRange { name, value })
    }
}

pub(crate) fn check_priors(xi0: f64, xi1: f64) -> Result<()> {
    let ok = xi0.is_finite()
        && xi1.is_finite()
        && xi0 >= 0.0
        && xi1 >= 0.0
        && (xi0 + xi1 - 1.0).abs() <= 1e-12;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidPriors { xi0, xi1 })
    }
}
