use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A model parameter violates one of the model invariants.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Malformed or inconsistent configuration input.
    #[error("invalid config: {0}")]
    Config(String),

    /// A closed-form quantity was requested outside of its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A statistic could not be computed from the supplied sample.
    #[error("statistics: {0}")]
    Statistics(String),

    /// A Poisson leap could not be made non-negative even at the minimum step.
    #[error("leap instability at t = {time}: step shrank below {min_step:e}")]
    LeapInstability { time: f64, min_step: f64 },

    /// Counts would exceed the representable range.
    #[error("population overflow at t = {time}")]
    Overflow { time: f64 },

    #[error("quadrature did not converge: estimated error {estimate:e} exceeds tolerance {tolerance:e}")]
    Quadrature { estimate: f64, tolerance: f64 },

    #[error("rate table line {line}: {message}")]
    RateTable { line: usize, message: String },

    #[error("replicate {index}: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the error stems from user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidParams(_)
            | Error::Config(_)
            | Error::Domain(_)
            | Error::RateTable { .. }
            | Error::Json(_) => true,
            Error::Replicate { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
