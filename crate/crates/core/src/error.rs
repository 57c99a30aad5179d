use thiserror::Error;

/// Errors raised by the sampler toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate population at index {population}: all weights are zero")]
    DegeneratePopulation { population: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("point lies outside the model support")]
    OutOfSupport,
    #[error("metric is singular even after the maximum jitter of {jitter:e}")]
    SingularMetric { jitter: f64 },
    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },
    #[error("capability missing: {0}")]
    Capability(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("parameter lies on the boundary of a uniform prior support")]
    PriorBoundary,
    #[error("singular parameter: {0}")]
    SingularParameter(String),
    #[error("numerically degenerate truncation at time index {time_index}")]
    TruncationUnderflow { time_index: usize },
    #[error("degenerate truncation: normalizing mass {mass:e} is below 1e-300")]
    DegenerateTruncation { mass: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("internal contract violation: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
