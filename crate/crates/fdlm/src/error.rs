use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, FdlmError>;

/// Errors produced by model construction, filtering, and sampling.
#[derive(Debug, Error)]
pub enum FdlmError {
    /// A parameter is outside its admissible domain (non-positive variance,
    /// unordered grid, weight not finite, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Matrix or vector dimensions are inconsistent with the model.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Two grids that must agree (exactly, point by point) do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A covariance factorization failed even at the maximum jitter level.
    #[error("singular operator: {0}")]
    SingularOperator(String),

    /// The brute-force oracle was asked for a problem larger than it is
    /// meant to handle.
    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    /// A chain has zero variance, so autocorrelation-based diagnostics are
    /// undefined.
    #[error("degenerate chain: {0}")]
    DegenerateChain(String),

    /// Not enough samples for the requested diagnostic.
    #[error("chain too short: length {len}, need at least {min}")]
    ChainTooShort { len: usize, min: usize },

    /// A summary was requested from an empty set of posterior draws.
    #[error("empty posterior draws")]
    EmptyDraws,

    /// Band extraction was requested but the sampler did not keep state
    /// trajectories.
    #[error("state draws were not saved; enable save_states")]
    MissingStateDraws,

    /// A sampler or run configuration failed validation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A numerical failure inside the posterior sampler, annotated with
    /// where it happened.
    #[error("sampler aborted at iteration {iteration} during {step}: {source}")]
    SamplerAbort {
        iteration: usize,
        step: &'static str,
        #[source]
        source: Box<FdlmError>,
    },
}
