//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Error raised while parsing a rate expression.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("parse error at byte {position}: expected {expected}")]
pub struct ParseError {
    /// Byte offset into the source text.
    pub position: usize,
    /// Description of what the parser was looking for.
    pub expected: String,
}

/// Unified error for grid construction, root finding, eigen iterations,
/// model evaluation and the solver pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bad grid: {0}")]
    BadGrid(String),

    #[error("non-finite value: {context}")]
    NonFinite { context: String },

    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("matrix is not Metzler: entry ({i}, {j}) = {value} is negative off the diagonal")]
    NotMetzler { i: usize, j: usize, value: f64 },

    #[error("no convergence within {max_iter} iterations (estimate {estimate}, residual {residual})")]
    NoConvergence {
        max_iter: usize,
        estimate: f64,
        residual: f64,
    },

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("unbound variable `{name}`")]
    UnboundVariable { name: String },

    #[error("domain error evaluating {context} at {at}")]
    Domain { context: String, at: f64 },

    #[error("structural point {point} is not a grid node")]
    GridMisaligned { point: f64 },

    #[error("operation `{op}` does not apply to the {model} model")]
    ModelUnsupported { op: &'static str, model: &'static str },

    #[error("config error: {0}")]
    Config(String),

    #[error("resolvent validity condition violated: fertile integral = {integral} (must be < 1)")]
    ResolventConditionViolated { integral: f64 },

    #[error("level function at the origin is {value}; expected > 0")]
    BadOrigin { value: f64 },

    #[error("no outer sign change on ray theta = {theta}: value at radius {r_max} is {value}")]
    NoOuterSignChange { theta: f64, r_max: f64, value: f64 },

    #[error("ray theta = {theta} failed: {source}")]
    RayFailed {
        theta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("no diagonal crossing; sampled (t, g(t)) pairs: {samples:?}")]
    NoCrossing { samples: Vec<(f64, f64)> },

    #[error("environment image is not parallel to the target (sine of angle = {sine})")]
    NotParallel { sine: f64 },

    #[error("strict positivity failure: a nonnegative ray is mapped to zero")]
    StrictPositivityFailure,

    #[error("degenerate environment: both components vanish")]
    DegenerateEnvironment,

    #[error("hypothesis violated: {detail}")]
    HypothesisViolated { detail: String },
}

impl Error {
    /// True for failures of the solvability hypotheses (as opposed to usage
    /// or numerical plumbing errors). The command line maps these to a
    /// dedicated exit code.
    pub fn is_hypothesis_violation(&self) -> bool {
        matches!(
            self,
            Error::HypothesisViolated { .. }
                | Error::BadOrigin { .. }
                | Error::NoOuterSignChange { .. }
        )
    }
}
