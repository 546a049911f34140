use alloc::string::String;

/// Errors raised by the numerical routines.
///
/// Classification outcomes such as "uncertified" or "no fixed point" are
/// values, not errors; these variants cover violated preconditions and
/// solver breakdowns.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid space model: {0}")]
    InvalidSpace(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point outside the map's domain region")]
    OutsideDomain,
    #[error("finite-difference step underflow")]
    StepUnderflow,
    #[error("degenerate derivative: smallest singular value {sigma_min:e} <= threshold {threshold:e}")]
    DegenerateDerivative { sigma_min: f64, threshold: f64 },
    #[error("auxiliary map is not injective: smallest singular value {sigma_min:e}")]
    DegenerateAuxiliary { sigma_min: f64 },
    #[error("iteration budget of {iterations} exhausted (last residual {residual:e})")]
    MaxIterExceeded { iterations: usize, residual: f64 },
    #[error("iterate left the body at step {iteration}")]
    EscapedBody { iteration: usize },
    #[error("raw iteration entered a 2-cycle at step {iteration}")]
    TwoCycle { iteration: usize },
    #[error("grid of {nodes} nodes exceeds the limit")]
    GridTooLarge { nodes: f64 },
    #[error("target at distance {distance:e} is outside the chart reach {reach:e}")]
    OutOfChart { distance: f64, reach: f64 },
    #[error("inversion did not converge (residual {residual:e})")]
    NonConvergent { residual: f64 },
    #[error("certification failed: {0}")]
    CertificationFailed(String),
    #[error("chart failure during continuation: {0}")]
    ChartFailure(String),
    #[error("continuation could not reach t = {target} (stopped at {reached})")]
    OutOfReach { reached: f64, target: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;
