use thiserror::Error;

/// Errors raised by measure construction, the Dyson solvers and the rate machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("argument out of domain: {what} = {value} (expected {expected})")]
    Domain {
        what: &'static str,
        value: f64,
        expected: String,
    },

    #[error("degenerate model: lambda_max is trapped at 0 (use the degenerate rate function)")]
    Degenerate,

    #[error("root bracketing failed for {what}; sampled values: {samples:?}")]
    Bracketing {
        what: &'static str,
        samples: Vec<(f64, f64)>,
    },

    #[error("cannot decide finiteness of the edge Stieltjes transform: {0}")]
    EdgeIntegrability(String),

    #[error("complex Dyson solve diverged at x = {x}, eta = {eta}: {reason}")]
    NewtonDivergence { x: f64, eta: f64, reason: String },

    #[error("non-positive log argument {value} in J at node {node}")]
    LogArgument { node: f64, value: f64 },

    #[error("grid quality too poor: mass defect {defect:e} exceeds {limit:e}")]
    GridQuality { defect: f64, limit: f64 },

    #[error("supremum check failed: I(x, theta = {theta}) = {scan} exceeds I(x, theta_x) = {value} by more than {tol:e}")]
    SupremumViolation {
        theta: f64,
        scan: f64,
        value: f64,
        tol: f64,
    },

    #[error("quadrature did not reach tolerance: estimate {estimate}, error {error:e}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("sample too large: n*m = {entries} exceeds the cap {cap}")]
    TooLarge { entries: usize, cap: usize },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(what: &'static str, value: f64, expected: impl Into<String>) -> Error {
    Error::Domain {
        what,
        value,
        expected: expected.into(),
    }
}
