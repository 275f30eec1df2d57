use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// [`Error::is_refusal`] separates principled refusals (violated standing
/// assumptions such as mixing or positive variance) from genuine errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies on a branch boundary")]
    BoundaryPoint { point: Vec<f64> },
    #[error("point {point:?} is outside every branch domain")]
    OutsideDomain { point: Vec<f64> },
    #[error("branch {label} has a singular linear part")]
    SingularBranch { label: String },
    #[error("expansion violated: s(T) = {s} >= 1")]
    ExpansionViolation { s: f64 },
    #[error("invalid branch {label}: {reason}")]
    InvalidBranch { label: String, reason: String },
    #[error("invalid rectangle: {0}")]
    InvalidRectangle(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("exact assembly does not support branch {label}: linear part must have one nonzero per row and column")]
    NonAffineExact { label: String },
    #[error("partition has no cells")]
    EmptyPartition,
    #[error("power iteration did not converge after {iterations} iterations (last estimate {estimate})")]
    NoConvergence { iterations: usize, estimate: f64 },
    #[error("power iteration collapsed to the zero vector")]
    ZeroIterate,
    #[error("leading eigenvalue {lambda} is not 1")]
    EigenvalueNotOne { lambda: f64 },
    #[error("observable is not centered: mean {mean}")]
    NotCentered { mean: f64 },
    #[error("correlations did not decay within {n_max} steps")]
    NonSummable { n_max: usize },
    #[error("transfer operator is not mixing: |lambda_2| = {lambda2} too close to |lambda_1| = {lambda1}")]
    NotMixing { lambda1: f64, lambda2: f64 },
    #[error("no valid twist window beyond theta = 0")]
    WindowCollapse,
    #[error("valid window [-{window}, {window}] too narrow for step h = {h}")]
    WindowTooNarrow { window: f64, h: f64 },
    #[error("variance {sigma2} is zero: the large deviation principle is degenerate")]
    ZeroVariance { sigma2: f64 },
    #[error("Lambda curve is not convex near theta = {theta}")]
    NonConvexCurve { theta: f64 },
    #[error("complex twist z = {re}+{im}i: leading eigenvalue not isolated")]
    ComplexEigenFailure { re: f64, im: f64 },
    #[error("epsilon {eps} is not on the rate function grid")]
    EpsilonMismatch { eps: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("schema error at `{path}`: {message}")]
    SchemaError { path: String, message: String },
    #[error("unknown map `{0}`")]
    UnknownMap(String),
    #[error("expression error: {0}")]
    Expression(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for refusals grounded in violated standing assumptions
    /// (non-mixing operator, vanishing variance).
    pub fn is_refusal(&self) -> bool {
        match self {
            Error::NotMixing { .. } | Error::ZeroVariance { .. } => true,
            Error::Stage { source, .. } => source.is_refusal(),
            _ => false,
        }
    }

    /// Innermost error, stripping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Error {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }
}
