use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension {0} is outside the supported range 1..=3")]
    UnsupportedDimension(usize),

    #[error("point {0} is outside dom f")]
    NotInDomain(String),

    #[error("point {0} lies on the boundary of dom f")]
    BoundaryPoint(String),

    #[error("segment does not meet dom f")]
    EmptyDomainOnSegment,

    #[error("search region does not meet dom f")]
    EmptyRegion,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("f(xbar) = {fxbar} exceeds inf over the ball ({inf}) by more than eps = {eps}")]
    PreconditionSci { fxbar: f64, inf: f64, eps: f64 },

    #[error("lambda = {lambda} exceeds f(xbar) - f(x) = {bound}")]
    PreconditionLambda { lambda: f64, bound: f64 },

    #[error("no enlarged subgradient reaches {target} at grid step {h}; refine the grid")]
    NoSampleFound { target: f64, h: f64 },

    #[error("xbar is a minimizer over the region; nothing to refute")]
    IsActuallyOptimal,

    #[error("refutation failed: {0}")]
    RefutationFailed(String),

    #[error("operation requires a convex (single max-affine) function")]
    ConvexityRequired,

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("nonlinear term at line {line}, column {column}: product of two non-constant expressions")]
    Nonlinear { line: usize, column: usize },

    #[error("negative scale of a non-affine expression at line {line}, column {column}")]
    NegativeScale { line: usize, column: usize },

    #[error("abs() of a non-affine expression at line {line}, column {column}")]
    AbsOfNonAffine { line: usize, column: usize },

    #[error("normalized form needs {0} pieces, over the cap of {1}")]
    PieceCap(usize, usize),
}
