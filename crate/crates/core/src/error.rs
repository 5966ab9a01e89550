use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("curve needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),

    #[error("degenerate edge {edge} (length {length:e})")]
    DegenerateEdge { edge: usize, length: f64 },

    #[error("enclosed area is zero")]
    ZeroArea,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("energy-stability condition 3γ(n) > γ(-n) violated near θ = {angle:.6} (margin {margin:e})")]
    ConditionViolated { angle: f64, margin: f64 },

    #[error("rank-deficient least-squares system at node {0}")]
    RankDeficient(usize),

    #[error("Newton iteration did not converge after {iterations} iterations (increment {increment:e}, residual {residual:e})")]
    NewtonDiverged {
        iterations: usize,
        increment: f64,
        residual: f64,
    },

    #[error("linear solve failed: zero pivot in column {0}")]
    LinearSolveFailed(usize),

    #[error("polygon is not simple: edges {0} and {1} intersect")]
    NonSimpleInput(usize, usize),

    #[error("error values must be positive, got {0:e}")]
    NonPositiveError(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
