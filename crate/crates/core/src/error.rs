use thiserror::Error;

/// Errors raised by mesh handling, local solves and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown element id {0}")]
    UnknownElement(usize),
    #[error("element {0} is not a leaf of the current mesh")]
    NotALeaf(usize),
    #[error("unknown face id {0}")]
    UnknownFace(usize),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error(
        "bisection closure did not terminate after {0} cascades (matching condition violated?)"
    )]
    ClosureDiverged(usize),
    #[error("mesh parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported polynomial degree {0} (expected 1, 2 or 3)")]
    Degree(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("linear solve failed: {0}")]
    Solve(String),
    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("squared error {0:.3e} is negative beyond roundoff")]
    NegativeError(f64),
    #[error("target does not vanish on the boundary (|u| = {0:.3e} at a sampled boundary point)")]
    NonzeroTrace(f64),
    #[error("no admissible face assignment: {0}")]
    FaceAssignment(String),
    #[error("budget {budget} too small for root mesh with {root} elements")]
    BudgetTooSmall { budget: usize, root: usize },
    #[error("budget {budget} too large for exhaustive enumeration (max {max})")]
    BudgetTooLarge { budget: usize, max: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
