use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rational literal `{0}` (expected p or p/q)")]
    ParseRational(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("moment matrix is singular")]
    SingularMatrix,

    #[error("invalid scheme: {}", .0.join("; "))]
    InvalidScheme(Vec<String>),

    #[error("conserved count {n_c} out of range for q = {q} (need 1 <= n_c <= q)")]
    ConservedCount { n_c: usize, q: usize },

    #[error("expansion order {0} not supported (expected 1..=4)")]
    Order(usize),

    #[error("degree cap {cap} truncated a term of the order-{order} expansion")]
    Truncation { cap: u32, order: usize },

    #[error("relaxation rates are not all equal")]
    UnequalRates,

    #[error("{0}")]
    Unsupported(String),

    #[error("slow eigenvalue is degenerate: {0}")]
    DegenerateSlowEigenvalue(String),

    #[error("numeric instability at step {step}: {reason}")]
    NumericInstability { step: usize, reason: String },

    #[error("line {line}: {message}")]
    SchemeFile { line: usize, message: String },

    #[error("velocity {index} is not lattice-compatible: {reason}")]
    LatticeIncompatible { index: usize, reason: String },

    #[error("ill-conditioned least-squares fit (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("modal fit residual {residual:.3e} above threshold {threshold:.3e}")]
    FitResidual { residual: f64, threshold: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
