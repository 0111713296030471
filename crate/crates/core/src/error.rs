use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry in operator")]
    NonFinite,

    #[error("operator is not Hermitian (asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("not a density matrix: {0}")]
    NotDensity(String),

    #[error("not an orthogonal projector (defect {0:.3e})")]
    NotProjector(f64),

    #[error("zero vector has no projective class")]
    ZeroVector,

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("jump probability budget exceeded: {total:.4} > {budget:.4} (reduce dt)")]
    JumpBudget { total: f64, budget: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid generator matrix: {0}")]
    InvalidGenerator(String),

    #[error("transport problem too large: {n}x{m} exceeds budget {budget}")]
    TransportBudget { n: usize, m: usize, budget: usize },

    #[error("state is off the Y=0 circle (|Y| = {0:.3e})")]
    OffCircle(f64),

    #[error("quadrature did not converge (estimated error {0:.3e})")]
    Quadrature(f64),

    #[error("unknown gallery example '{0}'")]
    UnknownExample(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
