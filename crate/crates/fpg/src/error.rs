use thiserror::Error;

/// Errors surfaced by the numerical engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A primitive was evaluated outside its domain (division by a value
    /// whose order-zero part is 0, sqrt/log of a non-positive value, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// More derivative directions were requested than the engine supports.
    #[error("arity error: {requested} directions requested, at most {max} supported")]
    Arity { requested: usize, max: usize },

    /// Dimension mismatch or an operation that requires n > 2.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// The fundamental tensor is numerically singular at a sample point.
    #[error("singular metric: {0}")]
    SingularMetric(String),

    /// A registered field failed its Euler homogeneity gate.
    #[error("homogeneity error: {0}")]
    Homogeneity(String),

    /// Expression parse failure with source position.
    #[error("syntax error at {line}:{col}: expected {expected}")]
    Syntax {
        line: usize,
        col: usize,
        expected: String,
    },

    #[error("unknown identifier '{0}'")]
    UnknownIdentifier(String),

    /// Finite-difference step selection collapsed below the usable floor.
    #[error("step underflow: h = {h:.3e} below {floor:.3e}")]
    StepUnderflow { h: f64, floor: f64 },

    /// CLI / configuration problems.
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;
