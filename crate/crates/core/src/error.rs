use thiserror::Error;

/// Errors produced by the simulation toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlabError {
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{n} qubits exceeds the dimension cap of {cap}")]
    TooManyQubits { n: usize, cap: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("density matrix has eigenvalue {0:.3e} below the clamping window")]
    NegativeEigenvalue(f64),

    #[error("marginal spectral decomposition: inter-cluster gap {gap:.3e} within 10x of tolerance {tol:.3e}")]
    MarginalDecomposition { gap: f64, tol: f64 },

    #[error("phase matching ambiguous: gap {gap:.3e} below {threshold:.3e}")]
    AmbiguousPhaseMatching { gap: f64, threshold: f64 },

    #[error("evaluation budget exceeded: {requested} > {budget}")]
    BudgetExceeded { requested: usize, budget: usize },

    #[error("sample point x = {x} coincides with schedule boundary")]
    GridHitsBoundary { x: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, FlabError>;

impl From<serde_json::Error> for FlabError {
    fn from(err: serde_json::Error) -> Self {
        FlabError::Serialization(err.to_string())
    }
}
