use crate::solvers::SolveTrace;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is not Hermitian: asymmetry {asymmetry:.3e} exceeds tolerance {tolerance:.3e}")]
    NotHermitian { asymmetry: f64, tolerance: f64 },

    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("vector length {0} is not a perfect square")]
    NotPerfectSquare(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("rank bound {rank} outside 1..={dim}")]
    RankOutOfRange { rank: usize, dim: usize },

    #[error("eigendecomposition failed: {0}")]
    Eigensolver(String),

    #[error("singular value decomposition failed: {0}")]
    Factorization(String),

    #[error("not a density matrix: {0}")]
    NotDensity(String),

    #[error("matrix is not positive semidefinite: minimum eigenvalue {min_eigenvalue:.3e}")]
    NotPsd { min_eigenvalue: f64 },

    #[error("invalid weight {weight} at index {index}: weights must be positive")]
    InvalidWeight { index: usize, weight: f64 },

    #[error("affine constraints are inconsistent: |LL^+b - b| = {gap:.3e} with |b| = {rhs_norm:.3e}")]
    InconsistentAffine { gap: f64, rhs_norm: f64 },

    #[error("basis columns are not orthonormal: |V*V - I| = {defect:.3e}")]
    NonOrthonormal { defect: f64 },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("no feasible point found from the initial start ({} iterations, residual {:.3e})", .0.iterations, .0.final_residual)]
    InfeasibleOrHard(Box<SolveTrace>),

    #[error("overshoot search reached 2^{max_exponent} without leaving the PSD cone")]
    DegenerateDirection { max_exponent: u32 },

    #[error("rank-constrained solve did not converge even at the starting rank {rank}")]
    InfeasibleAtStart { rank: usize, trace: Box<SolveTrace> },

    #[error("{location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
