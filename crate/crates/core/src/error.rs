use thiserror::Error;

pub type Result<T, E = AdmmError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdmmError {
    #[error("non-finite value produced by {0}")]
    NonFiniteValue(&'static str),
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("eigenvalue iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix dimension {0} exceeds the dense eigensolver cap {1}")]
    MatrixTooLarge(usize, usize),
    #[error("linear system is singular")]
    Singular,
    #[error("target epsilon must be positive")]
    NonPositiveEps,
    #[error("point lies outside the box (coordinate {0})")]
    InfeasiblePoint(usize),
    #[error("reference point has zero norm; absolute distance is {absolute:e}")]
    ZeroReference { absolute: f64 },
    #[error("coupling constraints cannot be eliminated: {0}")]
    NotReducible(String),
    #[error("reduced dimension {0} exceeds the grid oracle limit of 3")]
    DimensionTooLarge(usize),
    #[error("no grid node satisfies the coupling constraints inside the boxes")]
    EmptyFeasibleGrid,
    #[error("infeasible bounds: {0}")]
    InfeasibleBounds(String),
}
