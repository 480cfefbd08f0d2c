use nalgebra::DVector;
use thiserror::Error;

/// Every failure the library can signal.
#[derive(Debug, Error)]
pub enum JdiError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("interpolator is singular or non-square: {0}")]
    SingularInterpolator(String),

    #[error("sinkhorn balancing did not converge after {iterations} iterations (residual {residual:e})")]
    BalanceFailure { iterations: usize, residual: f64 },

    #[error("patch has no usable source pixels: {0}")]
    OutOfBoundsPatch(String),

    #[error("degenerate homography: {0}")]
    DegenerateHomography(String),

    #[error("interpolator rows are rank deficient (rank {rank} of {rows})")]
    RankDeficientInterpolator { rank: usize, rows: usize },

    #[error("solver failed after {iterations} iterations (relative residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64, best: Box<DVector<f64>> },

    #[error("degenerate system: {0}")]
    DegenerateSystem(String),

    #[error("singular block: {0}")]
    SingularBlock(String),

    #[error("malformed image at byte {offset}: {message}")]
    MalformedImage { offset: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, JdiError>;

pub(crate) fn invalid(msg: impl Into<String>) -> JdiError {
    JdiError::InvalidArgument(msg.into())
}
