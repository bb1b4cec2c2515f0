use thiserror::Error;

use crate::time::SpaceTimeField;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("finite element space does not belong to this mesh")]
    SpaceMismatch,

    #[error("time grids of the operands differ")]
    GridMismatch,

    #[error("PCG did not converge: {iters} iterations, residual {residual:.3e}")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("singular matrix: pivot {pivot:.3e} in column {column}")]
    SingularMatrix { pivot: f64, column: usize },

    #[error(
        "fixed-point iteration on interval {interval} exceeded {iters} iterations \
         (last increment {last_increment:.3e})"
    )]
    FixedPointCap {
        interval: usize,
        iters: usize,
        last_increment: f64,
    },

    #[error(
        "optimizer stopped after {iters} CG iterations with relative gradient {relative_gradient:.3e}"
    )]
    OptimizerMaxIter {
        iters: usize,
        relative_gradient: f64,
        best: Box<SpaceTimeField>,
    },

    #[error("nonpositive value {value} at position {index}")]
    NonPositive { index: usize, value: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a numerical method, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::SingularMatrix { .. }
                | Error::FixedPointCap { .. }
                | Error::OptimizerMaxIter { .. }
        )
    }
}
