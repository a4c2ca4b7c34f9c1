use thiserror::Error;

/// Errors produced by the numerical kernels, the model and the tracer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is numerically singular (pivot {pivot:.3e} below floor {floor:.3e})")]
    SingularMatrix { pivot: f64, floor: f64 },

    #[error("matrix is rank deficient (sigma_min / sigma_max = {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("uniform-weight residual {e_uw:.3e} is below the consistency floor {floor:.3e}; nothing to continue")]
    ZeroResidual { e_uw: f64, floor: f64 },

    #[error("weight {index} is not strictly positive ({value:e})")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("Newton corrector failed after {iterations} iterations (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("MSE level {e:e} outside admissible range [{lo:e}, {hi:e}]")]
    OutOfRange { e: f64, lo: f64, hi: f64 },

    #[error("core set rows have rank {rank} < {n}")]
    CoreSetRankDeficient { rank: usize, n: usize },

    #[error("need at least {needed} samples in the fit range, found {found}")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("no simplex grid point meets the MSE band around {e:e}")]
    NoFeasibleGridPoint { e: f64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    ParseError {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
