use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("non-hermitian input: {0}")]
    NonHermitian(String),

    #[error("index {index} out of range (dimension {dim})")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("integrator failure at t = {t}: {reason}")]
    IntegratorFailure { t: f64, reason: String },

    #[error("requested order {requested} exceeds available kernel order {available}")]
    OrderExceedsKernels { requested: usize, available: usize },

    #[error("time {0} is not a point of the kernel grid")]
    TimeNotOnGrid(f64),

    #[error("spectral integral not converged at horizon {horizon}: defect {defect:e}")]
    NonConvergent { horizon: f64, defect: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
