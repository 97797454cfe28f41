use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("n not a power of two (or below 16): {0}")]
    GridSize(usize),
    #[error("grid length must be positive, got {0}")]
    GridLength(f64),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("non-finite value at grid index {index}")]
    NonFinite { index: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("configuration invariant violated for `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("blow-up at t2 = {t2}: {reason}")]
    BlowUp {
        t2: f64,
        reason: String,
        /// Trajectory up to the last finite snapshot.
        partial: Box<crate::nlse::Trajectory>,
    },
    #[error("snapshot index {index} out of range (trajectory length {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("expression singular at t2 = 0")]
    SingularTime,
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("field does not decay at the domain edges (edge/max = {ratio:.3e})")]
    NonDecaying { ratio: f64 },
    #[error("collocation too small: spectrum moved by {drift:.3e} under grid doubling")]
    CollocationTooSmall { drift: f64 },
    #[error("{0}")]
    Experiment(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures that are numerical rather than user errors.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::BlowUp { .. }
                | Error::Quadrature(_)
                | Error::NonDecaying { .. }
                | Error::CollocationTooSmall { .. }
                | Error::Experiment(_)
        )
    }
}
