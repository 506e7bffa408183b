use num_complex::Complex64;
use thiserror::Error;

use crate::spectral::PacketId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge: estimate {estimate}, relative change {relative_change:.3e}")]
    NumericConvergence {
        estimate: Complex64,
        relative_change: f64,
    },

    #[error("no overlap entry cached for packets {0:?} and {1:?}")]
    MissingOverlap(PacketId, PacketId),

    #[error("fidelity is undefined for a conditioned state with zero trace")]
    UndefinedFidelity,

    #[error("search degenerate: every probed input has zero success probability")]
    SearchDegenerate,

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
