use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum Error {
    /// A matrix or vector did not have the structure an operation needs
    /// (non-square, non power-of-two dimension, mismatched lengths).
    #[error("structural error: {0}")]
    Structure(String),
    /// Input violated an operation precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Problem size exceeds what the dense solver supports.
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    /// The interior-point solver stopped without meeting its tolerance.
    #[error("no convergence after {iterations} iterations (gap {gap:e}, objective {objective})")]
    Convergence {
        iterations: usize,
        gap: f64,
        objective: f64,
    },
    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
