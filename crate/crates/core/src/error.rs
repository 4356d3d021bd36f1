use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {location}")]
    NonFinite { location: String },

    #[error("non-finite gradient entry at parameter index {index}")]
    NonFiniteGradient { index: usize },

    #[error("non-finite loss at iteration {iteration}: residual={residual}, boundary={boundary}, regularization={regularization}, strategy={strategy}")]
    NonFiniteLoss {
        iteration: usize,
        residual: f64,
        boundary: f64,
        regularization: f64,
        strategy: f64,
    },

    #[error("training diverged at iteration {iteration} (loss {loss:e})")]
    Divergence { iteration: usize, loss: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid too coarse: {points_per_wavelength:.2} points per fine wavelength (need at least 4)")]
    GridTooCoarse { points_per_wavelength: f64 },

    #[error("relative metric undefined: exact solution has zero norm")]
    ZeroNorm,

    #[error("effective rank undefined for an all-zero spectrum")]
    ZeroSpectrum,

    #[error("symmetric eigensolver did not converge")]
    EigenSolver,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
