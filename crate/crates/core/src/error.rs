use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoilError>;

#[derive(Debug, Error)]
pub enum CoilError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A forward pass produced a NaN or infinity. `layer` is zero-based over
    /// all affine layers, the output head being the last one.
    #[error("numeric overflow in layer {layer}")]
    NumericOverflow { layer: usize },

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    TrainingDiverged { epoch: usize },

    #[error("{method} diverged at iteration {iteration} with step size {step_size:e}; try a smaller step")]
    SolverDiverged {
        method: &'static str,
        iteration: usize,
        step_size: f64,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> CoilError {
    CoilError::InvalidArgument(msg.into())
}
