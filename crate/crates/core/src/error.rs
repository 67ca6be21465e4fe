use alloc::string::String;

use crate::feedback::Violation;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {}x{}, right is {}x{}", left.0, left.1, right.0, right.1)]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("feedback constraint violated: {0}")]
    Constraint(Violation),

    #[error("feedback generation failed: {0}")]
    Generation(String),

    #[error("angle is undefined for a zero-norm operand")]
    UndefinedAngle,

    #[error("layer {layer} has no feedback matrix")]
    MissingFeedback { layer: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training diverged in epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape { op, left, right }
    }
}

impl From<Violation> for Error {
    fn from(v: Violation) -> Self {
        Error::Constraint(v)
    }
}
