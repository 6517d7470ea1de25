use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },
    #[error("layer {layer}: {message}")]
    Layer { layer: usize, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("a subspace basis is required for {0}")]
    MissingBasis(&'static str),
    #[error("points {0} and {1} coincide; nearest-neighbour ratio is undefined")]
    DuplicatePoints(usize, usize),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn shape_err(context: &'static str, expected: impl Into<String>, got: impl Into<String>) -> Error {
    Error::Shape {
        context,
        expected: expected.into(),
        got: got.into(),
    }
}

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidArgument(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
