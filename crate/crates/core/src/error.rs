use alloc::string::String;

/// Errors raised by the core numerics and learning rules.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    /// Zero-norm directions and other measure-zero events.
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidParameter(alloc::format!($($arg)*))
    };
}

macro_rules! shape {
    ($($arg:tt)*) => {
        $crate::error::Error::ShapeMismatch(alloc::format!($($arg)*))
    };
}

macro_rules! degenerate {
    ($($arg:tt)*) => {
        $crate::error::Error::Degenerate(alloc::format!($($arg)*))
    };
}

pub(crate) use degenerate;
pub(crate) use invalid;
pub(crate) use shape;
