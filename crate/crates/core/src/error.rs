use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("API misuse: {0}")]
    Usage(String),
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($fmt:tt)+) => {
        // Bound first so NaN comparisons count as failures.
        {
            let ok: bool = $cond;
            if !ok {
                return Err($crate::error::Error::$variant(format!($($fmt)+)));
            }
        }
    };
}
pub(crate) use ensure;
