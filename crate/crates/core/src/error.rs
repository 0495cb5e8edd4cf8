use alloc::string::String;

/// Errors raised by the solvers and selectors.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite value encountered in {0}")]
    Numeric(&'static str),
    #[error("no valid grid point: {0}")]
    Selection(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! ensure {
    ($cond:expr, $variant:ident, $($arg:tt)+) => {
        // `!(a > b)` on purpose: NaN fails every check
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        let failed = !$cond;
        if failed {
            return Err($crate::Error::$variant(alloc::format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
