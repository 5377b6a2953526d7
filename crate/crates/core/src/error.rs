use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (shapes, ranges, binary inputs).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Numerical failure during an update, e.g. non-finite gradients or losses.
    #[error("training error: {0}")]
    Training(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("checkpoint version mismatch: file has version {found}, this build reads version {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        // written negated so that NaN fails the check
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err($crate::error::Error::Contract(format!($($arg)+)));
        }
    };
}

pub(crate) use ensure;
