use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands that must agree in length or shape did not.
    Dimension {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    /// A block id or sample index outside the problem's range.
    Range {
        op: &'static str,
        index: usize,
        len: usize,
    },
    Config(String),
    /// A hyperparameter outside the region where an estimator is defined.
    Schedule(String),
    Input(String),
    State(String),
    Unsupported(&'static str),
    /// NaN or infinity produced by `op`, at solver step `step` when known.
    NonFinite { op: &'static str, step: Option<usize> },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, expected, found } => {
                write!(f, "{op}: dimension mismatch (expected {expected}, found {found})")
            }
            Error::Range { op, index, len } => {
                write!(f, "{op}: index {index} out of range for length {len}")
            }
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Schedule(msg) => write!(f, "schedule error: {msg}"),
            Error::Input(msg) => write!(f, "input error: {msg}"),
            Error::State(msg) => write!(f, "state error: {msg}"),
            Error::Unsupported(what) => write!(f, "unsupported: {what}"),
            Error::NonFinite { op, step: Some(t) } => {
                write!(f, "non-finite value produced by {op} at step {t}")
            }
            Error::NonFinite { op, step: None } => write!(f, "non-finite value produced by {op}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn check_len(op: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { op, expected, found })
    }
}

pub(crate) fn check_finite(op: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op, step: None })
    }
}
