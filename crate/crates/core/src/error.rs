use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible for `op`.
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// An operation produced NaN or an infinity.
    NonFinite { op: &'static str },
    /// Malformed input data (edge lists, labels, raw buffers).
    Input(String),
    /// Invalid configuration or hyperparameters.
    Config(String),
    /// A caller-side precondition was violated.
    Contract(String),
    /// The tape was asked to record an operation it does not know.
    Unsupported(String),
    /// Training produced a non-finite loss.
    Divergence { epoch: usize, loss: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { op, left, right } => write!(
                f,
                "dimension mismatch in {op}: {}x{} vs {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::NonFinite { op } => write!(f, "non-finite value produced by {op}"),
            Error::Input(msg) => write!(f, "input error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Unsupported(msg) => write!(f, "unsupported operation: {msg}"),
            Error::Divergence { epoch, loss } => {
                write!(f, "training diverged at epoch {epoch} (loss = {loss})")
            }
        }
    }
}

impl core::error::Error for Error {}
