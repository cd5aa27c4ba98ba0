use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two quantities that must agree in size do not.
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A model or parameter is outside its admissible set.
    Config(String),
    /// A matrix required to be positive definite failed to factor. `constraint`
    /// names the inequality that was violated upstream.
    NotPositiveDefinite { constraint: &'static str },
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, found: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            found,
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NotPositiveDefinite { .. })
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension {
                what,
                expected,
                found,
            } => write!(
                f,
                "dimension mismatch in {what}: expected {expected}, found {found}"
            ),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Error::NotPositiveDefinite { constraint } => {
                write!(f, "matrix not positive definite: {constraint}")
            }
        }
    }
}

impl core::error::Error for Error {}
