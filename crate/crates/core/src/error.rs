use thiserror::Error;

/// Unified error type. Variants map onto the CLI exit code classes:
/// configuration/input problems, solver failures, and infeasible requests.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid domain spec: {0}")]
    InvalidSpec(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("resolution too coarse: {0}")]
    Resolution(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("nonpositive helicity: {0}")]
    NonPositiveHelicity(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Coarse classification used by callers that map errors to exit codes.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidSpec(_)
            | Error::Parse { .. }
            | Error::Precondition(_)
            | Error::DomainMismatch(_)
            | Error::Io(_) => ErrorClass::Config,
            Error::Resolution(_) | Error::Solver(_) | Error::DegenerateSpectrum(_) => {
                ErrorClass::Solver
            }
            Error::NonPositiveHelicity(_) | Error::Capacity(_) | Error::Infeasible(_) => {
                ErrorClass::Infeasible
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Solver,
    Infeasible,
}
