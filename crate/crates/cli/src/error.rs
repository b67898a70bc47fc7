use std::fmt;

use gbrl_core::Error;

/// Failure classes, each with a stable process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    /// Bad command-line syntax.
    Usage = 2,
    /// Unparseable config or unknown keys.
    Config = 3,
    /// Config values that violate an invariant.
    Invalid = 4,
    /// Unreadable or unwritable paths.
    Io = 5,
    /// Corrupt model files or a model that does not fit the environment.
    Model = 6,
    /// Training aborted.
    Training = 7,
}

impl Failure {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug)]
pub struct CliError {
    pub failure: Failure,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(failure: Failure, error: impl Into<anyhow::Error>) -> Self {
        Self {
            failure,
            error: error.into(),
        }
    }

    /// Classifies a library error raised while training.
    pub fn training(e: Error) -> Self {
        let failure = match &e {
            Error::Io(_) => Failure::Io,
            Error::InvalidConfig(_) => Failure::Invalid,
            Error::LayoutMismatch(_) => Failure::Model,
            _ => Failure::Training,
        };
        Self::new(failure, e)
    }

    /// Classifies a library error raised while loading or running a model.
    pub fn model(e: Error) -> Self {
        let failure = match &e {
            Error::Io(_) => Failure::Io,
            Error::InvalidConfig(_) => Failure::Invalid,
            _ => Failure::Model,
        };
        Self::new(failure, e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl std::error::Error for CliError {}
