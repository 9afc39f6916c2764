use bbfp_core::analysis::AnalysisError;
use bbfp_core::io::IoError;
use bbfp_core::nonlinear::NonlinearError;
use bbfp_core::tuner::TunerError;
use bbfp_core::{ArithError, FormatError};
use std::fmt;
use std::process::ExitCode;

/// Why a subcommand stopped; each kind has its own exit status.
#[derive(Debug)]
pub enum Failure {
    /// A requested check did not hold.
    Assertion(String),
    /// Invalid arguments or configuration.
    Usage(String),
    /// A file could not be read, parsed or written.
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Assertion(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
        })
    }

    /// Prefixes the message with what was being done.
    pub fn context(self, what: impl fmt::Display) -> Self {
        match self {
            Failure::Assertion(m) => Failure::Assertion(format!("{what}: {m}")),
            Failure::Usage(m) => Failure::Usage(format!("{what}: {m}")),
            Failure::Io(m) => Failure::Io(format!("{what}: {m}")),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Assertion(m) => write!(f, "assertion failed: {m}"),
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Io(m) => write!(f, "{m}"),
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<TunerError> for Failure {
    fn from(e: TunerError) -> Self {
        match e {
            TunerError::Io(_) | TunerError::Table(_) => Failure::Io(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

macro_rules! usage_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Usage(e.to_string())
            }
        }
    )*};
}

usage_errors!(FormatError, AnalysisError, ArithError, NonlinearError);
