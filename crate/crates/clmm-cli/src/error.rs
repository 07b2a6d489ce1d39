use std::fmt;

use clmm_core::error::error_code;

/// Everything the CLI can fail with. Wraps library errors so that every
/// failure surfaces on stderr as one `clmm: error[CODE]: message` line.
#[derive(Debug)]
pub enum CliError {
    Core(clmm_core::Error),
    Usage(String),
    VerifyFailed { gap: f64, tol: f64 },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => error_code(e),
            CliError::Usage(_) => "USAGE",
            CliError::VerifyFailed { .. } => "LIFT_MISMATCH",
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Usage(msg) => f.write_str(msg),
            CliError::VerifyFailed { gap, tol } => write!(
                f,
                "lifted model disagrees with the original: relative log-likelihood gap {gap:.3e} exceeds {tol:.0e}"
            ),
        }
    }
}

impl From<clmm_core::Error> for CliError {
    fn from(e: clmm_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(clmm_core::Error::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(clmm_core::Error::Json(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;
