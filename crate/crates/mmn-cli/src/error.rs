//! Command failures and their exit codes.

use std::fmt;
use std::path::Path;

use mmn::MmnError;

/// Exit code for unreadable or invalid input.
pub const EXIT_INPUT: i32 = 2;
/// Exit code for numerical failures.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError { code: EXIT_INPUT, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        CliError { code: EXIT_NUMERIC, message: message.into() }
    }

    /// Wraps an I/O-style error with the path it concerns.
    pub fn io<E: fmt::Display>(path: &Path) -> impl Fn(E) -> CliError + '_ {
        move |e| CliError::input(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<MmnError> for CliError {
    fn from(e: MmnError) -> Self {
        match e {
            MmnError::NotPositiveDefinite(_)
            | MmnError::SkewnessOutOfRange(_)
            | MmnError::DimensionMismatch(_)
            | MmnError::InsufficientObservations { .. }
            | MmnError::InvalidConfig(_)
            | MmnError::DegenerateData(_)
            | MmnError::UnsupportedLaw(_) => CliError::input(e.to_string()),
            _ => CliError::numeric(e.to_string()),
        }
    }
}
