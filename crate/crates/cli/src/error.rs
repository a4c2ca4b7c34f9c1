use std::fmt;
use std::path::Path;

use mewls::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_METHOD: u8 = 3;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
    /// Subcommand whose usage should accompany the message.
    pub usage_of: Option<&'static str>,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
            usage_of: None,
        }
    }

    /// A flag combination clap cannot express.
    pub fn flag(subcommand: &'static str, message: impl Into<String>) -> Self {
        CliError {
            usage_of: Some(subcommand),
            ..CliError::usage(message)
        }
    }

    pub fn method(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_METHOD,
            message: message.into(),
            usage_of: None,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::usage(format!("{}: {e}", path.display()))
    }

    /// Attaches the offending file to a core error.
    pub fn in_file(path: &Path, e: Error) -> Self {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NewtonDiverged { .. }
            | Error::NoFeasibleGridPoint { .. }
            | Error::SingularMatrix { .. }
            | Error::NonPositiveWeight { .. }
            | Error::CoreSetRankDeficient { .. }
            | Error::InsufficientSamples { .. } => EXIT_METHOD,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
            usage_of: None,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}
