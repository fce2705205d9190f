use std::fmt;
use std::process::ExitCode;

/// Failure classes, each with its own process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Input,
    Insufficient,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Usage, message: message.into() }
    }

    pub fn input(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Input, message: message.into() }
    }

    pub fn insufficient(message: impl Into<String>) -> Self {
        CliError { kind: Kind::Insufficient, message: message.into() }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self.kind {
            Kind::Usage => 1,
            Kind::Input => 2,
            Kind::Insufficient => 3,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Wraps an I/O failure on `path` as an input error.
pub fn io_error(path: &std::path::Path, err: std::io::Error) -> CliError {
    CliError::input(format!("{}: {err}", path.display()))
}
