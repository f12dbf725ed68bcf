use std::fmt;
use std::path::Path;

/// A failure mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Missing or unreadable files, failed writes. Exit code 1.
    Io(String),
    /// Bad arguments, malformed files, infeasible requests. Exit code 2.
    Invalid(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Invalid(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io(_) => "io",
            CliError::Invalid(_) => "validation",
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Invalid(msg.into())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) | CliError::Invalid(m) => f.write_str(m),
        }
    }
}

impl From<nfconv::Error> for CliError {
    fn from(e: nfconv::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches the path to a library error without changing its class.
pub fn at(path: &Path) -> impl FnOnce(nfconv::Error) -> CliError + '_ {
    move |e| match CliError::from(e) {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        CliError::Invalid(m) => CliError::Invalid(format!("{}: {m}", path.display())),
    }
}
