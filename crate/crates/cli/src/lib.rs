//! Library side of the maglev-nmpc command line: configuration loading,
//! report generation and the command implementations, kept callable for
//! integration tests.

pub mod commands;
pub mod config;
pub mod csv;
pub mod svg;

/// CLI failure classes with their stable exit codes: configuration errors
/// exit 1, runtime/levitation failures exit 2, I/O errors exit 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(msg) => write!(f, "configuration error: {msg}"),
            Self::Runtime(msg) => write!(f, "runtime error: {msg}"),
            Self::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Runtime(_) => 2,
            Self::Io(_) => 3,
        }
    }
}
