use std::fmt;

/// Failure classes and their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Output or other filesystem failure (exit 1).
    Io(String),
    /// Bad flags, config values or missing input paths (exit 2).
    Config(String),
    /// Malformed or unusable input data (exit 3).
    Data(String),
    /// Numerical failure such as a singular system (exit 4).
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            CliError::Io(m) => ("io error", m),
            CliError::Config(m) => ("config error", m),
            CliError::Data(m) => ("data error", m),
            CliError::Numeric(m) => ("numeric error", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl From<tlx_core::Error> for CliError {
    fn from(e: tlx_core::Error) -> Self {
        use tlx_core::{Error, ErrorKind};
        let msg = e.to_string();
        match (&e, e.kind()) {
            (Error::Io { .. }, ErrorKind::Data) => CliError::Io(msg),
            (_, ErrorKind::Config) => CliError::Config(msg),
            (_, ErrorKind::Data) => CliError::Data(msg),
            (_, ErrorKind::Numeric) => CliError::Numeric(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Writes a file, mapping failures to [`CliError::Io`].
pub fn write(path: &std::path::Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}
