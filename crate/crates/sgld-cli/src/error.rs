use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config{}: {msg}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn config(line: Option<usize>, msg: impl Into<String>) -> Self {
        CliError::Config { line, msg: msg.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    #[cfg(test)]
    pub fn line(&self) -> Option<usize> {
        match self {
            CliError::Config { line, .. } => *line,
            _ => None,
        }
    }

    /// 0 success, 1 runtime failure or failed check, 2 configuration error, 3 unsupported.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Unsupported(_) => 3,
            CliError::Runtime(_) | CliError::Io { .. } | CliError::ChecksFailed(_) => 1,
        }
    }
}

impl From<sgld::Error> for CliError {
    fn from(e: sgld::Error) -> Self {
        use sgld::Error as E;
        match e {
            E::InvalidParameter(_) | E::InvalidConfig(_) | E::MissingConstant(_) => CliError::config(None, e.to_string()),
            E::Unsupported(_) | E::EnumerationTooLarge { .. } => CliError::Unsupported(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
