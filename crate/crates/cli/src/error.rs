use std::path::PathBuf;

use gapdiff::ErrorFamily;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}: {key}: {message}", at_line(.line))]
    Config {
        line: Option<usize>,
        key: String,
        message: String,
    },
    #[error(transparent)]
    Core(#[from] gapdiff::Error),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn at_line(line: &Option<usize>) -> String {
    line.map(|l| format!(" at line {l}")).unwrap_or_default()
}

impl CliError {
    pub(crate) fn config(line: usize, key: &str, message: impl Into<String>) -> Self {
        CliError::Config {
            line: Some(line),
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for configuration and input errors, 3 for
    /// solver failures, 4 for geometry errors, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Core(e) => match e.family() {
                ErrorFamily::Input => 2,
                ErrorFamily::Solver => 3,
                ErrorFamily::Geometry => 4,
            },
            CliError::Io { .. } => 1,
        }
    }
}
