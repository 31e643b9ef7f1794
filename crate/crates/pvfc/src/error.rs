use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum PvfcError {
    /// Bad command line or configuration.
    #[error("{0}")]
    Usage(String),
    /// Malformed input file.
    #[error("{}", located(.file, *.line, .msg))]
    Format { file: String, line: Option<u64>, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] pvfc_core::Error),
}

fn located(file: &str, line: Option<u64>, msg: &str) -> String {
    match line {
        Some(l) => format!("{file}: line {l}: {msg}"),
        None => format!("{file}: {msg}"),
    }
}

impl PvfcError {
    pub fn usage(msg: impl Into<String>) -> Self {
        PvfcError::Usage(msg.into())
    }

    pub fn format(file: &str, line: Option<u64>, msg: impl Into<String>) -> Self {
        PvfcError::Format { file: file.to_string(), line, msg: msg.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PvfcError::Io { path: path.into(), source }
    }

    /// 1 for usage and configuration errors, 2 for everything data-related.
    pub fn exit_code(&self) -> i32 {
        match self {
            PvfcError::Usage(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, PvfcError>;
