use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration at `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{0}")]
    Runtime(#[from] lnml_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: unsupported model file ({message})")]
    Schema { path: String, message: String },
}

impl CliError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Validation { field: field.into(), message: message.into() }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io { path: path.as_ref().display().to_string(), source }
    }

    /// 1 for configuration problems, 2 for failures while training or evaluating, 3 for
    /// file access. Unreadable data files count as I/O even when reported by the loader.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation { .. } => 1,
            Self::Runtime(lnml_core::Error::Io { .. }) | Self::Io { .. } | Self::Schema { .. } => 3,
            Self::Runtime(lnml_core::Error::Parse { .. } | lnml_core::Error::EmptyDataset(_)) => 3,
            Self::Runtime(_) => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
