use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, keys or values.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(#[from] dpsqkd::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}
