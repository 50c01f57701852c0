use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Core(#[from] rabi_chaos::Error),

    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },

    #[error("oracle check failed: {0}")]
    Oracle(String),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    /// 2 for configuration problems, 3 when a cutoff hit its cap, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Core(rabi_chaos::Error::CutoffCap { .. }) => 3,
            _ => 1,
        }
    }
}
