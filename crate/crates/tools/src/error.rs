use std::path::Path;

/// Errors surfaced by the command-line tools.
#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: line {line}: {msg}")]
    Input { path: String, line: u64, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: tkjump::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

pub type Result<T, E = ToolError> = std::result::Result<T, E>;

impl ToolError {
    /// `2` for usage, configuration and input problems, `1` otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ToolError::Usage(_) | ToolError::Config(_) | ToolError::Input { .. } => 2,
            ToolError::Core { source, .. } => match source {
                tkjump::Error::InvalidConfig(_)
                | tkjump::Error::Domain(_)
                | tkjump::Error::Precondition(_)
                | tkjump::Error::Dimension { .. }
                | tkjump::Error::EmptyInput => 2,
                _ => 1,
            },
            ToolError::Io { .. } | ToolError::Runtime(_) => 1,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        ToolError::Io { path: path.display().to_string(), source }
    }
}

/// Attach context to core errors.
pub trait Context<T> {
    fn context(self, what: impl Into<String>) -> Result<T>;
}

impl<T> Context<T> for tkjump::Result<T> {
    fn context(self, what: impl Into<String>) -> Result<T> {
        self.map_err(|source| ToolError::Core { context: what.into(), source })
    }
}
