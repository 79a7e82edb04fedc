use serde_json::json;

/// Failures of a CLI command, split by exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad config or arguments (exit 2). `key` names the offending entry.
    Validation { key: Option<String>, message: String },
    /// Failure while computing or writing results (exit 3).
    Runtime { message: String },
}

impl CliError {
    pub fn validation(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Validation {
            key: Some(key.into()),
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError::Runtime {
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => 2,
            CliError::Runtime { .. } => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation { message, .. } | CliError::Runtime { message } => message,
        }
    }

    pub fn key(&self) -> Option<&str> {
        match self {
            CliError::Validation { key, .. } => key.as_deref(),
            CliError::Runtime { .. } => None,
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        let kind = match self {
            CliError::Validation { .. } => "validation",
            CliError::Runtime { .. } => "runtime",
        };
        json!({
            "error": kind,
            "key": self.key(),
            "message": self.message(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.key() {
            Some(k) => write!(f, "{k}: {}", self.message()),
            None => write!(f, "{}", self.message()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime(format!("i/o error: {e}"))
    }
}

/// Errors raised by the numerical core while computing.
impl From<mfb_core::Error> for CliError {
    fn from(e: mfb_core::Error) -> Self {
        CliError::runtime(e.to_string())
    }
}
