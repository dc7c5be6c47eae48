use std::path::PathBuf;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {}", list_fields(.0))]
    Config(Vec<(String, String)>),
    #[error("cannot parse config {path}: {reason}")]
    ConfigSyntax { path: String, reason: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error(transparent)]
    Core(#[from] mae_core::Error),
}

fn list_fields(problems: &[(String, String)]) -> String {
    problems
        .iter()
        .map(|(field, reason)| format!("{field} {reason}"))
        .collect::<Vec<_>>()
        .join("; ")
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::ConfigSyntax { .. } => "config_syntax",
            CliError::UnknownPreset(_) => "unknown_preset",
            CliError::Io { .. } => "io",
            CliError::Manifest { .. } => "manifest",
            CliError::Core(e) => match e {
                mae_core::Error::Shape { .. } => "shape",
                mae_core::Error::NumericOverflow(_) => "numeric_overflow",
                mae_core::Error::Capability(_) => "capability",
                mae_core::Error::Parameter { .. } => "parameter",
                mae_core::Error::Disconnected { .. } => "disconnected_graph",
                mae_core::Error::GenerationExhausted { .. } => "generation_exhausted",
                mae_core::Error::Degenerate(_) => "degenerate",
                mae_core::Error::Parse { .. } => "parse",
                mae_core::Error::Format { .. } => "format",
                mae_core::Error::Diverged { .. } => "diverged",
                mae_core::Error::Io(_) => "io",
            },
        }
    }

    /// Machine-readable form written to stderr by the binary.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({ "error": self.kind(), "message": self.to_string() });
        match self {
            CliError::Config(problems) => {
                v["fields"] = problems
                    .iter()
                    .map(|(f, r)| json!({ "field": f, "reason": r }))
                    .collect();
            }
            CliError::Core(mae_core::Error::Parameter { name, .. }) => {
                v["fields"] = json!([{ "field": name }]);
            }
            CliError::Core(mae_core::Error::Parse { row, .. }) => {
                v["row"] = json!(row);
            }
            CliError::Core(mae_core::Error::Diverged { epoch, .. }) => {
                v["epoch"] = json!(epoch);
            }
            _ => {}
        }
        v
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
