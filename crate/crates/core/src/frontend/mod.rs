//! User surface: config parsing, experiment dispatch and reports.

pub mod config;
pub mod experiment;
pub mod syntax;

use thiserror::Error;

pub use crate::report::{emit_report, ExperimentKind, Format, ReportRecord};
pub use config::{parse_config, parse_config_file, Provenance, SimConfig};
pub use experiment::run_experiment;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{line}:{col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("{line}:{col}: `{path}`: {msg}")]
    Unit {
        path: String,
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("{line}:{col}: unknown key `{path}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey {
        path: String,
        line: usize,
        col: usize,
        suggestion: Option<String>,
    },
    #[error("{line}:{col}: `{path}`: expected {expected}, found {found}")]
    Type {
        path: String,
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("`{path}`: {msg}")]
    Range { path: String, msg: String },
    #[error("missing config section `{0}`")]
    MissingSection(String),
    #[error("`{path}`: cannot read `{file}`: {msg}")]
    File {
        path: String,
        file: String,
        msg: String,
    },
    #[error("{file}:{source}")]
    InFile {
        file: String,
        #[source]
        source: Box<ConfigError>,
    },
}

impl ConfigError {
    /// Prefixes the key path of a unit error raised below `key`.
    pub(crate) fn under_key(self, key: &str) -> Self {
        match self {
            ConfigError::Unit {
                path,
                line,
                col,
                msg,
            } => ConfigError::Unit {
                path: if path.is_empty() {
                    key.to_string()
                } else {
                    format!("{key}.{path}")
                },
                line,
                col,
                msg,
            },
            other => other,
        }
    }
}
