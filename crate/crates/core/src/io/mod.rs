//! Scene ingestion, JSONL emission, pipeline configuration, and the
//! end-to-end generation pipeline.

use std::path::Path;

use thiserror::Error;

pub mod config;
pub mod jsonl;
pub mod pipeline;
pub mod schema;

pub use config::PipelineConfig;
pub use jsonl::{read_jsonl, write_jsonl};
pub use pipeline::{run_pipeline, PipelineOutput};
pub use schema::{ingest_scene, parse_scene, scene_to_json};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("{file}: schema violation at `{field}`{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Schema { file: String, field: String, line: Option<usize>, message: String },
    #[error("{file}: invariant violated: {message}")]
    Invariant { file: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("configuration: {0}")]
    Config(String),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID_INPUT: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;
pub const EXIT_FATAL: i32 = 4;

impl IoError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        IoError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            IoError::Schema { .. } | IoError::Invariant { .. } | IoError::Config(_) => EXIT_INVALID_INPUT,
            IoError::Io { .. } => EXIT_FATAL,
        }
    }
}
