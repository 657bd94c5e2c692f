use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use skatecv_core::fusion::FusionError;
use skatecv_core::jsonl::JsonlError;
use skatecv_core::metrics::MetricsError;
use skatecv_core::roi::RoiError;
use skatecv_core::tta::TtaError;
use thiserror::Error;

/// Exit code for validation failures.
pub const EXIT_VALIDATION: i32 = 1;
/// Exit code for I/O failures.
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorItem {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub video_id: Option<String>,
    pub message: String,
}

impl ErrorItem {
    pub fn new(message: impl Into<String>) -> Self {
        ErrorItem {
            video_id: None,
            message: message.into(),
        }
    }

    pub fn for_video(video_id: impl Into<String>, message: impl Into<String>) -> Self {
        ErrorItem {
            video_id: Some(video_id.into()),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation failed: {}", summarize(.0))]
    Validation(Vec<ErrorItem>),
    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: io::Error },
}

fn summarize(items: &[ErrorItem]) -> String {
    items
        .iter()
        .map(|i| match &i.video_id {
            Some(v) => format!("[{v}] {}", i.message),
            None => i.message.clone(),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

impl CliError {
    pub fn invalid(message: impl Into<String>) -> Self {
        CliError::Validation(vec![ErrorItem::new(message)])
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io { .. } => EXIT_IO,
        }
    }

    /// Machine-readable form printed on standard error.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Validation(items) => json!({"status": "error", "kind": "validation", "errors": items}),
            CliError::Io { path, source } => json!({
                "status": "error",
                "kind": "io",
                "errors": [{"path": path.display().to_string(), "message": source.to_string()}],
            }),
        }
    }

    /// Prefixes every message with the file it came from.
    pub fn in_file(self, path: &Path) -> Self {
        match self {
            CliError::Validation(items) => CliError::Validation(
                items
                    .into_iter()
                    .map(|i| ErrorItem {
                        message: format!("{}: {}", path.display(), i.message),
                        ..i
                    })
                    .collect(),
            ),
            io => io,
        }
    }
}

pub(crate) fn from_jsonl(path: &Path, e: JsonlError) -> CliError {
    match e {
        JsonlError::Io(source) => CliError::io(path, source),
        parse => CliError::invalid(format!("{}: {parse}", path.display())),
    }
}

pub(crate) fn from_roi(path: &Path, e: RoiError) -> CliError {
    match e {
        RoiError::Input(j) => from_jsonl(path, j),
        RoiError::NoDetections { video_id } => CliError::Validation(vec![ErrorItem::for_video(
            video_id,
            "no detections survive the score threshold",
        )]),
        RoiError::UnknownVideo { video_id, line } => CliError::Validation(vec![ErrorItem::for_video(
            video_id,
            format!("{}: line {line}: video missing from the manifest", path.display()),
        )]),
        RoiError::InvalidRecords(issues) => CliError::Validation(
            issues
                .into_iter()
                .map(|i| {
                    ErrorItem::for_video(
                        i.video_id,
                        format!("{}: line {}: {}", path.display(), i.line, i.message),
                    )
                })
                .collect(),
        ),
        other => CliError::invalid(other.to_string()),
    }
}

pub(crate) fn from_tta(video_id: &str, e: TtaError) -> CliError {
    CliError::Validation(vec![ErrorItem::for_video(video_id, e.to_string())])
}

pub(crate) fn from_fusion(path: &Path, e: FusionError) -> CliError {
    match e {
        FusionError::Input(j) => from_jsonl(path, j),
        FusionError::MissingViews(list) => CliError::Validation(
            list.into_iter()
                .map(|m| {
                    ErrorItem::for_video(
                        m.video_id,
                        format!("model {} is missing views {:?}", m.model_id, m.view_ids),
                    )
                })
                .collect(),
        ),
        FusionError::DuplicateRecord {
            video_id,
            model_id,
            view_id,
        } => CliError::Validation(vec![ErrorItem::for_video(
            video_id,
            format!("duplicate logits for model {model_id}, view {view_id}"),
        )]),
        other => CliError::invalid(format!("{}: {other}", path.display())),
    }
}

pub(crate) fn from_metrics(path: &Path, e: MetricsError) -> CliError {
    match e {
        MetricsError::Io(source) => CliError::io(path, source),
        MetricsError::MissingPredictions(ids) => CliError::Validation(
            ids.into_iter()
                .map(|v| ErrorItem::for_video(v, "labeled video has no prediction"))
                .collect(),
        ),
        other => CliError::invalid(format!("{}: {other}", path.display())),
    }
}
