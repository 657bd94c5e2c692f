//! Deterministic, model-free machinery for a figure-skating action
//! recognition pipeline.
//!
//! Neural predictors are treated as external producers of logits. This crate
//! covers everything around them:
//!
//! - [`roi`]: per-frame human detections to one codec-safe crop per video.
//! - [`tta`]: the temporal × spatial test-time-augmentation view plan.
//! - [`fusion`]: softmax, view fusion, variant aggregation and the vote /
//!   weighted ensembles.
//! - [`metrics`]: mean per-class accuracy and leaderboard rendering.
//! - [`jsonl`]: line-delimited record parsing shared by the stages.

pub mod fusion;
pub mod jsonl;
pub mod metrics;
pub mod roi;
pub mod tta;

pub use fusion::{
    argmax, ensemble_vote, ensemble_weighted, fuse_views, softmax, EnsembleConfig, EnsembleStrategy, FusionConfig,
    FusionError, LogitsRecord, Prediction, ProbVector,
};
pub use metrics::{
    leaderboard_table, mean_class_accuracy, ClassMap, EvaluationReport, LabelSet, Leaderboard, MetricsError,
};
pub use roi::{
    consolidate_box, emit_crop_filter, ingest_detections, make_crop_spec, BoundingBox, CropSpec, DetectionTrack,
    RoiError, VideoInfo,
};
pub use tta::{build_tta_plan, spatial_crops, temporal_windows, TtaConfig, TtaError, TtaPlan};
