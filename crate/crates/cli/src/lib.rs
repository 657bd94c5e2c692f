//! Batch pipeline over the `skatecv-core` stages.
//!
//! Stages hand off through files in the output directory:
//!
//! ```text
//! crop-plan    detections + manifest       -> crop_plan.jsonl
//! tta-plan     manifest + crop_plan.jsonl  -> tta_plan.jsonl
//! mock-predict labels + tta_plan.jsonl     -> logits.jsonl
//! fuse         logits.jsonl + class map    -> predictions.jsonl
//! evaluate     predictions.jsonl + labels  -> report.json
//! ```

pub mod commands;
pub mod config;
pub mod error;
pub mod fixture;
pub mod mock;

pub use commands::{cmd_crop_plan, cmd_evaluate, cmd_fuse, cmd_mock_predict, cmd_tta_plan, run_all};
pub use config::PipelineConfig;
pub use error::CliError;
pub use mock::MockPredictorSpec;
