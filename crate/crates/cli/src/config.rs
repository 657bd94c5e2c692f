//! Pipeline configuration file (TOML).
//!
//! Relative paths resolve against the directory holding the config file.
//! `SKATECV_OUTPUT_DIR` overrides `paths.output_dir`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skatecv_core::fusion::FusionConfig;
use skatecv_core::roi::RoiParams;
use skatecv_core::tta::TtaConfig;

use crate::error::CliError;
use crate::mock::MockPredictorSpec;

pub const OUTPUT_DIR_ENV: &str = "SKATECV_OUTPUT_DIR";

pub const CROP_PLAN_FILE: &str = "crop_plan.jsonl";
pub const TTA_PLAN_FILE: &str = "tta_plan.jsonl";
pub const LOGITS_FILE: &str = "logits.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub detections: PathBuf,
    pub manifest: PathBuf,
    pub class_map: PathBuf,
    pub labels: PathBuf,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/logits.jsonl`, where `mock-predict` writes.
    #[serde(default)]
    pub logits: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub roi: RoiParams,
    #[serde(default)]
    pub tta: TtaConfig,
    pub fusion: FusionConfig,
    #[serde(default)]
    pub mock: MockPredictorSpec,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| e.in_file(path))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            cfg.paths.output_dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| CliError::invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(0.0..=1.0).contains(&self.roi.score_threshold) {
            return Err(CliError::invalid("roi.score_threshold must lie in [0, 1]"));
        }
        if !self.roi.pad_fraction.is_finite() || self.roi.pad_fraction < 0.0 {
            return Err(CliError::invalid("roi.pad_fraction must be >= 0"));
        }
        let t = &self.tta;
        if t.clip_len == 0 || t.stride == 0 || t.temporal_views == 0 {
            return Err(CliError::invalid(
                "tta.clip_len, tta.stride and tta.temporal_views must be >= 1",
            ));
        }
        if t.spatial_views != 3 {
            return Err(CliError::invalid("tta.spatial_views must be 3"));
        }
        self.fusion
            .validate()
            .map_err(|e| CliError::invalid(format!("fusion: {e}")))?;
        self.mock
            .validate()
            .map_err(|e| CliError::invalid(format!("mock: {e}")))?;
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let p = &mut self.paths;
        join(&mut p.detections);
        join(&mut p.manifest);
        join(&mut p.class_map);
        join(&mut p.labels);
        join(&mut p.output_dir);
        if let Some(l) = p.logits.as_mut() {
            join(l);
        }
    }

    pub fn output(&self, file: &str) -> PathBuf {
        self.paths.output_dir.join(file)
    }

    pub fn logits_path(&self) -> PathBuf {
        self.paths.logits.clone().unwrap_or_else(|| self.output(LOGITS_FILE))
    }
}
