//! The pipeline stages. Every stage reads its inputs from declared files and
//! writes its output atomically into the output directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use skatecv_core::fusion::{self, model_probabilities, ModelProbs};
use skatecv_core::jsonl;
use skatecv_core::metrics::{
    leaderboard_table, mean_class_accuracy, ClassMap, EvaluationReport, LabelSet, Leaderboard,
};
use skatecv_core::roi::{self, plan_crop, CropPlanRecord, VideoInfo};
use skatecv_core::tta::{build_tta_plan, TtaViewRecord};
use skatecv_core::{EnsembleStrategy, LogitsRecord};

use crate::config::{PipelineConfig, CROP_PLAN_FILE, PREDICTIONS_FILE, REPORT_FILE, TTA_PLAN_FILE};
use crate::error::{from_fusion, from_jsonl, from_metrics, from_roi, from_tta, CliError, ErrorItem};
use crate::mock::generate_logits;

pub const VOTE_METHOD: &str = "Model Voter";
pub const WEIGHTED_METHOD: &str = "Model Weighted Summation";

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

/// Writes to a temporary file next to `path` and renames it into place.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = File::create(&tmp).and_then(|f| {
        let mut w = BufWriter::new(f);
        body(&mut w)?;
        w.flush()?;
        w.get_ref().sync_all()
    });
    if let Err(e) = result.and_then(|_| fs::rename(&tmp, path)) {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

fn read_manifest(cfg: &PipelineConfig) -> Result<Vec<VideoInfo>, CliError> {
    let path = &cfg.paths.manifest;
    roi::read_manifest(open(path)?).map_err(|e| from_roi(path, e))
}

fn read_class_map(cfg: &PipelineConfig) -> Result<ClassMap, CliError> {
    let path = &cfg.paths.class_map;
    ClassMap::parse(open(path)?).map_err(|e| from_metrics(path, e))
}

fn read_labels(cfg: &PipelineConfig, classes: &ClassMap) -> Result<LabelSet, CliError> {
    let path = &cfg.paths.labels;
    LabelSet::parse(open(path)?, classes).map_err(|e| from_metrics(path, e))
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, CliError> {
    jsonl::read_all(open(path)?).map_err(|e| from_jsonl(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CropPlanSummary {
    pub output: PathBuf,
    pub videos: usize,
    pub degenerate_dropped: usize,
    pub rejected_records: usize,
}

/// `crop-plan`: detections + manifest to one crop per video.
pub fn cmd_crop_plan(cfg: &PipelineConfig) -> Result<CropPlanSummary, CliError> {
    let manifest = read_manifest(cfg)?;
    let det_path = &cfg.paths.detections;
    let ingestion =
        roi::ingest_detections(open(det_path)?, &manifest, cfg.strict).map_err(|e| from_roi(det_path, e))?;
    if ingestion.degenerate_dropped > 0 {
        warn!(
            "dropped {} box(es) left empty after clamping",
            ingestion.degenerate_dropped
        );
    }
    for issue in &ingestion.rejected {
        warn!("line {}: {} ({})", issue.line, issue.message, issue.video_id);
    }

    let mut records = Vec::with_capacity(ingestion.tracks.len());
    let mut errors = Vec::new();
    for track in &ingestion.tracks {
        match plan_crop(track, &cfg.roi) {
            Ok(spec) => records.push(spec.to_record()),
            Err(e) => match from_roi(det_path, e) {
                CliError::Validation(items) => errors.extend(items),
                io => return Err(io),
            },
        }
    }
    if !errors.is_empty() {
        return Err(CliError::Validation(errors));
    }

    let output = cfg.output(CROP_PLAN_FILE);
    write_atomic(&output, |w| jsonl::write_all(w, &records))?;
    info!("wrote {} crop(s) to {}", records.len(), output.display());
    Ok(CropPlanSummary {
        output,
        videos: records.len(),
        degenerate_dropped: ingestion.degenerate_dropped,
        rejected_records: ingestion.rejected.len(),
    })
}

/// `tta-plan`: manifest + crop plan to the view plan.
pub fn cmd_tta_plan(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    let manifest = read_manifest(cfg)?;
    let crop_path = cfg.output(CROP_PLAN_FILE);
    let crops: BTreeMap<String, CropPlanRecord> = read_records::<CropPlanRecord>(&crop_path)?
        .into_iter()
        .map(|(_, r)| (r.video_id.clone(), r))
        .collect();

    let mut errors = Vec::new();
    let mut lines: Vec<TtaViewRecord> = Vec::new();
    let mut by_id: BTreeMap<&str, &VideoInfo> = BTreeMap::new();
    for v in &manifest {
        by_id.insert(&v.video_id, v);
    }
    for id in crops.keys() {
        if !by_id.contains_key(id.as_str()) {
            errors.push(ErrorItem::for_video(
                id.clone(),
                "crop plan entry without a manifest entry",
            ));
        }
    }
    for (id, video) in &by_id {
        let Some(crop) = crops.get(*id) else {
            errors.push(ErrorItem::for_video(*id, "no crop plan entry"));
            continue;
        };
        match build_tta_plan(video, &crop.to_spec(), &cfg.tta) {
            Ok(plan) => lines.extend(plan.records()),
            Err(e) => match from_tta(id, e) {
                CliError::Validation(items) => errors.extend(items),
                io => return Err(io),
            },
        }
    }
    if !errors.is_empty() {
        return Err(CliError::Validation(errors));
    }

    let output = cfg.output(TTA_PLAN_FILE);
    write_atomic(&output, |w| jsonl::write_all(w, &lines))?;
    info!("wrote {} view(s) to {}", lines.len(), output.display());
    Ok(output)
}

/// `mock-predict`: synthesizes logits for every planned view of every leaf
/// model, peeking at the labels.
pub fn cmd_mock_predict(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    let classes = read_class_map(cfg)?;
    let labels = read_labels(cfg, &classes)?;
    let plan_path = cfg.output(TTA_PLAN_FILE);
    let mut views: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    for (_, r) in read_records::<TtaViewRecord>(&plan_path)? {
        views.entry(r.video_id).or_default().push(r.view_id);
    }
    for ids in views.values_mut() {
        ids.sort_unstable();
        ids.dedup();
    }
    let models: Vec<String> = cfg.fusion.leaf_models().into_keys().collect();
    let logits = generate_logits(&cfg.mock, &models, labels.entries(), &views, classes.len())
        .map_err(|m| CliError::invalid(format!("mock predictor: {m}")))?;

    let output = cfg.output(crate::config::LOGITS_FILE);
    write_atomic(&output, |w| jsonl::write_all(w, &logits))?;
    info!("wrote {} logits record(s) to {}", logits.len(), output.display());
    Ok(output)
}

fn load_model_probs(cfg: &PipelineConfig, classes: &ClassMap) -> Result<ModelProbs, CliError> {
    let path = cfg.logits_path();
    let records = read_records::<LogitsRecord>(&path)?;
    model_probabilities(records, classes.len(), &cfg.fusion, cfg.tta.num_views()).map_err(|e| from_fusion(&path, e))
}

/// `fuse`: logits to predictions under the configured ensemble strategy.
pub fn cmd_fuse(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    let classes = read_class_map(cfg)?;
    let probs = load_model_probs(cfg, &classes)?;
    let logits_path = cfg.logits_path();
    let predictions = probs
        .iter()
        .map(|(video, models)| fusion::ensemble_video(video, models, &cfg.fusion.ensemble, &classes))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| from_fusion(&logits_path, e))?;

    let output = cfg.output(PREDICTIONS_FILE);
    write_atomic(&output, |w| jsonl::write_all(w, &predictions))?;
    info!(
        "wrote {} prediction(s) ({} ensemble) to {}",
        predictions.len(),
        cfg.fusion.ensemble.strategy,
        output.display()
    );
    Ok(output)
}

#[derive(Debug, Deserialize)]
struct PredictionLine {
    video_id: String,
    pred_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportFile {
    pub strategy: EnsembleStrategy,
    #[serde(flatten)]
    pub report: EvaluationReport,
    pub leaderboard: Leaderboard,
}

/// Single-model and ensemble reports computed from the logits file, in
/// `model_order` then vote, weighted order.
pub fn method_reports(
    cfg: &PipelineConfig,
    classes: &ClassMap,
    labels: &LabelSet,
) -> Result<Vec<(String, EvaluationReport)>, CliError> {
    let probs = load_model_probs(cfg, classes)?;
    let logits_path = cfg.logits_path();
    let score = |preds: BTreeMap<String, usize>| {
        mean_class_accuracy(&preds, labels, cfg.strict).map_err(|e| from_metrics(&logits_path, e))
    };
    let ensemble = &cfg.fusion.ensemble;

    let mut out = Vec::new();
    for model in &ensemble.model_order {
        let preds = probs.iter().map(|(v, m)| (v.clone(), m[model].argmax())).collect();
        out.push((model.clone(), score(preds)?));
    }
    let mut strategies = vec![(VOTE_METHOD, EnsembleStrategy::Vote)];
    if ensemble.effective_weights().is_ok() {
        strategies.push((WEIGHTED_METHOD, EnsembleStrategy::Weighted));
    }
    for (name, strategy) in strategies {
        let cfg_s = ensemble.with_strategy(strategy);
        let preds = probs
            .iter()
            .map(|(v, m)| fusion::ensemble_video(v, m, &cfg_s, classes).map(|p| (v.clone(), p.pred_class)))
            .collect::<Result<BTreeMap<_, _>, _>>()
            .map_err(|e| from_fusion(&logits_path, e))?;
        out.push((name.to_string(), score(preds)?));
    }
    Ok(out)
}

/// `evaluate`: scores the predictions file, adds single-model and ensemble
/// rows when logits are available, writes `report.json`.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<ReportFile, CliError> {
    let classes = read_class_map(cfg)?;
    let labels = read_labels(cfg, &classes)?;
    let pred_path = cfg.output(PREDICTIONS_FILE);
    let mut preds = BTreeMap::new();
    for (line, p) in read_records::<PredictionLine>(&pred_path)? {
        if preds.insert(p.video_id.clone(), p.pred_class).is_some() {
            return Err(CliError::Validation(vec![ErrorItem::for_video(
                p.video_id,
                format!("{}: line {line}: duplicate prediction", pred_path.display()),
            )]));
        }
    }
    let report = mean_class_accuracy(&preds, &labels, cfg.strict).map_err(|e| from_metrics(&pred_path, e))?;
    if report.warnings.extra_predictions > 0 {
        warn!(
            "{} prediction(s) without a label were ignored",
            report.warnings.extra_predictions
        );
    }
    if !report.warnings.empty_classes.is_empty() {
        warn!("classes without samples: {:?}", report.warnings.empty_classes);
    }

    let mut rows = if cfg.logits_path().exists() {
        method_reports(cfg, &classes, &labels)?
    } else {
        Vec::new()
    };
    rows.push((
        format!("predictions ({})", cfg.fusion.ensemble.strategy),
        report.clone(),
    ));
    let leaderboard = leaderboard_table(rows.iter().map(|(n, r)| (n.as_str(), r)));

    let file = ReportFile {
        strategy: cfg.fusion.ensemble.strategy,
        report,
        leaderboard,
    };
    let output = cfg.output(REPORT_FILE);
    write_atomic(&output, |w| {
        serde_json::to_writer_pretty(&mut *w, &file)?;
        w.write_all(b"\n")
    })?;
    Ok(file)
}

/// `run-all`: every stage in order. The mock predictor is skipped when the
/// config points at an external logits file.
pub fn run_all(cfg: &PipelineConfig) -> Result<ReportFile, CliError> {
    cmd_crop_plan(cfg)?;
    cmd_tta_plan(cfg)?;
    if cfg.paths.logits.is_none() {
        cmd_mock_predict(cfg)?;
    }
    cmd_fuse(cfg)?;
    cmd_evaluate(cfg)
}
