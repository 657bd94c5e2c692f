//! From per-view logits to one prediction per video.
//!
//! Per view the logits go through [`softmax`]; the views of one model are
//! averaged by [`fuse_views`]; groups of resolution variants of one model are
//! merged by [`aggregate_umt_variants`]; finally the model-level vectors are
//! combined by [`ensemble_vote`] or [`ensemble_weighted`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::{self, JsonlError};
use crate::metrics::ClassMap;

/// Tolerance on the sum of a [`ProbVector`].
pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error(transparent)]
    Input(#[from] JsonlError),
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("not a probability vector: {0}")]
    InvalidProbVector(String),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("expected {expected} variant(s), found {found}")]
    VariantCount { expected: usize, found: usize },
    #[error("no prediction for model {0}")]
    MissingModel(String),
    #[error("invalid ensemble configuration: {0}")]
    Config(String),
    #[error("line {line}: unknown model {model_id}")]
    UnknownModel { model_id: String, line: usize },
    #[error("line {line}: {message}")]
    InvalidRecord { line: usize, message: String },
    #[error("duplicate logits for video {video_id}, model {model_id}, view {view_id}")]
    DuplicateRecord {
        video_id: String,
        model_id: String,
        view_id: u32,
    },
    #[error("missing views: {}", fmt_missing(.0))]
    MissingViews(Vec<MissingViews>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MissingViews {
    pub video_id: String,
    pub model_id: String,
    pub view_ids: Vec<u32>,
}

fn fmt_missing(v: &[MissingViews]) -> String {
    v.iter()
        .map(|m| format!("({}, {}, {:?})", m.video_id, m.model_id, m.view_ids))
        .collect::<Vec<_>>()
        .join(", ")
}

/// A normalized probability vector: entries in `[0, 1]` summing to one
/// within [`PROB_SUM_TOLERANCE`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self, FusionError> {
        if probs.is_empty() {
            return Err(FusionError::EmptyInput);
        }
        if let Some(i) = probs.iter().position(|p| !p.is_finite()) {
            return Err(FusionError::NonFinite(i));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(FusionError::InvalidProbVector(format!("entry {p} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(FusionError::InvalidProbVector(format!("entries sum to {sum}")));
        }
        Ok(ProbVector(probs))
    }

    /// Wraps a convex combination of probability vectors, trimming the
    /// rounding excursions above 1.
    fn from_convex(mut probs: Vec<f64>) -> Self {
        for p in &mut probs {
            *p = p.clamp(0.0, 1.0);
        }
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= PROB_SUM_TOLERANCE);
        ProbVector(probs)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties go to the smallest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0).expect("probability vectors are non-empty")
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for ProbVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Index of the largest value, smallest index on ties. `None` for an empty
/// slice.
pub fn argmax(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, b)) if v <= b => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

fn check_finite(values: &[f64]) -> Result<(), FusionError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(FusionError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Result<ProbVector, FusionError> {
    if logits.is_empty() {
        return Err(FusionError::EmptyInput);
    }
    check_finite(logits)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(ProbVector(exps.into_iter().map(|e| e / total).collect()))
}

fn check_lengths<T: AsRef<[f64]>>(items: &[T]) -> Result<usize, FusionError> {
    let first = items.first().ok_or(FusionError::EmptyInput)?.as_ref().len();
    for item in items {
        if item.as_ref().len() != first {
            return Err(FusionError::LengthMismatch {
                expected: first,
                found: item.as_ref().len(),
            });
        }
    }
    Ok(first)
}

fn class_sums<T: AsRef<[f64]>>(items: &[T], len: usize) -> Vec<f64> {
    let mut sums = vec![0.0; len];
    for item in items {
        for (s, v) in sums.iter_mut().zip(item.as_ref()) {
            *s += v;
        }
    }
    sums
}

/// Per-class arithmetic mean of the view probabilities.
pub fn fuse_views(views: &[ProbVector]) -> Result<ProbVector, FusionError> {
    let len = check_lengths(views)?;
    let n = views.len() as f64;
    Ok(ProbVector::from_convex(
        class_sums(views, len).into_iter().map(|s| s / n).collect(),
    ))
}

/// Softmax of the per-class mean logit.
pub fn fuse_logit_views<T: AsRef<[f64]>>(views: &[T]) -> Result<ProbVector, FusionError> {
    let len = check_lengths(views)?;
    for v in views {
        check_finite(v.as_ref())?;
    }
    let n = views.len() as f64;
    let mean: Vec<f64> = class_sums(views, len).into_iter().map(|s| s / n).collect();
    softmax(&mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TtaFusion {
    /// Mean of per-view probabilities.
    #[default]
    ProbMean,
    /// Softmax of the mean per-view logits.
    LogitMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantAggregation {
    /// Per-class sum of the variant probabilities followed by softmax.
    #[default]
    SumSoftmax,
    /// Plain per-class mean.
    Mean,
}

/// Merges the probability vectors of several fine-tuned variants of one
/// model. The default mode sums them per class and re-normalizes with
/// softmax.
pub fn aggregate_umt_variants(
    variants: &[ProbVector],
    expected: usize,
    mode: VariantAggregation,
) -> Result<ProbVector, FusionError> {
    if variants.len() != expected {
        return Err(FusionError::VariantCount {
            expected,
            found: variants.len(),
        });
    }
    match mode {
        VariantAggregation::SumSoftmax => {
            let len = check_lengths(variants)?;
            softmax(&class_sums(variants, len))
        }
        VariantAggregation::Mean => fuse_views(variants),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleStrategy {
    Vote,
    Weighted,
}

impl fmt::Display for EnsembleStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnsembleStrategy::Vote => f.write_str("vote"),
            EnsembleStrategy::Weighted => f.write_str("weighted"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub strategy: EnsembleStrategy,
    pub model_order: Vec<String>,
    pub tiebreak_model: String,
    #[serde(default)]
    pub raw_weights: Vec<f64>,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if self.model_order.is_empty() {
            return Err(FusionError::Config("model_order is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for m in &self.model_order {
            if !seen.insert(m) {
                return Err(FusionError::Config(format!("model {m} listed twice")));
            }
        }
        if !seen.contains(&self.tiebreak_model) {
            return Err(FusionError::Config(format!(
                "tiebreak model {} is not in model_order",
                self.tiebreak_model
            )));
        }
        if self.strategy == EnsembleStrategy::Weighted {
            self.check_weights()?;
        }
        Ok(())
    }

    fn check_weights(&self) -> Result<(), FusionError> {
        if self.raw_weights.len() != self.model_order.len() {
            return Err(FusionError::Config(format!(
                "{} raw weight(s) for {} model(s)",
                self.raw_weights.len(),
                self.model_order.len()
            )));
        }
        if self.raw_weights.iter().any(|w| !w.is_finite()) {
            return Err(FusionError::Config("raw weights must be finite".into()));
        }
        Ok(())
    }

    /// Per-model weights, `softmax(raw_weights)`.
    pub fn effective_weights(&self) -> Result<ProbVector, FusionError> {
        self.check_weights()?;
        softmax(&self.raw_weights)
    }

    pub fn with_strategy(&self, strategy: EnsembleStrategy) -> Self {
        EnsembleConfig {
            strategy,
            ..self.clone()
        }
    }
}

/// Plurality vote over the top-1 class of every model in `model_order`.
/// Without a strict winner the tie-break model's prediction is returned.
pub fn ensemble_vote(per_model_top1: &BTreeMap<String, usize>, config: &EnsembleConfig) -> Result<usize, FusionError> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for m in &config.model_order {
        let class = per_model_top1
            .get(m)
            .ok_or_else(|| FusionError::MissingModel(m.clone()))?;
        *counts.entry(*class).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    let mut leaders = counts.iter().filter(|(_, &c)| c == top);
    match (leaders.next(), leaders.next()) {
        (Some((&class, _)), None) => Ok(class),
        _ => per_model_top1
            .get(&config.tiebreak_model)
            .copied()
            .ok_or_else(|| FusionError::MissingModel(config.tiebreak_model.clone())),
    }
}

/// Convex combination of the model probabilities with weights
/// `softmax(raw_weights)`. Returns the fused argmax (smallest index on ties)
/// and the fused vector.
pub fn ensemble_weighted(
    per_model_probs: &BTreeMap<String, ProbVector>,
    config: &EnsembleConfig,
) -> Result<(usize, ProbVector), FusionError> {
    let weights = config.effective_weights()?;
    let members = config
        .model_order
        .iter()
        .map(|m| {
            per_model_probs
                .get(m)
                .ok_or_else(|| FusionError::MissingModel(m.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let len = check_lengths(&members)?;
    let mut fused = vec![0.0; len];
    for (w, p) in weights.as_slice().iter().zip(&members) {
        for (f, v) in fused.iter_mut().zip(p.as_slice()) {
            *f += w * v;
        }
    }
    let fused = ProbVector::from_convex(fused);
    Ok((fused.argmax(), fused))
}

/// One line of the logits file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitsRecord {
    pub video_id: String,
    pub model_id: String,
    pub view_id: u32,
    pub logits: Vec<f64>,
}

/// One line of the predictions file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub video_id: String,
    pub pred_class: usize,
    pub pred_name: String,
    pub probs: ProbVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    pub ensemble: EnsembleConfig,
    /// Group name (as listed in `model_order`) to its variant model ids.
    #[serde(default)]
    pub umt_variant_groups: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub tta_fusion: TtaFusion,
    #[serde(default)]
    pub variant_aggregation: VariantAggregation,
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        self.ensemble.validate()?;
        let top: BTreeSet<&str> = self.ensemble.model_order.iter().map(String::as_str).collect();
        let mut leaves = BTreeSet::new();
        for (group, members) in &self.umt_variant_groups {
            if !top.contains(group.as_str()) {
                return Err(FusionError::Config(format!(
                    "variant group {group} is not in model_order"
                )));
            }
            if members.is_empty() {
                return Err(FusionError::Config(format!("variant group {group} has no members")));
            }
            for m in members {
                if top.contains(m.as_str()) || !leaves.insert(m.as_str()) {
                    return Err(FusionError::Config(format!(
                        "variant model {m} is listed more than once"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Model ids expected in the logits stream, mapped to the `model_order`
    /// entry they feed.
    pub fn leaf_models(&self) -> BTreeMap<String, String> {
        self.ensemble
            .model_order
            .iter()
            .flat_map(|top| match self.umt_variant_groups.get(top) {
                Some(members) => members.iter().map(|m| (m.clone(), top.clone())).collect(),
                None => vec![(top.clone(), top.clone())],
            })
            .collect()
    }
}

pub fn read_logits<R: BufRead>(reader: R) -> Result<Vec<(usize, LogitsRecord)>, FusionError> {
    Ok(jsonl::read_all(reader)?)
}

/// Model-level probability vectors keyed by video, then by `model_order`
/// entry.
pub type ModelProbs = BTreeMap<String, BTreeMap<String, ProbVector>>;

/// Validates the logits stream and reduces it to one probability vector per
/// (video, top-level model): softmax per view, view fusion per model, then
/// variant aggregation for variant groups.
///
/// Every video that appears in the stream must carry views `0..num_views`
/// for every leaf model.
pub fn model_probabilities<I>(
    records: I,
    num_classes: usize,
    config: &FusionConfig,
    num_views: u32,
) -> Result<ModelProbs, FusionError>
where
    I: IntoIterator<Item = (usize, LogitsRecord)>,
{
    config.validate()?;
    if num_views == 0 {
        return Err(FusionError::Config("num_views must be >= 1".into()));
    }
    let leaves = config.leaf_models();
    let mut collected: BTreeMap<String, BTreeMap<String, BTreeMap<u32, Vec<f64>>>> = BTreeMap::new();

    for (line, rec) in records {
        if !leaves.contains_key(&rec.model_id) {
            return Err(FusionError::UnknownModel {
                model_id: rec.model_id,
                line,
            });
        }
        if rec.logits.len() != num_classes {
            return Err(FusionError::InvalidRecord {
                line,
                message: format!("{} logits, class map has {num_classes}", rec.logits.len()),
            });
        }
        if rec.logits.iter().any(|l| !l.is_finite()) {
            return Err(FusionError::InvalidRecord {
                line,
                message: "non-finite logit".into(),
            });
        }
        if rec.view_id >= num_views {
            return Err(FusionError::InvalidRecord {
                line,
                message: format!("view_id {} outside 0..{num_views}", rec.view_id),
            });
        }
        let views = collected
            .entry(rec.video_id.clone())
            .or_default()
            .entry(rec.model_id.clone())
            .or_default();
        if views.insert(rec.view_id, rec.logits).is_some() {
            return Err(FusionError::DuplicateRecord {
                video_id: rec.video_id,
                model_id: rec.model_id,
                view_id: rec.view_id,
            });
        }
    }

    let mut missing = Vec::new();
    for (video, models) in &collected {
        for leaf in leaves.keys() {
            let have = models.get(leaf);
            let absent: Vec<u32> = (0..num_views)
                .filter(|v| !have.is_some_and(|h| h.contains_key(v)))
                .collect();
            if !absent.is_empty() {
                missing.push(MissingViews {
                    video_id: video.clone(),
                    model_id: leaf.clone(),
                    view_ids: absent,
                });
            }
        }
    }
    if !missing.is_empty() {
        return Err(FusionError::MissingViews(missing));
    }

    let mut out = ModelProbs::new();
    for (video, models) in collected {
        let mut leaf_probs: BTreeMap<String, ProbVector> = BTreeMap::new();
        for (model, views) in models {
            let logits: Vec<Vec<f64>> = views.into_values().collect();
            let fused = match config.tta_fusion {
                TtaFusion::ProbMean => {
                    let probs = logits.iter().map(|l| softmax(l)).collect::<Result<Vec<_>, _>>()?;
                    fuse_views(&probs)?
                }
                TtaFusion::LogitMean => fuse_logit_views(&logits)?,
            };
            leaf_probs.insert(model, fused);
        }
        let mut top_probs = BTreeMap::new();
        for top in &config.ensemble.model_order {
            let p = match config.umt_variant_groups.get(top) {
                Some(members) => {
                    let variants: Vec<ProbVector> = members.iter().map(|m| leaf_probs[m].clone()).collect();
                    aggregate_umt_variants(&variants, members.len(), config.variant_aggregation)?
                }
                None => leaf_probs[top].clone(),
            };
            top_probs.insert(top.clone(), p);
        }
        out.insert(video, top_probs);
    }
    Ok(out)
}

/// Applies the configured ensemble to the model-level vectors of one video.
///
/// For the vote strategy the emitted vector is the unweighted mean of the
/// model vectors; only `pred_class` carries the vote.
pub fn ensemble_video(
    video_id: &str,
    models: &BTreeMap<String, ProbVector>,
    config: &EnsembleConfig,
    class_map: &ClassMap,
) -> Result<Prediction, FusionError> {
    let (pred_class, probs) = match config.strategy {
        EnsembleStrategy::Weighted => ensemble_weighted(models, config)?,
        EnsembleStrategy::Vote => {
            let top1 = models.iter().map(|(m, p)| (m.clone(), p.argmax())).collect();
            let class = ensemble_vote(&top1, config)?;
            let ordered = config
                .model_order
                .iter()
                .map(|m| {
                    models
                        .get(m)
                        .cloned()
                        .ok_or_else(|| FusionError::MissingModel(m.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            (class, fuse_views(&ordered)?)
        }
    };
    Ok(Prediction {
        video_id: video_id.to_string(),
        pred_class,
        pred_name: class_map.name(pred_class).unwrap_or_default().to_string(),
        probs,
    })
}

/// Full fusion pipeline; predictions come out sorted by video id.
pub fn run_fusion<I>(
    records: I,
    class_map: &ClassMap,
    config: &FusionConfig,
    num_views: u32,
) -> Result<Vec<Prediction>, FusionError>
where
    I: IntoIterator<Item = (usize, LogitsRecord)>,
{
    let probs = model_probabilities(records, class_map.len(), config, num_views)?;
    probs
        .iter()
        .map(|(video, models)| ensemble_video(video, models, &config.ensemble, class_map))
        .collect()
}
