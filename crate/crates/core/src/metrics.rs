//! Mean per-class accuracy and leaderboard reports.
//!
//! `Mean = (1/l) Σ_i M_i / N_i`, where class `i` has `N_i` labeled samples of
//! which `M_i` were predicted correctly. Classes without samples are left out
//! of the average unless strict mode turns them into an error.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufRead;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid class map: {0}")]
    ClassMap(String),
    #[error("label set is empty")]
    EmptyLabels,
    #[error("duplicate label for video {0}")]
    DuplicateVideo(String),
    #[error("class {class} of video {video_id} is outside 0..{num_classes}")]
    ClassOutOfRange {
        video_id: String,
        class: usize,
        num_classes: usize,
    },
    #[error("{} labeled video(s) without a prediction: {}", .0.len(), .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error("classes without samples: {0:?}")]
    EmptyClasses(Vec<usize>),
}

/// Class names indexed by line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl ClassMap {
    pub fn new(names: Vec<String>) -> Result<Self, MetricsError> {
        if names.is_empty() {
            return Err(MetricsError::ClassMap("no classes".into()));
        }
        let mut index = BTreeMap::new();
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(MetricsError::ClassMap(format!("class {i} has an empty name")));
            }
            if index.insert(n.clone(), i).is_some() {
                return Err(MetricsError::ClassMap(format!("class name {n} appears twice")));
            }
        }
        Ok(ClassMap { names, index })
    }

    /// One name per line. Trailing blank lines are ignored; blank lines in
    /// between would shift indices and are rejected.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, MetricsError> {
        let mut names: Vec<String> = reader
            .lines()
            .map(|l| l.map(|s| s.trim().to_string()))
            .collect::<Result<_, _>>()?;
        while names.last().is_some_and(|n| n.is_empty()) {
            names.pop();
        }
        Self::new(names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Accepts either a class index or a class name.
    pub fn resolve(&self, token: &str) -> Option<usize> {
        match token.parse::<usize>() {
            Ok(i) if i < self.len() => Some(i),
            Ok(_) => None,
            Err(_) => self.index_of(token),
        }
    }
}

/// Ground-truth class per video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    entries: BTreeMap<String, usize>,
    num_classes: usize,
}

impl LabelSet {
    pub fn new(entries: BTreeMap<String, usize>, num_classes: usize) -> Result<Self, MetricsError> {
        if let Some((video_id, &class)) = entries.iter().find(|(_, &c)| c >= num_classes) {
            return Err(MetricsError::ClassOutOfRange {
                video_id: video_id.clone(),
                class,
                num_classes,
            });
        }
        Ok(LabelSet { entries, num_classes })
    }

    /// Two-column records `video_id class`, separated by a comma, tab or
    /// spaces. The class is an index or a name from `class_map`. Lines
    /// starting with `#` are comments.
    pub fn parse<R: BufRead>(reader: R, class_map: &ClassMap) -> Result<Self, MetricsError> {
        let mut entries = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = text
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let [video_id, class] = cols[..] else {
                return Err(MetricsError::Parse {
                    line: line_no,
                    message: format!("expected 2 columns, found {}", cols.len()),
                });
            };
            let class = class_map.resolve(class).ok_or_else(|| MetricsError::Parse {
                line: line_no,
                message: format!("unknown class {class}"),
            })?;
            if entries.insert(video_id.to_string(), class).is_some() {
                return Err(MetricsError::DuplicateVideo(video_id.to_string()));
            }
        }
        Self::new(entries, class_map.len())
    }

    pub fn entries(&self) -> &BTreeMap<String, usize> {
        &self.entries
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, video_id: &str) -> Option<usize> {
        self.entries.get(video_id).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAccuracy {
    pub class_index: usize,
    /// N_i
    pub samples: u64,
    /// M_i
    pub correct: u64,
    /// `None` when the class has no samples.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReportWarnings {
    /// Predictions for videos that have no label.
    pub extra_predictions: usize,
    /// Classes without samples, excluded from the mean.
    pub empty_classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub per_class: Vec<ClassAccuracy>,
    pub mean: f64,
    pub overall_top1: f64,
    pub num_samples: u64,
    pub num_correct: u64,
    pub warnings: ReportWarnings,
}

/// Scores `predictions` against `labels`.
pub fn mean_class_accuracy(
    predictions: &BTreeMap<String, usize>,
    labels: &LabelSet,
    strict_classes: bool,
) -> Result<EvaluationReport, MetricsError> {
    if labels.is_empty() {
        return Err(MetricsError::EmptyLabels);
    }
    let l = labels.num_classes();
    if let Some((video_id, &class)) = predictions.iter().find(|(_, &c)| c >= l) {
        return Err(MetricsError::ClassOutOfRange {
            video_id: video_id.clone(),
            class,
            num_classes: l,
        });
    }
    let missing: Vec<String> = labels
        .entries()
        .keys()
        .filter(|v| !predictions.contains_key(*v))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(MetricsError::MissingPredictions(missing));
    }

    let mut samples = vec![0u64; l];
    let mut correct = vec![0u64; l];
    for (video, &truth) in labels.entries() {
        samples[truth] += 1;
        if predictions[video] == truth {
            correct[truth] += 1;
        }
    }

    let empty_classes: Vec<usize> = (0..l).filter(|&i| samples[i] == 0).collect();
    if strict_classes && !empty_classes.is_empty() {
        return Err(MetricsError::EmptyClasses(empty_classes));
    }

    let per_class: Vec<ClassAccuracy> = (0..l)
        .map(|i| ClassAccuracy {
            class_index: i,
            samples: samples[i],
            correct: correct[i],
            accuracy: (samples[i] > 0).then(|| correct[i] as f64 / samples[i] as f64),
        })
        .collect();
    let accs: Vec<f64> = per_class.iter().filter_map(|c| c.accuracy).collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let num_samples: u64 = samples.iter().sum();
    let num_correct: u64 = correct.iter().sum();
    let labeled: BTreeSet<&String> = labels.entries().keys().collect();

    Ok(EvaluationReport {
        per_class,
        mean,
        overall_top1: num_correct as f64 / num_samples as f64,
        num_samples,
        num_correct,
        warnings: ReportWarnings {
            extra_predictions: predictions.keys().filter(|v| !labeled.contains(v)).count(),
            empty_classes,
        },
    })
}

/// `fraction × 100` rounded half-up to two decimals, e.g. `0.9573 -> "95.73"`.
pub fn format_percent(fraction: f64) -> String {
    // The nudge absorbs binary representation error on exact half-way values.
    let basis_points = (fraction * 10_000.0 + 0.5 + 1e-7).floor() as i64;
    let sign = if basis_points < 0 { "-" } else { "" };
    let bp = basis_points.abs();
    format!("{sign}{}.{:02}", bp / 100, bp % 100)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeaderboardRow {
    pub method: String,
    pub mean: f64,
    pub score: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Leaderboard {
    pub rows: Vec<LeaderboardRow>,
}

impl Leaderboard {
    pub fn render_text(&self) -> String {
        let header = ("Method", "Online Score");
        let width = self
            .rows
            .iter()
            .map(|r| r.method.len())
            .chain([header.0.len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>12}", header.0, header.1);
        let _ = writeln!(out, "{}", "-".repeat(width + 14));
        for r in &self.rows {
            let _ = writeln!(out, "{:<width$}  {:>12}", r.method, r.score);
        }
        out
    }
}

/// One row per report, input order preserved, scores in percent.
pub fn leaderboard_table<'a, I>(reports: I) -> Leaderboard
where
    I: IntoIterator<Item = (&'a str, &'a EvaluationReport)>,
{
    Leaderboard {
        rows: reports
            .into_iter()
            .map(|(method, r)| LeaderboardRow {
                method: method.to_string(),
                mean: r.mean,
                score: format_percent(r.mean),
            })
            .collect(),
    }
}
