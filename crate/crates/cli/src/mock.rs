//! Seeded stand-in for the neural predictors.
//!
//! The mock looks at the ground-truth labels and emits logits whose argmax
//! matches the label for roughly a `skill` fraction of videos. It exists to
//! drive the pipeline end to end in tests and demos; evaluation never reads
//! anything produced here except through the logits file.
//!
//! Randomness comes from SplitMix64 (Steele, Lea & Flood 2014) so that a
//! fixture is reproducible from its seed on any platform:
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! return z ^ (z >> 31)
//! ```
//!
//! Streams are keyed by FNV-1a 64 hashes of the video and model ids, so the
//! output does not depend on iteration order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use skatecv_core::LogitsRecord;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `0..n` (multiply-shift; bias is below 2^-32 for small `n`).
    pub fn below(&mut self, n: usize) -> usize {
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller, cosine branch only.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

pub fn fnv1a64(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            h ^= 0xff;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        for b in part.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn stream(seed: u64, parts: &[&str]) -> SplitMix64 {
    let mut mix = SplitMix64::new(seed ^ fnv1a64(parts));
    SplitMix64::new(mix.next_u64())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockPredictorSpec {
    pub seed: u64,
    /// Fraction of videos each model gets right by construction.
    pub per_model_skill: BTreeMap<String, f64>,
    /// Standard deviation of the per-view Gaussian logit noise.
    pub noise_scale: f64,
    /// Logit bump given to the predicted class.
    pub margin: f64,
    /// On a miss, the true class gets `near_miss × margin` so it ranks second.
    pub near_miss: f64,
}

impl Default for MockPredictorSpec {
    fn default() -> Self {
        MockPredictorSpec {
            seed: 0,
            per_model_skill: BTreeMap::new(),
            noise_scale: 0.5,
            margin: 4.0,
            near_miss: 0.0,
        }
    }
}

impl MockPredictorSpec {
    pub fn validate(&self) -> Result<(), String> {
        for (m, s) in &self.per_model_skill {
            if !(0.0..=1.0).contains(s) {
                return Err(format!("skill {s} of model {m} outside [0, 1]"));
            }
        }
        if !self.noise_scale.is_finite() || self.noise_scale < 0.0 {
            return Err(format!("noise_scale {} must be >= 0", self.noise_scale));
        }
        if !self.margin.is_finite() || self.margin <= 0.0 {
            return Err(format!("margin {} must be > 0", self.margin));
        }
        if !(0.0..1.0).contains(&self.near_miss) {
            return Err(format!("near_miss {} outside [0, 1)", self.near_miss));
        }
        Ok(())
    }
}

/// Synthesizes logits for every `(video, model, view)`.
///
/// A model of skill `s` behaves like one that knows the answer with
/// probability `s` and guesses uniformly otherwise, so its hit rate is
/// `s + (1 - s) / C`. Per model, videos are ranked by a seeded shuffle and the
/// video at rank `k` is a hit when `(k + 0.5) / n` is below that rate, which
/// fixes the number of hits exactly. Misses target a uniformly chosen wrong
/// class. Each view's logits are `noise_scale · N(0, 1)` per class plus
/// `margin` on the target.
///
/// `labels` maps video id to true class; `views` lists the view ids to emit
/// per video. Output is sorted by video, model, view.
pub fn generate_logits(
    spec: &MockPredictorSpec,
    models: &[String],
    labels: &BTreeMap<String, usize>,
    views: &BTreeMap<String, Vec<u32>>,
    num_classes: usize,
) -> Result<Vec<LogitsRecord>, String> {
    spec.validate()?;
    if num_classes == 0 {
        return Err("no classes".into());
    }
    let videos: Vec<&String> = views.keys().collect();
    for v in &videos {
        if !labels.contains_key(*v) {
            return Err(format!("video {v} has no label for the mock predictor"));
        }
    }
    let n = videos.len();
    let seed_text = spec.seed.to_string();

    let mut targets: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for model in models {
        let skill = *spec
            .per_model_skill
            .get(model)
            .ok_or_else(|| format!("no skill configured for model {model}"))?;
        let hit_rate = skill + (1.0 - skill) / num_classes as f64;
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = stream(spec.seed, &[&seed_text, model, "rank"]);
        for i in (1..n).rev() {
            order.swap(i, rng.below(i + 1));
        }
        for (rank, &vi) in order.iter().enumerate() {
            let video = videos[vi].as_str();
            let truth = labels[video];
            let hit = (rank as f64 + 0.5) / (n as f64) < hit_rate;
            let target = if hit || num_classes == 1 {
                truth
            } else {
                let pick = stream(spec.seed, &[&seed_text, model, video, "miss"]).below(num_classes - 1);
                if pick >= truth {
                    pick + 1
                } else {
                    pick
                }
            };
            targets.insert((video, model.as_str()), target);
        }
    }

    let mut out = Vec::new();
    for (video, view_ids) in views {
        let truth = labels[video];
        let mut sorted_models: Vec<&String> = models.iter().collect();
        sorted_models.sort();
        for model in sorted_models {
            let target = targets[&(video.as_str(), model.as_str())];
            for &view in view_ids {
                let mut rng = stream(spec.seed, &[&seed_text, model, video, &view.to_string()]);
                let mut logits: Vec<f64> = (0..num_classes)
                    .map(|_| spec.noise_scale * rng.next_gaussian())
                    .collect();
                logits[target] += spec.margin;
                if target != truth {
                    logits[truth] += spec.near_miss * spec.margin;
                }
                out.push(LogitsRecord {
                    video_id: video.clone(),
                    model_id: model.clone(),
                    view_id: view,
                    logits,
                });
            }
        }
    }
    Ok(out)
}
