//! Synthetic input sets for demos and end-to-end tests.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use skatecv_core::jsonl;
use skatecv_core::roi::{DetectionRecord, VideoInfo};

use crate::error::CliError;
use crate::mock::{fnv1a64, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureSpec {
    pub videos: usize,
    pub classes: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            videos: 500,
            classes: 28,
            seed: 20240527,
        }
    }
}

pub fn class_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("action_{i:02}")).collect()
}

pub struct Fixture {
    pub manifest: Vec<VideoInfo>,
    pub detections: Vec<DetectionRecord>,
    /// `(video_id, class)`, class-balanced.
    pub labels: Vec<(String, usize)>,
}

/// Builds a deterministic dataset: mixed resolutions, clip lengths from 8 to
/// 400 frames, a drifting skater box per sampled frame (occasionally poking
/// out of the frame) and sporadic low-score spurious detections.
pub fn generate(spec: &FixtureSpec) -> Fixture {
    let mut rng = SplitMix64::new(spec.seed ^ fnv1a64(&["fixture"]));
    let mut classes: Vec<usize> = (0..spec.videos).map(|i| i % spec.classes.max(1)).collect();
    for i in (1..classes.len()).rev() {
        classes.swap(i, rng.below(i + 1));
    }

    let mut manifest = Vec::new();
    let mut detections = Vec::new();
    let mut labels = Vec::new();
    for (i, class) in classes.into_iter().enumerate() {
        let video_id = format!("vid_{i:05}");
        let (width, height) = [(1280, 720), (1920, 1080), (640, 360), (853, 480)][rng.below(4)];
        let num_frames = 8 + rng.below(393) as u32;
        let (w, h) = (f64::from(width), f64::from(height));
        let bw = w * (0.15 + 0.3 * rng.next_f64());
        let bh = h * (0.3 + 0.5 * rng.next_f64());
        let mut x = (w - bw) * rng.next_f64();
        let mut y = (h - bh) * rng.next_f64();
        let step = 1 + rng.below(8) as u32;
        for frame in (0..num_frames).step_by(step as usize) {
            x += (rng.next_f64() - 0.5) * 0.05 * w;
            y += (rng.next_f64() - 0.5) * 0.02 * h;
            detections.push(DetectionRecord {
                video_id: video_id.clone(),
                frame: u64::from(frame),
                x1: x,
                y1: y,
                x2: x + bw,
                y2: y + bh,
                score: 0.6 + 0.4 * rng.next_f64(),
            });
            if rng.next_f64() < 0.05 {
                let sx = w * rng.next_f64() * 0.9;
                let sy = h * rng.next_f64() * 0.9;
                detections.push(DetectionRecord {
                    video_id: video_id.clone(),
                    frame: u64::from(frame),
                    x1: sx,
                    y1: sy,
                    x2: sx + 0.05 * w,
                    y2: sy + 0.1 * h,
                    score: 0.1 + 0.3 * rng.next_f64(),
                });
            }
        }
        manifest.push(VideoInfo {
            video_id: video_id.clone(),
            width,
            height,
            num_frames,
        });
        labels.push((video_id, class));
    }
    Fixture {
        manifest,
        detections,
        labels,
    }
}

/// Mock settings used by the bundled configuration: three models with
/// near-miss errors, so that their mistakes are complementary.
pub fn default_config(seed: u64) -> String {
    format!(
        r#"[paths]
detections = "detections.jsonl"
manifest = "manifest.jsonl"
class_map = "classes.txt"
labels = "labels.txt"
output_dir = "out"

[roi]
score_threshold = 0.5
pad_fraction = 0.05
fallback_full_frame = false

[tta]
clip_len = 16
stride = 1
temporal_views = 5
spatial_views = 3

[fusion]
tta_fusion = "prob_mean"
variant_aggregation = "sum_softmax"

[fusion.ensemble]
strategy = "weighted"
model_order = ["umt", "uniformerv2", "infogcn"]
tiebreak_model = "uniformerv2"
raw_weights = [94.5, 95.0, 92.0]

[mock]
seed = {seed}
noise_scale = 0.5
margin = 4.0
near_miss = 0.8

[mock.per_model_skill]
umt = 0.945
uniformerv2 = 0.95
infogcn = 0.92
"#
    )
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(contents))
        .map_err(|e| CliError::io(path, e))
}

/// Writes the inputs plus `config.toml` into `dir` and returns the config
/// path.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let fx = generate(spec);

    let mut buf = Vec::new();
    jsonl::write_all(&mut buf, &fx.manifest).map_err(|e| CliError::io(dir, e))?;
    write_file(&dir.join("manifest.jsonl"), &buf)?;

    buf.clear();
    jsonl::write_all(&mut buf, &fx.detections).map_err(|e| CliError::io(dir, e))?;
    write_file(&dir.join("detections.jsonl"), &buf)?;

    let mut classes = class_names(spec.classes).join("\n");
    classes.push('\n');
    write_file(&dir.join("classes.txt"), classes.as_bytes())?;

    let mut labels = String::new();
    for (v, c) in &fx.labels {
        let _ = writeln!(labels, "{v},{c}");
    }
    write_file(&dir.join("labels.txt"), labels.as_bytes())?;

    let config = dir.join("config.toml");
    write_file(&config, default_config(spec.seed).as_bytes())?;
    Ok(config)
}
