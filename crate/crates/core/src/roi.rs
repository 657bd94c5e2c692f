//! Detection ingestion, box consolidation and crop planning.
//!
//! Every video gets a single crop: the coordinate-wise envelope of all its
//! detections (optionally score-filtered and padded), snapped to integer
//! pixels with even width and height so that downstream encoders accept it.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::{self, JsonlError};

#[derive(Debug, Error)]
pub enum RoiError {
    #[error(transparent)]
    Input(#[from] JsonlError),
    #[error("no detections for video {video_id}")]
    NoDetections { video_id: String },
    #[error("video {video_id} (line {line}) has no entry in the manifest")]
    UnknownVideo { video_id: String, line: usize },
    #[error("video {video_id} appears more than once in the manifest")]
    DuplicateVideo { video_id: String },
    #[error("invalid frame {width}x{height}: both dimensions must be at least 2")]
    InvalidFrame { width: u32, height: u32 },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{} invalid detection record(s), first at line {}", .0.len(), .0[0].line)]
    InvalidRecords(Vec<RecordIssue>),
}

/// A rejected detection record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordIssue {
    pub line: usize,
    pub video_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub score: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64, score: f64) -> Result<Self, RoiError> {
        let b = BoundingBox { x1, y1, x2, y2, score };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<(), RoiError> {
        let coords = [self.x1, self.y1, self.x2, self.y2, self.score];
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(RoiError::InvalidBox("non-finite value".into()));
        }
        if self.x1 >= self.x2 || self.y1 >= self.y2 {
            return Err(RoiError::InvalidBox(format!(
                "({}, {}, {}, {}) needs x1 < x2 and y1 < y2",
                self.x1, self.y1, self.x2, self.y2
            )));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(RoiError::InvalidBox(format!("score {} outside [0, 1]", self.score)));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    /// True when `other` lies inside `self` (edges inclusive).
    pub fn contains(&self, other: &BoundingBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }

    /// Clamps to `[0, width] x [0, height]`. Returns `None` when nothing of
    /// positive area is left.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BoundingBox> {
        let (w, h) = (f64::from(width), f64::from(height));
        let b = BoundingBox {
            x1: self.x1.clamp(0.0, w),
            y1: self.y1.clamp(0.0, h),
            x2: self.x2.clamp(0.0, w),
            y2: self.y2.clamp(0.0, h),
            score: self.score,
        };
        (b.x1 < b.x2 && b.y1 < b.y2).then_some(b)
    }
}

/// One line of the detections stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub video_id: String,
    pub frame: u64,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub score: f64,
}

/// One line of the video manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoInfo {
    pub video_id: String,
    pub width: u32,
    pub height: u32,
    pub num_frames: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: u64,
    pub boxes: Vec<BoundingBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTrack {
    pub video_id: String,
    pub frame_width: u32,
    pub frame_height: u32,
    /// Strictly increasing by `index`.
    pub frames: Vec<Frame>,
}

impl DetectionTrack {
    pub fn boxes(&self) -> impl Iterator<Item = &BoundingBox> {
        self.frames.iter().flat_map(|f| f.boxes.iter())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Ingestion {
    /// One track per manifest entry, sorted by video id. Videos without
    /// detections have an empty frame list.
    pub tracks: Vec<DetectionTrack>,
    /// Boxes dropped because clamping to the frame left zero area.
    pub degenerate_dropped: usize,
    /// Records rejected by validation (only populated in lenient mode).
    pub rejected: Vec<RecordIssue>,
}

pub fn read_manifest<R: BufRead>(reader: R) -> Result<Vec<VideoInfo>, RoiError> {
    let entries: Vec<VideoInfo> = jsonl::read_all(reader)?.into_iter().map(|(_, v)| v).collect();
    let mut seen = BTreeSet::new();
    for v in &entries {
        if !seen.insert(v.video_id.as_str()) {
            return Err(RoiError::DuplicateVideo {
                video_id: v.video_id.clone(),
            });
        }
        if v.width == 0 || v.height == 0 {
            return Err(RoiError::InvalidFrame {
                width: v.width,
                height: v.height,
            });
        }
    }
    Ok(entries)
}

/// Parses a detections stream and groups it into per-video tracks.
///
/// Records whose boxes are inverted, non-finite or carry a score outside
/// `[0, 1]` are collected in [`Ingestion::rejected`]; with `strict` set the
/// whole ingestion fails instead. A record naming a video missing from the
/// manifest is always fatal.
pub fn ingest_detections<R: BufRead>(reader: R, manifest: &[VideoInfo], strict: bool) -> Result<Ingestion, RoiError> {
    let records = jsonl::records::<DetectionRecord, _>(reader);
    ingest_records(records.map(|r| r.map_err(RoiError::from)), manifest, strict)
}

pub fn ingest_records<I>(records: I, manifest: &[VideoInfo], strict: bool) -> Result<Ingestion, RoiError>
where
    I: IntoIterator<Item = Result<(usize, DetectionRecord), RoiError>>,
{
    let dims: BTreeMap<&str, &VideoInfo> = manifest.iter().map(|v| (v.video_id.as_str(), v)).collect();
    let mut grouped: BTreeMap<String, BTreeMap<u64, Vec<BoundingBox>>> =
        manifest.iter().map(|v| (v.video_id.clone(), BTreeMap::new())).collect();
    let mut out = Ingestion::default();

    for item in records {
        let (line, rec) = item?;
        let info = dims.get(rec.video_id.as_str()).ok_or_else(|| RoiError::UnknownVideo {
            video_id: rec.video_id.clone(),
            line,
        })?;
        let b = match BoundingBox::new(rec.x1, rec.y1, rec.x2, rec.y2, rec.score) {
            Ok(b) => b,
            Err(e) => {
                out.rejected.push(RecordIssue {
                    line,
                    video_id: rec.video_id,
                    message: e.to_string(),
                });
                continue;
            }
        };
        match b.clamp_to(info.width, info.height) {
            Some(clamped) => grouped
                .get_mut(&rec.video_id)
                .expect("manifest videos are pre-seeded")
                .entry(rec.frame)
                .or_default()
                .push(clamped),
            None => out.degenerate_dropped += 1,
        }
    }

    if strict && !out.rejected.is_empty() {
        return Err(RoiError::InvalidRecords(out.rejected));
    }

    out.tracks = grouped
        .into_iter()
        .map(|(video_id, frames)| {
            let info = dims[video_id.as_str()];
            DetectionTrack {
                frame_width: info.width,
                frame_height: info.height,
                frames: frames
                    .into_iter()
                    .map(|(index, boxes)| Frame { index, boxes })
                    .collect(),
                video_id,
            }
        })
        .collect();
    Ok(out)
}

/// Coordinate-wise union of every box scoring at least `score_threshold`.
pub fn consolidate_box(track: &DetectionTrack, score_threshold: f64) -> Result<BoundingBox, RoiError> {
    if !(0.0..=1.0).contains(&score_threshold) {
        return Err(RoiError::InvalidParameter(format!(
            "score threshold {score_threshold} outside [0, 1]"
        )));
    }
    track
        .boxes()
        .filter(|b| b.score >= score_threshold)
        .fold(None, |acc: Option<BoundingBox>, b| {
            Some(match acc {
                None => BoundingBox { score: 1.0, ..*b },
                Some(u) => BoundingBox {
                    x1: u.x1.min(b.x1),
                    y1: u.y1.min(b.y1),
                    x2: u.x2.max(b.x2),
                    y2: u.y2.max(b.y2),
                    score: 1.0,
                },
            })
        })
        .ok_or_else(|| RoiError::NoDetections {
            video_id: track.video_id.clone(),
        })
}

/// Integer crop rectangle for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct CropSpec {
    pub video_id: String,
    pub union_box: BoundingBox,
    pub crop_x: u32,
    pub crop_y: u32,
    pub crop_w: u32,
    pub crop_h: u32,
}

impl CropSpec {
    /// Largest even-sized crop anchored at the origin.
    pub fn full_frame(video_id: &str, frame_width: u32, frame_height: u32) -> Result<Self, RoiError> {
        check_frame(frame_width, frame_height)?;
        Ok(CropSpec {
            video_id: video_id.to_string(),
            union_box: BoundingBox {
                x1: 0.0,
                y1: 0.0,
                x2: f64::from(frame_width),
                y2: f64::from(frame_height),
                score: 1.0,
            },
            crop_x: 0,
            crop_y: 0,
            crop_w: frame_width & !1,
            crop_h: frame_height & !1,
        })
    }

    pub fn filter(&self) -> String {
        emit_crop_filter(self)
    }

    pub fn to_record(&self) -> CropPlanRecord {
        CropPlanRecord {
            video_id: self.video_id.clone(),
            crop_x: self.crop_x,
            crop_y: self.crop_y,
            crop_w: self.crop_w,
            crop_h: self.crop_h,
            filter: self.filter(),
        }
    }
}

/// One line of the crop plan file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropPlanRecord {
    pub video_id: String,
    pub crop_x: u32,
    pub crop_y: u32,
    pub crop_w: u32,
    pub crop_h: u32,
    pub filter: String,
}

impl CropPlanRecord {
    /// Rebuilds a spec from a plan line. The original union box is not part
    /// of the file, so the crop rectangle stands in for it.
    pub fn to_spec(&self) -> CropSpec {
        CropSpec {
            video_id: self.video_id.clone(),
            union_box: BoundingBox {
                x1: f64::from(self.crop_x),
                y1: f64::from(self.crop_y),
                x2: f64::from(self.crop_x + self.crop_w),
                y2: f64::from(self.crop_y + self.crop_h),
                score: 1.0,
            },
            crop_x: self.crop_x,
            crop_y: self.crop_y,
            crop_w: self.crop_w,
            crop_h: self.crop_h,
        }
    }
}

fn check_frame(width: u32, height: u32) -> Result<(), RoiError> {
    if width < 2 || height < 2 {
        return Err(RoiError::InvalidFrame { width, height });
    }
    Ok(())
}

/// Snaps `[lo, hi)` on an axis of length `limit` to an integer start and an
/// even length >= 2 that stays inside `[0, limit]`.
fn snap_axis(lo: f64, hi: f64, limit: u32) -> (u32, u32) {
    let mut start = lo.floor() as u32;
    let end = (hi.ceil() as u32).min(limit);
    let mut len = end - start;
    if len % 2 == 1 {
        len += 1;
    }
    if start + len > limit {
        // Moving the near edge keeps the box covered; only a full-width odd
        // axis has to give up a pixel at the far edge.
        if start > 0 {
            start -= 1;
        } else {
            len -= 2;
        }
    }
    (start, len)
}

/// Pads `union_box` by `pad_fraction × max(width, height)` per side, clamps it
/// to the frame and snaps it to integer pixels with even dimensions.
pub fn make_crop_spec(
    video_id: &str,
    union_box: &BoundingBox,
    frame_width: u32,
    frame_height: u32,
    pad_fraction: f64,
) -> Result<CropSpec, RoiError> {
    check_frame(frame_width, frame_height)?;
    if !pad_fraction.is_finite() || pad_fraction < 0.0 {
        return Err(RoiError::InvalidParameter(format!(
            "pad fraction {pad_fraction} must be finite and >= 0"
        )));
    }
    let pad = pad_fraction * union_box.width().max(union_box.height());
    let padded = BoundingBox {
        x1: union_box.x1 - pad,
        y1: union_box.y1 - pad,
        x2: union_box.x2 + pad,
        y2: union_box.y2 + pad,
        ..*union_box
    };
    let clamped = padded
        .clamp_to(frame_width, frame_height)
        .ok_or_else(|| RoiError::NoDetections {
            video_id: video_id.to_string(),
        })?;
    let (crop_x, crop_w) = snap_axis(clamped.x1, clamped.x2, frame_width);
    let (crop_y, crop_h) = snap_axis(clamped.y1, clamped.y2, frame_height);
    Ok(CropSpec {
        video_id: video_id.to_string(),
        union_box: BoundingBox {
            score: 1.0,
            ..*union_box
        },
        crop_x,
        crop_y,
        crop_w,
        crop_h,
    })
}

/// FFmpeg crop filter, `crop=W:H:X:Y`.
pub fn emit_crop_filter(spec: &CropSpec) -> String {
    format!("crop={}:{}:{}:{}", spec.crop_w, spec.crop_h, spec.crop_x, spec.crop_y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiParams {
    pub score_threshold: f64,
    pub pad_fraction: f64,
    pub fallback_full_frame: bool,
}

impl Default for RoiParams {
    fn default() -> Self {
        RoiParams {
            score_threshold: 0.0,
            pad_fraction: 0.0,
            fallback_full_frame: false,
        }
    }
}

/// Consolidates a track and turns it into a crop, honoring the full-frame
/// fallback for videos without surviving detections.
pub fn plan_crop(track: &DetectionTrack, params: &RoiParams) -> Result<CropSpec, RoiError> {
    let (w, h) = (track.frame_width, track.frame_height);
    match consolidate_box(track, params.score_threshold) {
        Ok(union) => make_crop_spec(&track.video_id, &union, w, h, params.pad_fraction),
        Err(RoiError::NoDetections { .. }) if params.fallback_full_frame => CropSpec::full_frame(&track.video_id, w, h),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2, 0.9).unwrap()
    }

    fn manifest(id: &str, w: u32, h: u32) -> Vec<VideoInfo> {
        vec![VideoInfo {
            video_id: id.into(),
            width: w,
            height: h,
            num_frames: 10,
        }]
    }

    fn line(v: &str, frame: u64, c: [f64; 4], s: f64) -> String {
        serde_json::to_string(&DetectionRecord {
            video_id: v.into(),
            frame,
            x1: c[0],
            y1: c[1],
            x2: c[2],
            y2: c[3],
            score: s,
        })
        .unwrap()
    }

    fn track(boxes: Vec<BoundingBox>) -> DetectionTrack {
        DetectionTrack {
            video_id: "v".into(),
            frame_width: 100,
            frame_height: 100,
            frames: boxes
                .into_iter()
                .enumerate()
                .map(|(i, b)| Frame {
                    index: i as u64,
                    boxes: vec![b],
                })
                .collect(),
        }
    }

    #[test]
    fn ingest_passthrough() {
        let input = line("v1", 0, [10.0, 20.0, 50.0, 60.0], 0.9);
        let got = ingest_detections(input.as_bytes(), &manifest("v1", 100, 100), false).unwrap();
        assert_eq!(got.tracks.len(), 1);
        assert_eq!(got.tracks[0].frames.len(), 1);
        assert_eq!(
            got.tracks[0].frames[0].boxes,
            vec![BoundingBox::new(10.0, 20.0, 50.0, 60.0, 0.9).unwrap()]
        );
        assert_eq!(got.degenerate_dropped, 0);
    }

    #[test]
    fn ingest_clamps_to_frame() {
        let input = line("v1", 0, [-5.0, 10.0, 50.0, 60.0], 0.9);
        let got = ingest_detections(input.as_bytes(), &manifest("v1", 100, 100), false).unwrap();
        let b = got.tracks[0].frames[0].boxes[0];
        assert_eq!((b.x1, b.y1, b.x2, b.y2), (0.0, 10.0, 50.0, 60.0));
    }

    #[test]
    fn ingest_drops_out_of_frame_box() {
        let input = line("v1", 0, [120.0, 10.0, 130.0, 60.0], 0.9);
        let got = ingest_detections(input.as_bytes(), &manifest("v1", 100, 100), false).unwrap();
        assert_eq!(got.degenerate_dropped, 1);
        assert!(got.tracks[0].frames.is_empty());
    }

    #[test]
    fn ingest_groups_and_sorts_frames() {
        let input = [
            line("v1", 5, [1.0, 1.0, 2.0, 2.0], 0.5),
            line("v1", 2, [1.0, 1.0, 3.0, 3.0], 0.5),
            line("v1", 5, [4.0, 4.0, 6.0, 6.0], 0.5),
        ]
        .join("\n");
        let got = ingest_detections(input.as_bytes(), &manifest("v1", 100, 100), false).unwrap();
        let idx: Vec<u64> = got.tracks[0].frames.iter().map(|f| f.index).collect();
        assert_eq!(idx, vec![2, 5]);
        assert_eq!(got.tracks[0].frames[1].boxes.len(), 2);
    }

    #[test]
    fn ingest_malformed_line_names_line_number() {
        let input = format!("{}\nnot json\n", line("v1", 0, [1.0, 1.0, 2.0, 2.0], 0.5));
        match ingest_detections(input.as_bytes(), &manifest("v1", 100, 100), false) {
            Err(RoiError::Input(JsonlError::Parse { line, .. })) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inverted_box_is_collected_or_fatal_when_strict() {
        let input = [
            line("v1", 0, [50.0, 10.0, 10.0, 60.0], 0.9),
            line("v1", 1, [10.0, 10.0, 20.0, 20.0], 0.9),
        ]
        .join("\n");
        let lenient = ingest_detections(input.as_bytes(), &manifest("v1", 100, 100), false).unwrap();
        assert_eq!(lenient.rejected.len(), 1);
        assert_eq!(lenient.rejected[0].line, 1);
        assert_eq!(lenient.tracks[0].frames.len(), 1);
        assert!(matches!(
            ingest_detections(input.as_bytes(), &manifest("v1", 100, 100), true),
            Err(RoiError::InvalidRecords(v)) if v.len() == 1
        ));
    }

    #[test]
    fn unknown_video_is_fatal() {
        let input = line("ghost", 0, [1.0, 1.0, 2.0, 2.0], 0.5);
        assert!(matches!(
            ingest_detections(input.as_bytes(), &manifest("v1", 100, 100), false),
            Err(RoiError::UnknownVideo { video_id, line: 1 }) if video_id == "ghost"
        ));
    }

    #[test]
    fn manifest_rejects_duplicates() {
        let m = "{\"video_id\":\"a\",\"width\":4,\"height\":4,\"num_frames\":1}\n\
                 {\"video_id\":\"a\",\"width\":4,\"height\":4,\"num_frames\":1}\n";
        assert!(matches!(
            read_manifest(m.as_bytes()),
            Err(RoiError::DuplicateVideo { .. })
        ));
    }

    #[test]
    fn union_of_two_boxes() {
        let t = track(vec![bx(10.0, 20.0, 50.0, 60.0), bx(30.0, 10.0, 70.0, 40.0)]);
        let u = consolidate_box(&t, 0.0).unwrap();
        assert_eq!((u.x1, u.y1, u.x2, u.y2), (10.0, 10.0, 70.0, 60.0));
    }

    #[test]
    fn union_of_single_box_is_identity() {
        let t = track(vec![bx(10.0, 20.0, 50.0, 60.0)]);
        let u = consolidate_box(&t, 0.0).unwrap();
        assert_eq!((u.x1, u.y1, u.x2, u.y2), (10.0, 20.0, 50.0, 60.0));
    }

    #[test]
    fn threshold_filters_and_errors_when_empty() {
        let mut t = track(vec![bx(10.0, 20.0, 50.0, 60.0)]);
        t.frames[0]
            .boxes
            .push(BoundingBox::new(0.0, 0.0, 99.0, 99.0, 0.1).unwrap());
        let u = consolidate_box(&t, 0.5).unwrap();
        assert_eq!((u.x1, u.x2), (10.0, 50.0));
        assert!(matches!(consolidate_box(&t, 0.95), Err(RoiError::NoDetections { video_id }) if video_id == "v"));
        let empty = track(vec![]);
        assert!(matches!(
            consolidate_box(&empty, 0.0),
            Err(RoiError::NoDetections { .. })
        ));
    }

    #[test]
    fn crop_exact_integers() {
        let c = make_crop_spec("v", &bx(10.0, 10.0, 70.0, 60.0), 100, 100, 0.0).unwrap();
        assert_eq!((c.crop_x, c.crop_y, c.crop_w, c.crop_h), (10, 10, 60, 50));
        assert_eq!(emit_crop_filter(&c), "crop=60:50:10:10");
    }

    #[test]
    fn crop_fractional_box_rounds_out_to_even() {
        // floor(10.5) = 10; ceil(70.3) = 71 -> 61 -> 62; ceil(60.7) = 61 -> 51 -> 52
        let c = make_crop_spec("v", &bx(10.5, 10.5, 70.3, 60.7), 100, 100, 0.0).unwrap();
        assert_eq!((c.crop_x, c.crop_y, c.crop_w, c.crop_h), (10, 10, 62, 52));
        assert_eq!(c.filter(), "crop=62:52:10:10");
    }

    #[test]
    fn padding_is_clamped_to_full_frame() {
        let c = make_crop_spec("v", &bx(0.0, 0.0, 100.0, 100.0), 100, 100, 0.1).unwrap();
        assert_eq!((c.crop_x, c.crop_y, c.crop_w, c.crop_h), (0, 0, 100, 100));
        assert_eq!(c.filter(), "crop=100:100:0:0");
    }

    #[test]
    fn padding_expands_by_longest_side() {
        // width 40, height 20 -> pad 4 on each side
        let c = make_crop_spec("v", &bx(20.0, 20.0, 60.0, 40.0), 100, 100, 0.1).unwrap();
        assert_eq!((c.crop_x, c.crop_y, c.crop_w, c.crop_h), (16, 16, 48, 28));
    }

    #[test]
    fn odd_overflow_shifts_near_edge() {
        // 91..100 in a 100 wide frame: len 9 -> 10 overflows, start moves to 90.
        let c = make_crop_spec("v", &bx(91.0, 0.0, 100.0, 10.0), 100, 101, 0.0).unwrap();
        assert_eq!((c.crop_x, c.crop_w), (90, 10));
        // full odd height: 101 -> 100 at the far edge.
        let c = make_crop_spec("v", &bx(0.0, 0.0, 10.0, 101.0), 100, 101, 0.0).unwrap();
        assert_eq!((c.crop_y, c.crop_h), (0, 100));
    }

    #[test]
    fn tiny_box_at_far_corner_still_gets_two_pixels() {
        let c = make_crop_spec("v", &bx(99.2, 99.5, 99.8, 99.9), 100, 100, 0.0).unwrap();
        assert_eq!((c.crop_x, c.crop_y, c.crop_w, c.crop_h), (98, 98, 2, 2));
    }

    #[test]
    fn crop_errors() {
        assert!(matches!(
            make_crop_spec("v", &bx(10.0, 10.0, 20.0, 20.0), 1, 100, 0.0),
            Err(RoiError::InvalidFrame { .. })
        ));
        assert!(matches!(
            make_crop_spec("v", &bx(200.0, 10.0, 220.0, 20.0), 100, 100, 0.0),
            Err(RoiError::NoDetections { .. })
        ));
        assert!(matches!(
            make_crop_spec("v", &bx(10.0, 10.0, 20.0, 20.0), 100, 100, -0.5),
            Err(RoiError::InvalidParameter(_))
        ));
    }

    #[test]
    fn fallback_full_frame() {
        let empty = DetectionTrack {
            video_id: "e".into(),
            frame_width: 101,
            frame_height: 50,
            frames: vec![],
        };
        assert!(plan_crop(&empty, &RoiParams::default()).is_err());
        let params = RoiParams {
            fallback_full_frame: true,
            ..RoiParams::default()
        };
        let c = plan_crop(&empty, &params).unwrap();
        assert_eq!(c.filter(), "crop=100:50:0:0");
    }
}
