//! Test-time-augmentation view plans.
//!
//! A plan is the cross product of uniformly spaced temporal clip windows and
//! square spatial crops slid along the longer side of the cropped frame.
//! View `t * spatial_views + s` pairs temporal window `t` with crop `s`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roi::{CropSpec, VideoInfo};

#[derive(Debug, Error, PartialEq)]
pub enum TtaError {
    #[error("video has no frames")]
    EmptyVideo,
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("crop spec is for {crop} but the manifest entry is for {video}")]
    VideoMismatch { video: String, crop: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipWindow {
    pub start_frame: u32,
    pub frame_indices: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CropPosition {
    First,
    Center,
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpatialCrop {
    pub x: u32,
    pub y: u32,
    pub side: u32,
    pub position: CropPosition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtaConfig {
    pub clip_len: u32,
    pub stride: u32,
    pub temporal_views: u32,
    pub spatial_views: u32,
}

impl Default for TtaConfig {
    fn default() -> Self {
        TtaConfig {
            clip_len: 16,
            stride: 1,
            temporal_views: 5,
            spatial_views: 3,
        }
    }
}

impl TtaConfig {
    pub fn num_views(&self) -> u32 {
        self.temporal_views * self.spatial_views
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TtaView {
    pub view_id: u32,
    pub clip: ClipWindow,
    pub crop: SpatialCrop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TtaPlan {
    pub video_id: String,
    pub views: Vec<TtaView>,
}

/// One line of the TTA plan file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtaViewRecord {
    pub video_id: String,
    pub view_id: u32,
    pub frames: Vec<u32>,
    pub crop: CropRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRecord {
    pub x: u32,
    pub y: u32,
    pub side: u32,
}

impl TtaPlan {
    pub fn records(&self) -> impl Iterator<Item = TtaViewRecord> + '_ {
        self.views.iter().map(|v| TtaViewRecord {
            video_id: self.video_id.clone(),
            view_id: v.view_id,
            frames: v.clip.frame_indices.clone(),
            crop: CropRecord {
                x: v.crop.x,
                y: v.crop.y,
                side: v.crop.side,
            },
        })
    }
}

fn require_positive(name: &str, v: u32) -> Result<(), TtaError> {
    if v == 0 {
        return Err(TtaError::InvalidConfig(format!("{name} must be >= 1")));
    }
    Ok(())
}

/// Uniformly spaced clip windows. Start `k` is
/// `round(k * (num_frames - span) / (num_views - 1))` with
/// `span = (clip_len - 1) * stride + 1`; videos shorter than `span` repeat
/// their last frame.
pub fn temporal_windows(
    num_frames: u32,
    clip_len: u32,
    stride: u32,
    num_views: u32,
) -> Result<Vec<ClipWindow>, TtaError> {
    if num_frames == 0 {
        return Err(TtaError::EmptyVideo);
    }
    require_positive("clip_len", clip_len)?;
    require_positive("stride", stride)?;
    require_positive("num_views", num_views)?;

    let span = u64::from(clip_len - 1) * u64::from(stride) + 1;
    let frames = u64::from(num_frames);
    let last = frames - 1;
    let slack = frames.saturating_sub(span);
    let denom = u64::from(num_views - 1);

    Ok((0..u64::from(num_views))
        .map(|k| {
            // Integer round-half-up of k * slack / denom.
            let start = if denom == 0 {
                0
            } else {
                (2 * k * slack + denom) / (2 * denom)
            };
            let frame_indices = (0..u64::from(clip_len))
                .map(|j| (start + j * u64::from(stride)).min(last) as u32)
                .collect();
            ClipWindow {
                start_frame: start as u32,
                frame_indices,
            }
        })
        .collect())
}

/// Three square crops of side `min(crop_w, crop_h)` at the start, middle
/// (rounded down) and end of the longer dimension.
pub fn spatial_crops(crop_w: u32, crop_h: u32, num_views: u32) -> Result<Vec<SpatialCrop>, TtaError> {
    if num_views != 3 {
        return Err(TtaError::Unsupported(format!(
            "{num_views} spatial views; only 3 (first/center/last) are implemented"
        )));
    }
    require_positive("crop width", crop_w)?;
    require_positive("crop height", crop_h)?;
    let side = crop_w.min(crop_h);
    let slack = crop_w.max(crop_h) - side;
    let horizontal = crop_w >= crop_h;
    Ok([
        (0, CropPosition::First),
        (slack / 2, CropPosition::Center),
        (slack, CropPosition::Last),
    ]
    .into_iter()
    .map(|(offset, position)| {
        let (x, y) = if horizontal { (offset, 0) } else { (0, offset) };
        SpatialCrop { x, y, side, position }
    })
    .collect())
}

/// Cross product of [`temporal_windows`] and [`spatial_crops`] for one video.
/// The crops are positioned inside the ROI-cropped frame.
pub fn build_tta_plan(video: &VideoInfo, crop: &CropSpec, config: &TtaConfig) -> Result<TtaPlan, TtaError> {
    if video.video_id != crop.video_id {
        return Err(TtaError::VideoMismatch {
            video: video.video_id.clone(),
            crop: crop.video_id.clone(),
        });
    }
    let windows = temporal_windows(video.num_frames, config.clip_len, config.stride, config.temporal_views)?;
    let crops = spatial_crops(crop.crop_w, crop.crop_h, config.spatial_views)?;
    let crops = &crops;
    let views = windows
        .iter()
        .enumerate()
        .flat_map(|(t, clip)| {
            crops.iter().enumerate().map(move |(s, c)| TtaView {
                view_id: (t * crops.len() + s) as u32,
                clip: clip.clone(),
                crop: *c,
            })
        })
        .collect();
    Ok(TtaPlan {
        video_id: video.video_id.clone(),
        views,
    })
}
