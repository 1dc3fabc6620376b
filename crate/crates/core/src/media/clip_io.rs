//! Image-sequence clips on disk.
//!
//! A clip directory holds numbered frames plus an optional `clip.json` with
//! `clip_id` and `fps`. Written clips use `frame_00000.png, ...`, which is
//! lossless for 8-bit content. Container formats are not decoded.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::MediaError;
use crate::model::{validate_clip, FrameImage, VideoClip};

pub const CLIP_META_FILE: &str = "clip.json";
pub const DEFAULT_FPS: f64 = 25.0;

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

#[derive(Debug, Serialize, Deserialize)]
struct ClipMeta {
    clip_id: String,
    fps: f64,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Last run of digits in the file stem, for numeric ordering.
fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let end = stem.rfind(|c: char| c.is_ascii_digit())? + 1;
    let start = stem[..end]
        .rfind(|c: char| !c.is_ascii_digit())
        .map_or(0, |i| i + 1);
    stem[start..end].parse().ok()
}

fn decode_failure(path: &Path, reason: impl ToString) -> MediaError {
    MediaError::DecodeFailure {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn read_image(path: &Path, frame_index: usize) -> Result<FrameImage, MediaError> {
    let img = image::open(path)
        .map_err(|e| decode_failure(path, e))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    FrameImage::from_rgb8(w, h, img.as_raw(), frame_index).map_err(|e| decode_failure(path, e))
}

/// Loads an image-sequence directory (or a single still image) as a clip.
pub fn load_clip(path: &Path, max_frames: Option<usize>) -> Result<VideoClip, MediaError> {
    if !path.exists() {
        return Err(MediaError::MediaNotFound(path.to_path_buf()));
    }
    let fallback_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();

    if path.is_file() {
        if !is_image(path) {
            return Err(decode_failure(
                path,
                "container video is not supported; extract frames into an image-sequence directory",
            ));
        }
        if max_frames == Some(0) {
            return Err(MediaError::EmptyMedia(path.to_path_buf()));
        }
        let frame = read_image(path, 0)?;
        return Ok(VideoClip::new(fallback_id, DEFAULT_FPS, vec![frame]));
    }

    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| decode_failure(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    files.sort_by(|a, b| {
        frame_number(a)
            .cmp(&frame_number(b))
            .then_with(|| a.file_name().cmp(&b.file_name()))
    });
    if let Some(n) = max_frames {
        files.truncate(n);
    }
    if files.is_empty() {
        return Err(MediaError::EmptyMedia(path.to_path_buf()));
    }

    let meta_path = path.join(CLIP_META_FILE);
    let meta = if meta_path.is_file() {
        let text = fs::read_to_string(&meta_path).map_err(|e| decode_failure(&meta_path, e))?;
        serde_json::from_str(&text).map_err(|e| decode_failure(&meta_path, e))?
    } else {
        ClipMeta {
            clip_id: fallback_id,
            fps: DEFAULT_FPS,
        }
    };

    let frames = files
        .iter()
        .enumerate()
        .map(|(i, p)| read_image(p, i))
        .collect::<Result<Vec<_>, _>>()?;
    let clip = VideoClip::new(meta.clip_id, meta.fps, frames);
    if let Some(v) = validate_clip(&clip).first() {
        return Err(decode_failure(path, v));
    }
    Ok(clip)
}

fn write_failure(path: &Path, reason: impl ToString) -> MediaError {
    MediaError::WriteFailure {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Writes `clip` as a PNG sequence into directory `path`, replacing any
/// frames previously written there.
pub fn save_clip(clip: &VideoClip, path: &Path) -> Result<(), MediaError> {
    if let Some(v) = validate_clip(clip).first() {
        return Err(write_failure(path, format!("invalid clip: {v}")));
    }
    fs::create_dir_all(path).map_err(|e| write_failure(path, e))?;
    for entry in fs::read_dir(path)
        .map_err(|e| write_failure(path, e))?
        .flatten()
    {
        let p = entry.path();
        let stale = p
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("frame_") && is_image(&p));
        if stale {
            fs::remove_file(&p).map_err(|e| write_failure(&p, e))?;
        }
    }
    for (i, frame) in clip.frames.iter().enumerate() {
        let p = path.join(format!("frame_{i:05}.png"));
        image::save_buffer(
            &p,
            &frame.to_rgb8(),
            frame.width() as u32,
            frame.height() as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| write_failure(&p, e))?;
    }
    let meta = ClipMeta {
        clip_id: clip.clip_id.clone(),
        fps: clip.fps,
    };
    let meta_path = path.join(CLIP_META_FILE);
    let text = serde_json::to_string_pretty(&meta).map_err(|e| write_failure(&meta_path, e))?;
    fs::write(&meta_path, text + "\n").map_err(|e| write_failure(&meta_path, e))
}
