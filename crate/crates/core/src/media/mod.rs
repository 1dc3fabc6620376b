//! Clip decode/encode, dataset manifests and the artifact cache.

mod cache;
mod clip_io;
mod codec;
mod manifest;

pub use cache::{safe_path_component, ArtifactCache, ArtifactKey, ArtifactStage};
pub use clip_io::{load_clip, save_clip, CLIP_META_FILE, DEFAULT_FPS};
pub use codec::{decode_frames, encode_frames};
pub use manifest::{
    load_manifest, write_manifest, BehaviorTag, DatasetManifest, ManifestEntry, MANIFEST_HEADER,
};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MediaError {
    #[error("media not found: {}", .0.display())]
    MediaNotFound(PathBuf),
    #[error("cannot decode {}: {reason}", .path.display())]
    DecodeFailure { path: PathBuf, reason: String },
    #[error("no frames in {}", .0.display())]
    EmptyMedia(PathBuf),
    #[error("cannot write {}: {reason}", .path.display())]
    WriteFailure { path: PathBuf, reason: String },
    #[error("manifest line {line}: {reason}")]
    ParseFailure { line: usize, reason: String },
    #[error("manifest line {line}: duplicate clip_id `{clip_id}`")]
    DuplicateClipId { line: usize, clip_id: String },
    #[error("artifact storage failed at {}: {reason}", .path.display())]
    StorageFailure { path: PathBuf, reason: String },
}
