//! Content-keyed artifact store: one file per key at
//! `root/stage/clip_id/config_digest`.
//!
//! Writes go through a temporary file and a rename, so a reader never sees a
//! partial payload. Concurrent writers of the same key race; the last rename
//! wins.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::MediaError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactStage {
    SourceFrame,
    Mask,
    Caption,
    Dtwin,
    DeidVideo,
    Metrics,
}

impl ArtifactStage {
    pub const ALL: [ArtifactStage; 6] = [
        Self::SourceFrame,
        Self::Mask,
        Self::Caption,
        Self::Dtwin,
        Self::DeidVideo,
        Self::Metrics,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SourceFrame => "source_frame",
            Self::Mask => "mask",
            Self::Caption => "caption",
            Self::Dtwin => "dtwin",
            Self::DeidVideo => "deid_video",
            Self::Metrics => "metrics",
        }
    }
}

impl fmt::Display for ArtifactStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArtifactKey {
    pub stage: ArtifactStage,
    pub clip_id: String,
    pub config_digest: String,
}

impl ArtifactKey {
    pub fn new(
        stage: ArtifactStage,
        clip_id: impl Into<String>,
        config_digest: impl Into<String>,
    ) -> Self {
        Self {
            stage,
            clip_id: clip_id.into(),
            config_digest: config_digest.into(),
        }
    }

    /// Path below the cache root.
    pub fn relative_path(&self) -> PathBuf {
        PathBuf::from(self.stage.as_str())
            .join(safe_path_component(&self.clip_id))
            .join(safe_path_component(&self.config_digest))
    }
}

/// File-name-safe form of `s`. Anything outside `[A-Za-z0-9_.-]`, a
/// leading dot or an `x-` prefix triggers hex encoding behind `x-`.
pub fn safe_path_component(s: &str) -> String {
    let plain = !s.is_empty()
        && !s.starts_with('.')
        && !s.starts_with("x-")
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c));
    if plain {
        s.to_string()
    } else {
        let hex: String = s.bytes().map(|b| format!("{b:02x}")).collect();
        format!("x-{hex}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactCache {
    root: PathBuf,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ArtifactCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &ArtifactKey) -> PathBuf {
        self.root.join(key.relative_path())
    }

    pub fn store(&self, key: &ArtifactKey, payload: &[u8]) -> Result<(), MediaError> {
        let path = self.path_for(key);
        let fail = |p: &Path, e: std::io::Error| MediaError::StorageFailure {
            path: p.to_path_buf(),
            reason: e.to_string(),
        };
        let dir = path.parent().expect("artifact paths have a parent");
        fs::create_dir_all(dir).map_err(|e| fail(dir, e))?;
        let tmp = dir.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        fs::write(&tmp, payload).map_err(|e| fail(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| {
            let _ = fs::remove_file(&tmp);
            fail(&path, e)
        })
    }

    /// `Ok(None)` when nothing is stored under `key`.
    pub fn fetch(&self, key: &ArtifactKey) -> Result<Option<Vec<u8>>, MediaError> {
        let path = self.path_for(key);
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(MediaError::StorageFailure {
                path,
                reason: e.to_string(),
            }),
        }
    }
}
