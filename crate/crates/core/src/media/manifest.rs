//! Tab-separated dataset manifests.
//!
//! ```text
//! clip_id<TAB>media_path<TAB>subject_id<TAB>behavior_tag
//! id00017_a<TAB>clips/id00017_a<TAB>id00017<TAB>unspecified
//! ```
//!
//! Relative media paths resolve against the manifest's directory. The tag
//! column may be empty or omitted, meaning `unspecified`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MediaError;

pub const MANIFEST_HEADER: &str = "clip_id\tmedia_path\tsubject_id\tbehavior_tag";

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorTag {
    GazeVariation,
    ExpressionVariation,
    SpeechHeadMotion,
    RapidPoseChange,
    #[default]
    Unspecified,
}

impl BehaviorTag {
    /// The four recorded behaviour classes, without `Unspecified`.
    pub const RECORDED: [BehaviorTag; 4] = [
        BehaviorTag::GazeVariation,
        BehaviorTag::ExpressionVariation,
        BehaviorTag::SpeechHeadMotion,
        BehaviorTag::RapidPoseChange,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::GazeVariation => "gaze_variation",
            Self::ExpressionVariation => "expression_variation",
            Self::SpeechHeadMotion => "speech_head_motion",
            Self::RapidPoseChange => "rapid_pose_change",
            Self::Unspecified => "unspecified",
        }
    }
}

impl fmt::Display for BehaviorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BehaviorTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "" | "unspecified" => Ok(Self::Unspecified),
            "gaze_variation" => Ok(Self::GazeVariation),
            "expression_variation" => Ok(Self::ExpressionVariation),
            "speech_head_motion" => Ok(Self::SpeechHeadMotion),
            "rapid_pose_change" => Ok(Self::RapidPoseChange),
            other => Err(format!("unknown behavior tag `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub media_path: PathBuf,
    pub subject_id: String,
    #[serde(default)]
    pub behavior_tag: BehaviorTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub entries: Vec<ManifestEntry>,
    /// Directory relative media paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn resolve_media(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.media_path.is_absolute() {
            entry.media_path.clone()
        } else {
            self.base_dir.join(&entry.media_path)
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn parse_failure(line: usize, reason: impl Into<String>) -> MediaError {
    MediaError::ParseFailure {
        line,
        reason: reason.into(),
    }
}

/// Parses manifest text. Line numbers in errors are 1-based.
pub fn parse_manifest(
    text: &str,
    dataset_name: &str,
    base_dir: &Path,
) -> Result<DatasetManifest, MediaError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == MANIFEST_HEADER => {}
        Some(_) => {
            return Err(parse_failure(
                1,
                format!("expected header `{}`", MANIFEST_HEADER.replace('\t', "\\t")),
            ))
        }
        None => return Err(parse_failure(1, "missing header")),
    }

    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(parse_failure(
                line_no,
                format!("expected 3 or 4 tab-separated fields, got {}", fields.len()),
            ));
        }
        let clip_id = fields[0].trim();
        let media_path = fields[1].trim();
        let subject_id = fields[2].trim();
        if clip_id.is_empty() {
            return Err(parse_failure(line_no, "empty clip_id"));
        }
        if media_path.is_empty() {
            return Err(parse_failure(line_no, "empty media_path"));
        }
        let behavior_tag = fields
            .get(3)
            .map_or(Ok(BehaviorTag::Unspecified), |t| t.trim().parse())
            .map_err(|e| parse_failure(line_no, e))?;
        if !seen.insert(clip_id.to_string()) {
            return Err(MediaError::DuplicateClipId {
                line: line_no,
                clip_id: clip_id.into(),
            });
        }
        entries.push(ManifestEntry {
            clip_id: clip_id.into(),
            media_path: PathBuf::from(media_path),
            subject_id: subject_id.into(),
            behavior_tag,
        });
    }
    Ok(DatasetManifest {
        dataset_name: dataset_name.into(),
        entries,
        base_dir: base_dir.to_path_buf(),
    })
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, MediaError> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => MediaError::MediaNotFound(path.to_path_buf()),
        _ => MediaError::DecodeFailure {
            path: path.to_path_buf(),
            reason: e.to_string(),
        },
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&text, &name, &base)
}

pub fn render_manifest(manifest: &DatasetManifest) -> String {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for e in &manifest.entries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.clip_id,
            e.media_path.display(),
            e.subject_id,
            e.behavior_tag
        ));
    }
    out
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), MediaError> {
    fs::write(path, render_manifest(manifest)).map_err(|e| MediaError::WriteFailure {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
