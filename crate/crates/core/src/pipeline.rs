//! End-to-end orchestration over single clips and whole manifests.
//!
//! Stages run in order: load, source_frame, mask, caption, dtwin,
//! deid_video, then optionally metrics and save. With a cache root set,
//! each stage's output is stored under a digest of exactly the inputs and
//! settings it depends on, so changing e.g. the seed re-runs only the
//! inpainting and re-enactment stages.
//!
//! A stage failure is recorded, later stages are marked skipped, and the
//! clip's run ends. Storage errors are recorded the same way and also
//! returned from [`run_clip`]. [`run_batch`] never aborts on a clip.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evaluation::{evaluate_pair, VideoEvaluation, VideoSummary};
use crate::generation::{
    caption_image, inpaint_face, prepare_mask, reenact, BackendRegistry, BackendSelection, DTwin,
    GenerationBackends, GenerationError, GenerationParams, RegistryError,
};
use crate::media::{
    decode_frames, encode_frames, load_clip, safe_path_component, save_clip, ArtifactCache,
    ArtifactKey, ArtifactStage, DatasetManifest, MediaError,
};
use crate::model::{validate_clip, Caption, FaceMask, VideoClip};
use crate::source_prep::{select_source_frame, DilationPolicy, SourceSelection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[derive(Default)]
pub struct PipelineConfig {
    pub backends: BackendSelection,
    pub params: GenerationParams,
    pub dilation: DilationPolicy,
    /// Not part of the digest: moving the cache does not change results.
    pub cache_dir: Option<PathBuf>,
    /// Also compute metrics for each clip against its output.
    pub evaluate: bool,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over labelled parts, each length-prefixed.
fn digest_parts(parts: &[(&str, &[u8])]) -> String {
    let mut h = Sha256::new();
    for (label, bytes) in parts {
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    hex(&h.finalize())
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("config values serialize")
}

/// Content hash of a clip: id, frame rate, dimensions and every sample.
pub fn clip_fingerprint(clip: &VideoClip) -> String {
    let mut h = Sha256::new();
    h.update(clip.clip_id.as_bytes());
    h.update([0]);
    h.update(clip.fps.to_le_bytes());
    h.update((clip.frames.len() as u64).to_le_bytes());
    for f in &clip.frames {
        h.update((f.width() as u64).to_le_bytes());
        h.update((f.height() as u64).to_le_bytes());
        for v in f.pixels() {
            h.update(v.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

impl PipelineConfig {
    /// Stable digest of every field except `cache_dir`.
    pub fn digest(&self) -> String {
        digest_parts(&[
            ("backends", &json(&self.backends)),
            ("params", &json(&self.params)),
            ("dilation", &json(&self.dilation)),
            ("evaluate", &[u8::from(self.evaluate)]),
        ])
    }

    /// Per-stage digests for one input clip.
    pub fn stage_digests(&self, clip_fingerprint: &str) -> StageDigests {
        let b = &self.backends;
        let source_frame = digest_parts(&[
            ("clip", clip_fingerprint.as_bytes()),
            ("pose_detector", b.pose_detector.as_bytes()),
        ]);
        let mask = digest_parts(&[
            ("source_frame", source_frame.as_bytes()),
            ("contour_detector", b.contour_detector.as_bytes()),
            ("dilation", &json(&self.dilation)),
        ]);
        let caption = digest_parts(&[
            ("source_frame", source_frame.as_bytes()),
            ("captioner", b.captioner.as_bytes()),
        ]);
        let dtwin = digest_parts(&[
            ("mask", mask.as_bytes()),
            ("caption", caption.as_bytes()),
            ("inpainter", b.inpainter.as_bytes()),
            ("params", &json(&self.params)),
        ]);
        let deid_video = digest_parts(&[
            ("dtwin", dtwin.as_bytes()),
            ("reenactor", b.reenactor.as_bytes()),
        ]);
        let metrics = digest_parts(&[
            ("deid_video", deid_video.as_bytes()),
            ("face_cropper", b.face_cropper.as_bytes()),
            ("embedder", b.embedder.as_bytes()),
        ]);
        StageDigests {
            source_frame,
            mask,
            caption,
            dtwin,
            deid_video,
            metrics,
        }
    }
}

/// Digest for caching an evaluation of an arbitrary clip pair.
pub fn evaluation_digest(
    source: &VideoClip,
    deid: &VideoClip,
    backends: &BackendSelection,
) -> String {
    digest_parts(&[
        ("source", clip_fingerprint(source).as_bytes()),
        ("deid", clip_fingerprint(deid).as_bytes()),
        ("face_cropper", backends.face_cropper.as_bytes()),
        ("embedder", backends.embedder.as_bytes()),
    ])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageDigests {
    pub source_frame: String,
    pub mask: String,
    pub caption: String,
    pub dtwin: String,
    pub deid_video: String,
    pub metrics: String,
}

impl StageDigests {
    pub fn get(&self, stage: ArtifactStage) -> &str {
        match stage {
            ArtifactStage::SourceFrame => &self.source_frame,
            ArtifactStage::Mask => &self.mask,
            ArtifactStage::Caption => &self.caption,
            ArtifactStage::Dtwin => &self.dtwin,
            ArtifactStage::DeidVideo => &self.deid_video,
            ArtifactStage::Metrics => &self.metrics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    SourceFrame,
    Mask,
    Caption,
    Dtwin,
    DeidVideo,
    Metrics,
    Save,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Load => "load",
            Self::SourceFrame => "source_frame",
            Self::Mask => "mask",
            Self::Caption => "caption",
            Self::Dtwin => "dtwin",
            Self::DeidVideo => "deid_video",
            Self::Metrics => "metrics",
            Self::Save => "save",
        }
    }

    fn artifact(self) -> Option<ArtifactStage> {
        match self {
            Self::SourceFrame => Some(ArtifactStage::SourceFrame),
            Self::Mask => Some(ArtifactStage::Mask),
            Self::Caption => Some(ArtifactStage::Caption),
            Self::Dtwin => Some(ArtifactStage::Dtwin),
            Self::DeidVideo => Some(ArtifactStage::DeidVideo),
            Self::Metrics => Some(ArtifactStage::Metrics),
            Self::Load | Self::Save => None,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    /// `kind` is the error variant name, e.g. `NoDetectableFace`.
    Failed {
        kind: String,
        message: String,
    },
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    #[serde(flatten)]
    pub status: StageStatus,
}

/// Wall-clock timings and cache hits. Kept out of the serialized record
/// so that records are reproducible byte for byte.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub clip_id: String,
    pub timings_ms: Vec<(Stage, f64)>,
    pub cache_hits: Vec<Stage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub clip_id: String,
    pub config_digest: String,
    pub stages: Vec<StageRecord>,
    pub warnings: Vec<String>,
    /// Artifact paths relative to the cache root.
    pub artifacts: BTreeMap<ArtifactStage, PathBuf>,
    /// Output directory relative to the batch output root.
    pub output: Option<PathBuf>,
    pub source_frame_index: Option<usize>,
    pub dtwin_seed: Option<u64>,
    pub summary: Option<VideoSummary>,
    #[serde(skip)]
    pub diagnostics: RunDiagnostics,
}

impl RunRecord {
    fn new(clip_id: &str, config_digest: String, stages: &[Stage]) -> Self {
        Self {
            clip_id: clip_id.into(),
            config_digest,
            stages: stages
                .iter()
                .map(|&stage| StageRecord {
                    stage,
                    status: StageStatus::Skipped,
                })
                .collect(),
            warnings: Vec::new(),
            artifacts: BTreeMap::new(),
            output: None,
            source_frame_index: None,
            dtwin_seed: None,
            summary: None,
            diagnostics: RunDiagnostics {
                clip_id: clip_id.into(),
                ..RunDiagnostics::default()
            },
        }
    }

    pub fn succeeded(&self) -> bool {
        self.stages.iter().all(|s| s.status == StageStatus::Ok)
    }

    pub fn failure(&self) -> Option<(&Stage, &str, &str)> {
        self.stages.iter().find_map(|s| match &s.status {
            StageStatus::Failed { kind, message } => {
                Some((&s.stage, kind.as_str(), message.as_str()))
            }
            _ => None,
        })
    }

    pub fn status(&self, stage: Stage) -> Option<&StageStatus> {
        self.stages
            .iter()
            .find(|s| s.stage == stage)
            .map(|s| &s.status)
    }

    fn set(&mut self, stage: Stage, status: StageStatus) {
        if let Some(s) = self.stages.iter_mut().find(|s| s.stage == stage) {
            s.status = status;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] RegistryError),
    #[error(transparent)]
    Storage(MediaError),
}

/// Output clip (when every generation stage succeeded) and the record.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipRun {
    pub output: Option<VideoClip>,
    pub record: RunRecord,
}

/// Leading identifier of a `Debug` rendering, i.e. the variant name.
fn variant_name<E: fmt::Debug>(e: &E) -> String {
    let s = format!("{e:?}");
    s.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .next()
        .unwrap_or_default()
        .to_string()
}

fn generation_kind(e: &GenerationError) -> String {
    match e {
        GenerationError::SourcePrep(inner) => variant_name(inner),
        GenerationError::Backend(_) => "BackendError".into(),
        other => variant_name(other),
    }
}

struct StageFailure {
    kind: String,
    message: String,
    storage: Option<MediaError>,
}

impl From<GenerationError> for StageFailure {
    fn from(e: GenerationError) -> Self {
        Self {
            kind: generation_kind(&e),
            message: e.to_string(),
            storage: None,
        }
    }
}

impl From<MediaError> for StageFailure {
    fn from(e: MediaError) -> Self {
        let storage = matches!(
            e,
            MediaError::StorageFailure { .. } | MediaError::WriteFailure { .. }
        );
        Self {
            kind: variant_name(&e),
            message: e.to_string(),
            storage: storage.then_some(e),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MaskArtifact {
    width: usize,
    height: usize,
    dilation_px: u32,
    packed: Vec<u8>,
    warnings: Vec<String>,
}

impl MaskArtifact {
    fn new(mask: &FaceMask, warnings: &[String]) -> Self {
        let mut packed = vec![0u8; mask.bits().len().div_ceil(8)];
        for (i, _) in mask.bits().iter().enumerate().filter(|(_, b)| **b) {
            packed[i / 8] |= 1 << (i % 8);
        }
        Self {
            width: mask.width(),
            height: mask.height(),
            dilation_px: mask.dilation_px,
            packed,
            warnings: warnings.to_vec(),
        }
    }

    fn into_parts(self) -> Option<(FaceMask, Vec<String>)> {
        let n = self.width.checked_mul(self.height)?;
        if self.packed.len() != n.div_ceil(8) {
            return None;
        }
        let bits = (0..n)
            .map(|i| self.packed[i / 8] >> (i % 8) & 1 == 1)
            .collect();
        let mask = FaceMask::new(self.width, self.height, bits, self.dilation_px).ok()?;
        Some((mask, self.warnings))
    }
}

#[derive(Serialize, Deserialize)]
struct DTwinMeta {
    seed: u64,
    caption_used: Caption,
    source_frame_index: usize,
}

fn encode_dtwin(d: &DTwin) -> Vec<u8> {
    let meta = json(&DTwinMeta {
        seed: d.seed,
        caption_used: d.caption_used.clone(),
        source_frame_index: d.source_frame_index,
    });
    let mut out = (meta.len() as u64).to_le_bytes().to_vec();
    out.extend_from_slice(&meta);
    out.extend_from_slice(&encode_frames(std::slice::from_ref(&d.image)));
    out
}

fn decode_dtwin(bytes: &[u8]) -> Option<DTwin> {
    let len = u64::from_le_bytes(bytes.get(..8)?.try_into().ok()?) as usize;
    let meta: DTwinMeta = serde_json::from_slice(bytes.get(8..8usize.checked_add(len)?)?).ok()?;
    let mut frames = decode_frames(&bytes[8 + len..], "dtwin").ok()?;
    (frames.len() == 1).then(|| DTwin {
        image: frames.remove(0),
        seed: meta.seed,
        caption_used: meta.caption_used,
        source_frame_index: meta.source_frame_index,
    })
}

struct Runner<'a> {
    cache: Option<ArtifactCache>,
    clip_id: &'a str,
    digests: StageDigests,
    record: RunRecord,
    storage_error: Option<MediaError>,
}

impl Runner<'_> {
    fn fail(&mut self, stage: Stage, f: StageFailure) {
        self.record.set(
            stage,
            StageStatus::Failed {
                kind: f.kind,
                message: f.message,
            },
        );
        if self.storage_error.is_none() {
            self.storage_error = f.storage;
        }
    }

    /// Runs one stage: cache lookup, else `compute` and store.
    fn stage<T>(
        &mut self,
        stage: Stage,
        encode: impl Fn(&T) -> Vec<u8>,
        decode: impl Fn(&[u8]) -> Option<T>,
        compute: impl FnOnce() -> Result<T, StageFailure>,
    ) -> Option<T> {
        let start = Instant::now();
        let key = stage.artifact().and_then(|a| {
            self.cache
                .as_ref()
                .map(|_| ArtifactKey::new(a, self.clip_id, self.digests.get(a)))
        });
        let result = self.cached_or_compute(stage, key.as_ref(), encode, decode, compute);
        let ms = start.elapsed().as_secs_f64() * 1e3;
        self.record.diagnostics.timings_ms.push((stage, ms));
        match result {
            Ok(v) => {
                self.record.set(stage, StageStatus::Ok);
                if let Some(k) = key {
                    self.record.artifacts.insert(k.stage, k.relative_path());
                }
                Some(v)
            }
            Err(f) => {
                self.fail(stage, f);
                None
            }
        }
    }

    fn cached_or_compute<T>(
        &mut self,
        stage: Stage,
        key: Option<&ArtifactKey>,
        encode: impl Fn(&T) -> Vec<u8>,
        decode: impl Fn(&[u8]) -> Option<T>,
        compute: impl FnOnce() -> Result<T, StageFailure>,
    ) -> Result<T, StageFailure> {
        let (Some(cache), Some(key)) = (self.cache.as_ref(), key) else {
            return compute();
        };
        if let Some(v) = cache.fetch(key)?.as_deref().and_then(&decode) {
            self.record.diagnostics.cache_hits.push(stage);
            return Ok(v);
        }
        let v = compute()?;
        cache.store(key, &encode(&v))?;
        Ok(v)
    }
}

fn stage_list(evaluate: bool, save: bool) -> Vec<Stage> {
    let mut stages = vec![
        Stage::Load,
        Stage::SourceFrame,
        Stage::Mask,
        Stage::Caption,
        Stage::Dtwin,
        Stage::DeidVideo,
    ];
    if evaluate {
        stages.push(Stage::Metrics);
    }
    if save {
        stages.push(Stage::Save);
    }
    stages
}

/// De-identifies one clip. `output_dir`, when given, receives the output
/// as an image sequence in a directory named after the clip id.
pub fn run_clip(
    clip: &VideoClip,
    config: &PipelineConfig,
    registry: &BackendRegistry,
    output_dir: Option<&Path>,
) -> Result<ClipRun, PipelineError> {
    registry.check(&config.backends)?;
    let run = run_loaded(Ok(clip), &clip.clip_id, config, registry, output_dir);
    match run.1 {
        Some(e) => Err(PipelineError::Storage(e)),
        None => Ok(run.0),
    }
}

fn run_loaded(
    loaded: Result<&VideoClip, MediaError>,
    clip_id: &str,
    config: &PipelineConfig,
    registry: &BackendRegistry,
    output_dir: Option<&Path>,
) -> (ClipRun, Option<MediaError>) {
    let stages = stage_list(config.evaluate, output_dir.is_some());
    let mut runner = Runner {
        cache: config.cache_dir.as_ref().map(ArtifactCache::new),
        clip_id,
        digests: config.stage_digests(""),
        record: RunRecord::new(clip_id, config.digest(), &stages),
        storage_error: None,
    };
    let output = execute(&mut runner, loaded, config, registry, output_dir);
    let record = runner.record;
    (ClipRun { output, record }, runner.storage_error)
}

fn execute(
    r: &mut Runner<'_>,
    loaded: Result<&VideoClip, MediaError>,
    config: &PipelineConfig,
    registry: &BackendRegistry,
    output_dir: Option<&Path>,
) -> Option<VideoClip> {
    let load_start = Instant::now();
    let clip = match loaded {
        Ok(c) => c,
        Err(e) => {
            r.fail(Stage::Load, e.into());
            return None;
        }
    };
    let violations = validate_clip(clip);
    if !violations.is_empty() {
        let message = violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        r.fail(
            Stage::Load,
            StageFailure {
                kind: "InvalidClip".into(),
                message,
                storage: None,
            },
        );
        return None;
    }
    r.digests = config.stage_digests(&clip_fingerprint(clip));
    r.record.set(Stage::Load, StageStatus::Ok);
    r.record
        .diagnostics
        .timings_ms
        .push((Stage::Load, load_start.elapsed().as_secs_f64() * 1e3));

    let mut backends: GenerationBackends = match registry.generation_backends(&config.backends) {
        Ok(b) => b,
        Err(e) => {
            r.fail(
                Stage::SourceFrame,
                StageFailure {
                    kind: variant_name(&e),
                    message: e.to_string(),
                    storage: None,
                },
            );
            return None;
        }
    };

    let selection = r.stage(
        Stage::SourceFrame,
        json,
        |b| serde_json::from_slice::<SourceSelection>(b).ok(),
        || {
            Ok(select_source_frame(clip, backends.pose_detector.as_mut())
                .map_err(GenerationError::from)?)
        },
    )?;
    if selection.frame_index >= clip.len() {
        r.fail(
            Stage::SourceFrame,
            StageFailure {
                kind: "InvalidSelection".into(),
                message: format!("frame {} out of range", selection.frame_index),
                storage: None,
            },
        );
        return None;
    }
    if selection.num_undetected > 0 {
        r.record.warnings.push(format!(
            "{} of {} frames had no detectable face",
            selection.num_undetected,
            clip.len()
        ));
    }
    r.record.source_frame_index = Some(selection.frame_index);
    let source = &clip.frames[selection.frame_index];

    let (mask, mask_warnings) = r.stage(
        Stage::Mask,
        |(m, w): &(FaceMask, Vec<String>)| json(&MaskArtifact::new(m, w)),
        |b| serde_json::from_slice::<MaskArtifact>(b).ok()?.into_parts(),
        || {
            Ok(prepare_mask(
                source,
                config.dilation,
                backends.contour_detector.as_mut(),
            )?)
        },
    )?;
    r.record.warnings.extend(mask_warnings);

    let caption = r.stage(
        Stage::Caption,
        json,
        |b| serde_json::from_slice::<Caption>(b).ok(),
        || Ok(caption_image(source, backends.captioner.as_mut())?),
    )?;

    let dtwin = r.stage(Stage::Dtwin, encode_dtwin, decode_dtwin, || {
        Ok(inpaint_face(
            source,
            &mask,
            &caption,
            &config.params,
            backends.inpainter.as_mut(),
        )?)
    })?;
    r.record.dtwin_seed = Some(dtwin.seed);
    if dtwin.seed != config.params.seed {
        r.record.warnings.push(format!(
            "inpainting succeeded on retry with seed {}",
            dtwin.seed
        ));
    }

    let deid = r.stage(
        Stage::DeidVideo,
        |c: &VideoClip| encode_frames(&c.frames),
        |b| {
            let frames = decode_frames(b, "deid_video").ok()?;
            let c = VideoClip::new(clip.clip_id.clone(), clip.fps, frames);
            (c.len() == clip.len() && validate_clip(&c).is_empty()).then_some(c)
        },
        || Ok(reenact(&dtwin, clip, backends.reenactor.as_mut())?),
    )?;

    if config.evaluate {
        let summary = r.stage(
            Stage::Metrics,
            json,
            |b| serde_json::from_slice::<VideoEvaluation>(b).ok(),
            || {
                let mut eval = registry
                    .evaluation_backends(&config.backends)
                    .map_err(|e| StageFailure {
                        kind: variant_name(&e),
                        message: e.to_string(),
                        storage: None,
                    })?;
                evaluate_pair(clip, &deid, &mut eval).map_err(|e| StageFailure {
                    kind: variant_name(&e),
                    message: e.to_string(),
                    storage: None,
                })
            },
        )?;
        r.record.summary = Some(summary.summary);
    }

    if let Some(dir) = output_dir {
        let rel = PathBuf::from(safe_path_component(&clip.clip_id));
        let start = Instant::now();
        match save_clip(&deid, &dir.join(&rel)) {
            Ok(()) => {
                r.record.set(Stage::Save, StageStatus::Ok);
                r.record.output = Some(rel);
            }
            Err(e) => {
                r.fail(Stage::Save, e.into());
                return None;
            }
        }
        r.record
            .diagnostics
            .timings_ms
            .push((Stage::Save, start.elapsed().as_secs_f64() * 1e3));
    }
    Some(deid)
}

/// Runs every manifest entry, in parallel, returning records in manifest
/// order. Outputs go to `output_dir/<clip_id>`.
pub fn run_batch(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    registry: &BackendRegistry,
    output_dir: &Path,
) -> Result<Vec<RunRecord>, PipelineError> {
    registry.check(&config.backends)?;
    Ok(manifest
        .entries
        .par_iter()
        .map(|entry| {
            let loaded = load_clip(&manifest.resolve_media(entry), None).map(|mut c| {
                c.clip_id = entry.clip_id.clone();
                c
            });
            run_loaded(
                loaded.as_ref().map_err(Clone::clone),
                &entry.clip_id,
                config,
                registry,
                Some(output_dir),
            )
            .0
            .record
        })
        .collect())
}
