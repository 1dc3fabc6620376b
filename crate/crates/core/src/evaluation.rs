//! Per-frame metric series and their per-video and dataset aggregates.
//!
//! Three criteria are measured in both distance families:
//!
//! * de-identification level: source vs de-identified identity (higher is better)
//! * identity consistency: de-identified identity vs the first evaluable
//!   de-identified frame (lower is better)
//! * expression preservation: source vs de-identified expression (lower is better)
//!
//! Frames where either clip has no detectable face are skipped, not imputed.
//! Embeddings are compared as the embedder returns them.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::{BackendError, Embedder, EvaluationBackends};
use crate::model::{
    embedding_distance, DistanceError, DistanceMetric, EmbeddingKind, EmbeddingVector, FrameImage,
    VideoClip,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvaluationError {
    #[error("source has {source_frames} frames but the de-identified clip has {deid_frames}")]
    LengthMismatch {
        source_frames: usize,
        deid_frames: usize,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("embedder `{name}` produced {actual:?} embeddings where {expected:?} was required")]
    WrongEmbeddingKind {
        name: String,
        expected: EmbeddingKind,
        actual: EmbeddingKind,
    },
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error("every frame was skipped")]
    AllFramesSkipped,
    #[error("no evaluable frames")]
    NoEvaluableFrames,
    #[error("timelines disagree: {0}")]
    TimelineMismatch(String),
    #[error("no videos to aggregate")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NoFaceSource,
    NoFaceDeid,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::NoFaceSource => "no_face_source",
            Self::NoFaceDeid => "no_face_deid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "no_face_source" => Some(Self::NoFaceSource),
            "no_face_deid" => Some(Self::NoFaceDeid),
            _ => None,
        }
    }
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Embeddings of one temporally paired frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePairObservation {
    pub frame_index: usize,
    pub source_identity: Option<EmbeddingVector>,
    pub deid_identity: Option<EmbeddingVector>,
    pub source_expression: Option<EmbeddingVector>,
    pub deid_expression: Option<EmbeddingVector>,
    pub skip_reason: Option<SkipReason>,
}

impl FramePairObservation {
    pub fn skipped(frame_index: usize, reason: SkipReason) -> Self {
        Self {
            frame_index,
            source_identity: None,
            deid_identity: None,
            source_expression: None,
            deid_expression: None,
            skip_reason: Some(reason),
        }
    }

    pub fn is_skipped(&self) -> bool {
        self.skip_reason.is_some()
    }
}

fn embed_checked(
    embedder: &mut dyn Embedder,
    crop: &FrameImage,
    expected: EmbeddingKind,
) -> Result<EmbeddingVector, EvaluationError> {
    let v = embedder.embed(crop)?;
    if v.kind() != expected {
        return Err(EvaluationError::WrongEmbeddingKind {
            name: embedder.name().into(),
            expected,
            actual: v.kind(),
        });
    }
    Ok(v)
}

/// Crops and embeds every frame pair. A missing source face is reported
/// before a missing de-identified face.
pub fn extract_observations(
    source: &VideoClip,
    deid: &VideoClip,
    backends: &mut EvaluationBackends,
) -> Result<Vec<FramePairObservation>, EvaluationError> {
    if source.len() != deid.len() {
        return Err(EvaluationError::LengthMismatch {
            source_frames: source.len(),
            deid_frames: deid.len(),
        });
    }
    let mut out = Vec::with_capacity(source.len());
    for (t, (sf, df)) in source.frames.iter().zip(&deid.frames).enumerate() {
        let Some(s_crop) = backends.face_cropper.crop(sf)? else {
            out.push(FramePairObservation::skipped(t, SkipReason::NoFaceSource));
            continue;
        };
        let Some(d_crop) = backends.face_cropper.crop(df)? else {
            out.push(FramePairObservation::skipped(t, SkipReason::NoFaceDeid));
            continue;
        };
        let id = backends.identity_embedder.as_mut();
        let source_identity = embed_checked(id, &s_crop, EmbeddingKind::Identity)?;
        let deid_identity = embed_checked(id, &d_crop, EmbeddingKind::Identity)?;
        let ex = backends.expression_embedder.as_mut();
        let source_expression = embed_checked(ex, &s_crop, EmbeddingKind::Expression)?;
        let deid_expression = embed_checked(ex, &d_crop, EmbeddingKind::Expression)?;
        out.push(FramePairObservation {
            frame_index: t,
            source_identity: Some(source_identity),
            deid_identity: Some(deid_identity),
            source_expression: Some(source_expression),
            deid_expression: Some(deid_expression),
            skip_reason: None,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    DeidLevel,
    IdentityConsistency,
    ExpressionPreservation,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [
        MetricKind::DeidLevel,
        MetricKind::IdentityConsistency,
        MetricKind::ExpressionPreservation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::DeidLevel => "deid_level",
            Self::IdentityConsistency => "identity_consistency",
            Self::ExpressionPreservation => "expression_preservation",
        }
    }

    /// Human-readable label used in plots.
    pub fn label(self) -> &'static str {
        match self {
            Self::DeidLevel => "De-identification Level",
            Self::IdentityConsistency => "Identity Consistency",
            Self::ExpressionPreservation => "Expression Preservation",
        }
    }

    /// Whether larger values are better.
    pub fn higher_is_better(self) -> bool {
        matches!(self, Self::DeidLevel)
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTimeline {
    pub metric_kind: MetricKind,
    pub distance: DistanceMetric,
    /// `None` at skipped frames.
    pub values: Vec<Option<f64>>,
}

impl MetricTimeline {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn present(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().copied()
    }
}

fn pairwise_series<'a>(
    obs: &'a [FramePairObservation],
    metric_kind: MetricKind,
    distance: DistanceMetric,
    pick: impl Fn(
        &'a FramePairObservation,
    ) -> (Option<&'a EmbeddingVector>, Option<&'a EmbeddingVector>),
) -> Result<MetricTimeline, EvaluationError> {
    let values = obs
        .iter()
        .map(|o| match (o.skip_reason, pick(o)) {
            (None, (Some(a), Some(b))) => embedding_distance(a, b, distance).map(Some),
            _ => Ok(None),
        })
        .collect::<Result<_, _>>()?;
    Ok(MetricTimeline {
        metric_kind,
        distance,
        values,
    })
}

pub fn deid_level_series(
    obs: &[FramePairObservation],
    distance: DistanceMetric,
) -> Result<MetricTimeline, EvaluationError> {
    pairwise_series(obs, MetricKind::DeidLevel, distance, |o| {
        (o.source_identity.as_ref(), o.deid_identity.as_ref())
    })
}

pub fn expression_preservation_series(
    obs: &[FramePairObservation],
    distance: DistanceMetric,
) -> Result<MetricTimeline, EvaluationError> {
    pairwise_series(obs, MetricKind::ExpressionPreservation, distance, |o| {
        (o.source_expression.as_ref(), o.deid_expression.as_ref())
    })
}

/// Distance of each de-identified identity to that of the first
/// non-skipped frame.
pub fn identity_consistency_series(
    obs: &[FramePairObservation],
    distance: DistanceMetric,
) -> Result<MetricTimeline, EvaluationError> {
    let reference = obs
        .iter()
        .filter(|o| !o.is_skipped())
        .find_map(|o| o.deid_identity.as_ref())
        .ok_or(EvaluationError::AllFramesSkipped)?;
    pairwise_series(obs, MetricKind::IdentityConsistency, distance, |o| {
        (o.deid_identity.as_ref(), Some(reference))
    })
}

/// All six timelines in `MetricKind::ALL` x `DistanceMetric::ALL` order.
pub fn all_timelines(obs: &[FramePairObservation]) -> Result<Vec<MetricTimeline>, EvaluationError> {
    let mut out = Vec::with_capacity(6);
    for kind in MetricKind::ALL {
        for distance in DistanceMetric::ALL {
            out.push(match kind {
                MetricKind::DeidLevel => deid_level_series(obs, distance)?,
                MetricKind::IdentityConsistency => identity_consistency_series(obs, distance)?,
                MetricKind::ExpressionPreservation => {
                    expression_preservation_series(obs, distance)?
                }
            });
        }
    }
    Ok(out)
}

/// Population mean and variance; `None` for an empty sample.
pub fn mean_and_variance(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub metric_kind: MetricKind,
    pub distance: DistanceMetric,
    pub mean: f64,
    pub variance: f64,
}

fn find_cell(
    cells: &[SummaryCell],
    kind: MetricKind,
    distance: DistanceMetric,
) -> Option<&SummaryCell> {
    cells
        .iter()
        .find(|c| c.metric_kind == kind && c.distance == distance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSummary {
    pub cells: Vec<SummaryCell>,
    pub frames_evaluated: usize,
    pub frames_skipped: usize,
}

impl VideoSummary {
    pub fn cell(&self, kind: MetricKind, distance: DistanceMetric) -> Option<&SummaryCell> {
        find_cell(&self.cells, kind, distance)
    }
}

pub fn summarize_video(timelines: &[MetricTimeline]) -> Result<VideoSummary, EvaluationError> {
    let first = timelines
        .first()
        .ok_or(EvaluationError::NoEvaluableFrames)?;
    let pattern: Vec<bool> = first.values.iter().map(Option::is_some).collect();
    for t in timelines {
        let same = t.values.len() == pattern.len()
            && t.values
                .iter()
                .zip(&pattern)
                .all(|(v, p)| v.is_some() == *p);
        if !same {
            return Err(EvaluationError::TimelineMismatch(format!(
                "{} {} differs in length or skip pattern",
                t.metric_kind,
                t.distance.name()
            )));
        }
    }
    let frames_evaluated = pattern.iter().filter(|p| **p).count();
    if frames_evaluated == 0 {
        return Err(EvaluationError::NoEvaluableFrames);
    }
    let cells = timelines
        .iter()
        .map(|t| {
            let values: Vec<f64> = t.present().collect();
            let (mean, variance) = mean_and_variance(&values).expect("non-empty");
            SummaryCell {
                metric_kind: t.metric_kind,
                distance: t.distance,
                mean,
                variance,
            }
        })
        .collect();
    Ok(VideoSummary {
        cells,
        frames_evaluated,
        frames_skipped: pattern.len() - frames_evaluated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetCell {
    pub metric_kind: MetricKind,
    pub distance: DistanceMetric,
    pub mean_of_means: f64,
    pub mean_of_variances: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub cells: Vec<DatasetCell>,
    pub num_videos: usize,
}

impl DatasetSummary {
    pub fn cell(&self, kind: MetricKind, distance: DistanceMetric) -> Option<&DatasetCell> {
        self.cells
            .iter()
            .find(|c| c.metric_kind == kind && c.distance == distance)
    }
}

/// Unweighted mean across videos of each cell's mean and variance. Cells
/// follow the first summary's order; a cell missing from any video is
/// averaged over the videos that have it.
pub fn summarize_dataset(summaries: &[VideoSummary]) -> Result<DatasetSummary, EvaluationError> {
    let first = summaries.first().ok_or(EvaluationError::EmptyInput)?;
    let cells = first
        .cells
        .iter()
        .map(|c| {
            let found: Vec<&SummaryCell> = summaries
                .iter()
                .filter_map(|s| s.cell(c.metric_kind, c.distance))
                .collect();
            let n = found.len() as f64;
            DatasetCell {
                metric_kind: c.metric_kind,
                distance: c.distance,
                mean_of_means: found.iter().map(|f| f.mean).sum::<f64>() / n,
                mean_of_variances: found.iter().map(|f| f.variance).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(DatasetSummary {
        cells,
        num_videos: summaries.len(),
    })
}

/// Observations, timelines and summary for one clip pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEvaluation {
    pub observations: Vec<FramePairObservation>,
    pub timelines: Vec<MetricTimeline>,
    pub summary: VideoSummary,
}

pub fn evaluate_pair(
    source: &VideoClip,
    deid: &VideoClip,
    backends: &mut EvaluationBackends,
) -> Result<VideoEvaluation, EvaluationError> {
    let observations = extract_observations(source, deid, backends)?;
    let timelines = all_timelines(&observations)?;
    let summary = summarize_video(&timelines)?;
    Ok(VideoEvaluation {
        observations,
        timelines,
        summary,
    })
}
