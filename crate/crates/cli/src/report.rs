//! CSV report files and the bundle listing everything an evaluation wrote.
//!
//! Per-video CSVs hold one row per frame; skipped frames have empty metric
//! cells. The summary CSV has one row per criterion with a mean and a
//! variance column per distance family, and every value in it can be
//! recomputed from the per-video files.

use std::fs;
use std::path::{Path, PathBuf};

use dtwin::evaluation::{DatasetSummary, MetricKind, SkipReason, VideoEvaluation};
use dtwin::model::DistanceMetric;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const FRAME_CSV_HEADER: [&str; 8] = [
    "frame_index",
    "deid_cosine",
    "deid_euclid",
    "consist_cosine",
    "consist_euclid",
    "expr_cosine",
    "expr_euclid",
    "skip_reason",
];

pub const SUMMARY_CSV_HEADER: [&str; 7] = [
    "criterion",
    "better",
    "cosine_mean",
    "cosine_variance",
    "euclidean_mean",
    "euclidean_variance",
    "num_videos",
];

/// Metric columns of a per-video CSV, in header order.
pub const FRAME_COLUMNS: [(MetricKind, DistanceMetric); 6] = [
    (MetricKind::DeidLevel, DistanceMetric::Cosine),
    (MetricKind::DeidLevel, DistanceMetric::Euclidean),
    (MetricKind::IdentityConsistency, DistanceMetric::Cosine),
    (MetricKind::IdentityConsistency, DistanceMetric::Euclidean),
    (MetricKind::ExpressionPreservation, DistanceMetric::Cosine),
    (
        MetricKind::ExpressionPreservation,
        DistanceMetric::Euclidean,
    ),
];

/// A manifest entry with no de-identified video.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingOutput {
    pub clip_id: String,
    pub expected_path: PathBuf,
}

/// An entry that had a video but could not be evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationFailure {
    pub clip_id: String,
    pub message: String,
}

/// Paths are relative to the report directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub per_video_csvs: Vec<PathBuf>,
    /// Absent when no video could be evaluated.
    pub summary_csv: Option<PathBuf>,
    pub plots: Vec<PathBuf>,
    pub run_records: PathBuf,
    pub missing: Vec<MissingOutput>,
    pub failures: Vec<EvaluationFailure>,
}

impl ReportBundle {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty() && self.failures.is_empty() && self.summary_csv.is_some()
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::write(path, e)
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

pub fn write_frame_csv(path: &Path, eval: &VideoEvaluation) -> Result<(), CliError> {
    let columns: Vec<&Vec<Option<f64>>> = FRAME_COLUMNS
        .iter()
        .map(|&(kind, dist)| {
            eval.timelines
                .iter()
                .find(|t| t.metric_kind == kind && t.distance == dist)
                .map(|t| &t.values)
                .ok_or_else(|| CliError::Precondition(format!("no {kind} {dist} timeline")))
        })
        .collect::<Result<_, _>>()?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(FRAME_CSV_HEADER).map_err(csv_err(path))?;
    for (row, obs) in eval.observations.iter().enumerate() {
        let mut rec = vec![obs.frame_index.to_string()];
        rec.extend(columns.iter().map(|c| cell(c.get(row).copied().flatten())));
        rec.push(
            obs.skip_reason
                .map(|r| r.as_str().to_string())
                .unwrap_or_default(),
        );
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

/// One parsed row of a per-video CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRow {
    pub frame_index: usize,
    /// In [`FRAME_COLUMNS`] order.
    pub values: [Option<f64>; 6],
    pub skip_reason: Option<SkipReason>,
}

fn bad(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Precondition(format!("{}: {msg}", path.display()))
}

fn parse_opt(path: &Path, s: &str) -> Result<Option<f64>, CliError> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse()
            .map(Some)
            .map_err(|e| bad(path, format!("`{s}`: {e}")))
    }
}

pub fn read_frame_csv(path: &Path) -> Result<Vec<FrameRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(path, e))?;
    let header = r.headers().map_err(|e| bad(path, e))?;
    if header.iter().ne(FRAME_CSV_HEADER) {
        return Err(bad(path, "unexpected header"));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| bad(path, e))?;
            let mut values = [None; 6];
            for (i, v) in values.iter_mut().enumerate() {
                *v = parse_opt(path, &rec[i + 1])?;
            }
            let skip = &rec[7];
            Ok(FrameRow {
                frame_index: rec[0].parse().map_err(|e| bad(path, e))?,
                values,
                skip_reason: if skip.is_empty() {
                    None
                } else {
                    Some(
                        SkipReason::parse(skip)
                            .ok_or_else(|| bad(path, format!("skip reason `{skip}`")))?,
                    )
                },
            })
        })
        .collect()
}

pub fn write_summary_csv(path: &Path, summary: &DatasetSummary) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(SUMMARY_CSV_HEADER).map_err(csv_err(path))?;
    for kind in MetricKind::ALL {
        let mut rec = vec![
            kind.as_str().to_string(),
            if kind.higher_is_better() {
                "higher"
            } else {
                "lower"
            }
            .to_string(),
        ];
        for dist in DistanceMetric::ALL {
            let c = summary
                .cell(kind, dist)
                .ok_or_else(|| CliError::Precondition(format!("summary lacks {kind} {dist}")))?;
            rec.push(format!("{:?}", c.mean_of_means));
            rec.push(format!("{:?}", c.mean_of_variances));
        }
        rec.push(summary.num_videos.to_string());
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

/// One parsed row of the summary CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub criterion: MetricKind,
    pub cosine_mean: f64,
    pub cosine_variance: f64,
    pub euclidean_mean: f64,
    pub euclidean_variance: f64,
    pub num_videos: usize,
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(path, e))?;
    let header = r.headers().map_err(|e| bad(path, e))?;
    if header.iter().ne(SUMMARY_CSV_HEADER) {
        return Err(bad(path, "unexpected header"));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| bad(path, e))?;
            let num =
                |i: usize| -> Result<f64, CliError> { rec[i].parse().map_err(|e| bad(path, e)) };
            Ok(SummaryRow {
                criterion: MetricKind::parse(&rec[0])
                    .ok_or_else(|| bad(path, format!("criterion `{}`", &rec[0])))?,
                cosine_mean: num(2)?,
                cosine_variance: num(3)?,
                euclidean_mean: num(4)?,
                euclidean_variance: num(5)?,
                num_videos: rec[6].parse().map_err(|e| bad(path, e))?,
            })
        })
        .collect()
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::write(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::write(path, e))
}
