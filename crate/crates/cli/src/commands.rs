//! The three subcommands as library functions.
//!
//! Layout of a run directory: `videos/<clip_id>/` per output,
//! `cache/` (unless a cache root is configured), `run_records.json` and
//! `run_diagnostics.json`. An evaluation report directory holds
//! `videos/<clip_id>.csv`, `plots/<clip_id>_<distance>.svg`, `summary.csv`
//! and `report.json`.

use std::fs;
use std::path::{Path, PathBuf};

use dtwin::evaluation::{
    evaluate_pair, summarize_dataset, DatasetSummary, VideoEvaluation, VideoSummary,
};
use dtwin::generation::BackendRegistry;
use dtwin::media::{
    load_clip, load_manifest, safe_path_component, save_clip, write_manifest, BehaviorTag,
    DatasetManifest, ManifestEntry, DEFAULT_FPS,
};
use dtwin::model::VideoClip;
use dtwin::pipeline::{run_batch, RunDiagnostics, RunRecord};
use dtwin::synthworld::{
    make_motion, random_attrs, random_identity, AvatarTrajectory, MIN_RENDER_DIM,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::CliConfig;
use crate::plot::plot_timeline;
use crate::report::{
    write_frame_csv, write_json, write_summary_csv, EvaluationFailure, MissingOutput, ReportBundle,
};
use crate::{CliError, EXIT_OK, EXIT_PARTIAL};

pub const VIDEOS_DIR: &str = "videos";
pub const CACHE_DIR: &str = "cache";
pub const PLOTS_DIR: &str = "plots";
pub const RUN_RECORDS_FILE: &str = "run_records.json";
pub const RUN_DIAGNOSTICS_FILE: &str = "run_diagnostics.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.tsv";

fn open_manifest(path: &Path) -> Result<DatasetManifest, CliError> {
    load_manifest(path).map_err(|e| CliError::Precondition(format!("manifest: {e}")))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::write(path, e))
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub records: Vec<RunRecord>,
    pub records_path: PathBuf,
}

#[derive(Serialize)]
struct RunRecordsFile<'a> {
    config_digest: String,
    records: &'a [RunRecord],
}

/// Runs every manifest entry. Backends and the manifest are checked
/// before anything is written.
pub fn cmd_run(
    config: &CliConfig,
    manifest_path: &Path,
    output_dir: &Path,
) -> Result<RunOutcome, CliError> {
    let registry = BackendRegistry::with_builtin();
    registry.check(&config.pipeline.backends)?;
    let manifest = open_manifest(manifest_path)?;

    create_dir(output_dir)?;
    let mut pipeline = config.pipeline.clone();
    if pipeline.cache_dir.is_none() {
        pipeline.cache_dir = Some(output_dir.join(CACHE_DIR));
    }
    let records = run_batch(
        &manifest,
        &pipeline,
        &registry,
        &output_dir.join(VIDEOS_DIR),
    )?;

    let records_path = output_dir.join(RUN_RECORDS_FILE);
    write_json(
        &records_path,
        &RunRecordsFile {
            config_digest: pipeline.digest(),
            records: &records,
        },
    )?;
    let diagnostics: Vec<&RunDiagnostics> = records.iter().map(|r| &r.diagnostics).collect();
    write_json(&output_dir.join(RUN_DIAGNOSTICS_FILE), &diagnostics)?;

    let exit_code = if records.iter().all(RunRecord::succeeded) {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    };
    Ok(RunOutcome {
        exit_code,
        records,
        records_path,
    })
}

#[derive(Debug, Clone)]
pub struct EvaluateOutcome {
    pub exit_code: i32,
    pub bundle: ReportBundle,
    pub dataset: Option<DatasetSummary>,
}

#[derive(Serialize)]
struct VideoReport<'a> {
    clip_id: &'a str,
    summary: &'a VideoSummary,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    bundle: &'a ReportBundle,
    videos: Vec<VideoReport<'a>>,
    dataset: Option<&'a DatasetSummary>,
}

enum EntryResult {
    Done(VideoEvaluation),
    Missing(MissingOutput),
    Failed(EvaluationFailure),
}

fn evaluate_entry(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    deid_dir: &Path,
    config: &CliConfig,
    registry: &BackendRegistry,
) -> EntryResult {
    let fail = |message: String| {
        EntryResult::Failed(EvaluationFailure {
            clip_id: entry.clip_id.clone(),
            message,
        })
    };
    let deid_path = deid_dir
        .join(VIDEOS_DIR)
        .join(safe_path_component(&entry.clip_id));
    if !deid_path.exists() {
        return EntryResult::Missing(MissingOutput {
            clip_id: entry.clip_id.clone(),
            expected_path: deid_path,
        });
    }
    let source = match load_clip(&manifest.resolve_media(entry), None) {
        Ok(c) => c,
        Err(e) => return fail(format!("source: {e}")),
    };
    let deid = match load_clip(&deid_path, None) {
        Ok(c) => c,
        Err(e) => return fail(format!("de-identified video: {e}")),
    };
    let mut backends = match registry.evaluation_backends(&config.pipeline.backends) {
        Ok(b) => b,
        Err(e) => return fail(e.to_string()),
    };
    match evaluate_pair(&source, &deid, &mut backends) {
        Ok(eval) => EntryResult::Done(eval),
        Err(e) => fail(e.to_string()),
    }
}

/// Evaluates each manifest entry against `deid_dir/videos/<clip_id>`.
/// Entries without an output are listed as missing; the rest are still
/// evaluated.
pub fn cmd_evaluate(
    config: &CliConfig,
    manifest_path: &Path,
    deid_dir: &Path,
    report_dir: &Path,
) -> Result<EvaluateOutcome, CliError> {
    let registry = BackendRegistry::with_builtin();
    registry.check(&config.pipeline.backends)?;
    let manifest = open_manifest(manifest_path)?;

    let results: Vec<EntryResult> = manifest
        .entries
        .par_iter()
        .map(|entry| evaluate_entry(&manifest, entry, deid_dir, config, &registry))
        .collect();

    create_dir(&report_dir.join(VIDEOS_DIR))?;
    create_dir(&report_dir.join(PLOTS_DIR))?;
    let mut bundle = ReportBundle {
        run_records: PathBuf::from(REPORT_FILE),
        ..ReportBundle::default()
    };
    let mut done: Vec<(&str, VideoEvaluation)> = Vec::new();
    for (entry, result) in manifest.entries.iter().zip(results) {
        match result {
            EntryResult::Missing(m) => bundle.missing.push(m),
            EntryResult::Failed(f) => bundle.failures.push(f),
            EntryResult::Done(eval) => done.push((&entry.clip_id, eval)),
        }
    }

    for (clip_id, eval) in &done {
        let name = safe_path_component(clip_id);
        let csv = PathBuf::from(VIDEOS_DIR).join(format!("{name}.csv"));
        write_frame_csv(&report_dir.join(&csv), eval)?;
        bundle.per_video_csvs.push(csv);
        for &family in config.distance.families() {
            let timelines: Vec<_> = eval
                .timelines
                .iter()
                .filter(|t| t.distance == family)
                .cloned()
                .collect();
            let plot = PathBuf::from(PLOTS_DIR).join(format!("{name}_{family}.svg"));
            plot_timeline(&timelines, &report_dir.join(&plot))?;
            bundle.plots.push(plot);
        }
    }

    let summaries: Vec<VideoSummary> = done.iter().map(|(_, e)| e.summary.clone()).collect();
    let dataset = if summaries.is_empty() {
        None
    } else {
        let d = summarize_dataset(&summaries)?;
        write_summary_csv(&report_dir.join(SUMMARY_FILE), &d)?;
        bundle.summary_csv = Some(PathBuf::from(SUMMARY_FILE));
        Some(d)
    };

    write_json(
        &report_dir.join(REPORT_FILE),
        &ReportFile {
            bundle: &bundle,
            videos: done
                .iter()
                .map(|(clip_id, e)| VideoReport {
                    clip_id,
                    summary: &e.summary,
                })
                .collect(),
            dataset: dataset.as_ref(),
        },
    )?;

    let exit_code = if bundle.is_complete() {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    };
    Ok(EvaluateOutcome {
        exit_code,
        bundle,
        dataset,
    })
}

/// Parameters of a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub behaviors: Vec<BehaviorTag>,
    pub identities: usize,
    pub frames: usize,
    pub seed: u64,
    pub dims: (usize, usize),
    pub fps: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            behaviors: BehaviorTag::RECORDED.to_vec(),
            identities: 2,
            frames: 50,
            seed: 0,
            dims: (64, 64),
            fps: DEFAULT_FPS,
        }
    }
}

impl SynthSpec {
    fn check(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Precondition(m));
        if self.identities == 0 {
            return fail("identities must be at least 1".into());
        }
        if self.frames == 0 {
            return fail("frames must be at least 1".into());
        }
        if self.behaviors.is_empty() {
            return fail("at least one behaviour is required".into());
        }
        if self.dims.0 < MIN_RENDER_DIM || self.dims.1 < MIN_RENDER_DIM {
            return fail(format!(
                "frames must be at least {MIN_RENDER_DIM}x{MIN_RENDER_DIM}"
            ));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return fail(format!("fps must be positive, got {}", self.fps));
        }
        Ok(())
    }

    fn subject_seed(&self, identity: usize) -> u64 {
        self.seed
            .wrapping_mul(1_000_003)
            .wrapping_add(identity as u64)
    }

    /// The trajectory of one identity performing one behaviour. All of an
    /// identity's clips share its latent and appearance.
    pub fn trajectory(&self, identity: usize, behavior: BehaviorTag) -> AvatarTrajectory {
        let subject = self.subject_seed(identity);
        let slot = BehaviorTag::RECORDED
            .iter()
            .position(|&b| b == behavior)
            .unwrap_or(4) as u64;
        AvatarTrajectory {
            identity: random_identity(subject),
            motion: make_motion(
                behavior,
                self.frames,
                subject.wrapping_add((slot + 1) << 40),
            ),
            appearance_attrs: random_attrs(subject),
        }
    }

    pub fn clip_id(identity: usize, behavior: BehaviorTag) -> String {
        format!("id{identity:02}_{behavior}")
    }
}

/// Writes `identities × behaviours` clips under `out_dir/clips/` and a
/// manifest at `out_dir/manifest.tsv`, returning the manifest path.
pub fn cmd_synth_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<PathBuf, CliError> {
    spec.check()?;
    let mut entries = Vec::new();
    let mut jobs = Vec::new();
    for identity in 0..spec.identities {
        for &behavior in &spec.behaviors {
            let clip_id = SynthSpec::clip_id(identity, behavior);
            let media_path = PathBuf::from("clips").join(safe_path_component(&clip_id));
            jobs.push((
                identity,
                behavior,
                clip_id.clone(),
                out_dir.join(&media_path),
            ));
            entries.push(ManifestEntry {
                clip_id,
                media_path,
                subject_id: format!("id{identity:02}"),
                behavior_tag: behavior,
            });
        }
    }
    jobs.par_iter()
        .try_for_each(|(identity, behavior, clip_id, path)| {
            let clip: VideoClip = spec
                .trajectory(*identity, *behavior)
                .render(clip_id, spec.fps, spec.dims)
                .map_err(|e| CliError::Precondition(e.to_string()))?;
            save_clip(&clip, path).map_err(CliError::from)
        })?;

    let manifest = DatasetManifest {
        dataset_name: out_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "synthetic".into()),
        entries,
        base_dir: out_dir.to_path_buf(),
    };
    let path = out_dir.join(MANIFEST_FILE);
    write_manifest(&path, &manifest)?;
    Ok(path)
}
