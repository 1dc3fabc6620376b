use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dtwin::media::BehaviorTag;
use dtwin_cli::{
    cmd_evaluate, cmd_run, cmd_synth_dataset, CliConfig, CliError, DistanceChoice, Overrides,
    SynthSpec, CACHE_DIR_ENV, EXIT_OK,
};

/// Face de-identification for video: run, evaluate, and generate
/// synthetic test data.
#[derive(Parser, Debug)]
#[command(name = "dtwin", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalFlags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalFlags {
    /// Flat TOML file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact cache root.
    #[arg(long, global = true, env = CACHE_DIR_ENV)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Text prepended to the generated caption.
    #[arg(long, global = true)]
    prompt_prefix: Option<String>,
    #[arg(long, global = true)]
    max_retries: Option<u32>,
    /// Fixed mask dilation in pixels.
    #[arg(long, global = true, conflicts_with = "dilation_fraction")]
    dilation_px: Option<u32>,
    /// Mask dilation as a fraction of the face diagonal.
    #[arg(long, global = true)]
    dilation_fraction: Option<f64>,
    /// Distance family to plot.
    #[arg(long, global = true, value_enum)]
    distance: Option<DistanceChoice>,
    #[arg(long, global = true)]
    captioner: Option<String>,
    #[arg(long, global = true)]
    inpainter: Option<String>,
    #[arg(long, global = true)]
    reenactor: Option<String>,
    #[arg(long, global = true)]
    pose_detector: Option<String>,
    #[arg(long, global = true)]
    contour_detector: Option<String>,
    #[arg(long, global = true)]
    face_cropper: Option<String>,
    #[arg(long, global = true)]
    embedder: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// De-identify every clip of a manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Also store per-clip metrics in the run records.
        #[arg(long)]
        evaluate: bool,
    },
    /// Compare de-identified outputs with their sources.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory of a previous `run`.
        #[arg(long)]
        deid_dir: PathBuf,
        #[arg(long)]
        report_dir: PathBuf,
    },
    /// Render a synthetic dataset and its manifest.
    SynthDataset {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        identities: usize,
        #[arg(long, default_value_t = 50)]
        frames: usize,
        /// Comma-separated behaviour tags.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "gaze_variation,expression_variation,speech_head_motion,rapid_pose_change"
        )]
        behaviors: Vec<BehaviorTag>,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 25.0)]
        fps: f64,
    },
}

impl GlobalFlags {
    fn overrides(&self, evaluate: Option<bool>) -> Overrides {
        Overrides {
            seed: self.seed,
            prompt_prefix: self.prompt_prefix.clone(),
            max_retries: self.max_retries,
            dilation_px: self.dilation_px,
            dilation_fraction: self.dilation_fraction,
            cache_dir: self.cache_dir.clone(),
            evaluate,
            distance: self.distance,
            captioner: self.captioner.clone(),
            inpainter: self.inpainter.clone(),
            reenactor: self.reenactor.clone(),
            pose_detector: self.pose_detector.clone(),
            contour_detector: self.contour_detector.clone(),
            face_cropper: self.face_cropper.clone(),
            embedder: self.embedder.clone(),
        }
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let evaluate = match &cli.command {
        Command::Run { evaluate: true, .. } => Some(true),
        _ => None,
    };
    let config = CliConfig::load(
        cli.global.config.as_deref(),
        &cli.global.overrides(evaluate),
    )?;
    match cli.command {
        Command::Run {
            manifest, output, ..
        } => {
            let out = cmd_run(&config, &manifest, &output)?;
            let failed = out.records.iter().filter(|r| !r.succeeded()).count();
            for r in out.records.iter().filter(|r| !r.succeeded()) {
                if let Some((stage, kind, msg)) = r.failure() {
                    eprintln!("{}: {} failed ({kind}): {msg}", r.clip_id, stage.as_str());
                }
            }
            println!(
                "{} clips, {} failed; records in {}",
                out.records.len(),
                failed,
                out.records_path.display()
            );
            Ok(out.exit_code)
        }
        Command::Evaluate {
            manifest,
            deid_dir,
            report_dir,
        } => {
            let out = cmd_evaluate(&config, &manifest, &deid_dir, &report_dir)?;
            for m in &out.bundle.missing {
                eprintln!(
                    "{}: missing output {}",
                    m.clip_id,
                    m.expected_path.display()
                );
            }
            for f in &out.bundle.failures {
                eprintln!("{}: {}", f.clip_id, f.message);
            }
            println!(
                "{} videos evaluated, {} missing, {} failed; report in {}",
                out.bundle.per_video_csvs.len(),
                out.bundle.missing.len(),
                out.bundle.failures.len(),
                report_dir.display()
            );
            Ok(out.exit_code)
        }
        Command::SynthDataset {
            out,
            identities,
            frames,
            behaviors,
            width,
            height,
            fps,
        } => {
            let spec = SynthSpec {
                behaviors,
                identities,
                frames,
                seed: config.pipeline.params.seed,
                dims: (width, height),
                fps,
            };
            let path = cmd_synth_dataset(&spec, &out)?;
            println!("manifest written to {}", path.display());
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
