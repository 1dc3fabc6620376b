//! Flat key-value configuration. Each key can come from the TOML file or
//! from the command-line flag of the same name; flags win.
//!
//! ```toml
//! seed = 7
//! dilation_px = 3
//! inpainter = "synthetic"
//! distance = "both"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use dtwin::model::DistanceMetric;
use dtwin::pipeline::PipelineConfig;
use dtwin::source_prep::DilationPolicy;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Consulted for the cache root when `--cache-dir` is absent.
pub const CACHE_DIR_ENV: &str = "DTWIN_CACHE_DIR";

/// Distance families to plot. Both are always computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DistanceChoice {
    Cosine,
    Euclidean,
    #[default]
    Both,
}

impl DistanceChoice {
    pub fn families(self) -> &'static [DistanceMetric] {
        match self {
            Self::Cosine => &[DistanceMetric::Cosine],
            Self::Euclidean => &[DistanceMetric::Euclidean],
            Self::Both => &DistanceMetric::ALL,
        }
    }
}

/// One layer of settings. Used for both the file and the flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub prompt_prefix: Option<String>,
    pub max_retries: Option<u32>,
    pub dilation_px: Option<u32>,
    pub dilation_fraction: Option<f64>,
    pub cache_dir: Option<PathBuf>,
    pub evaluate: Option<bool>,
    pub distance: Option<DistanceChoice>,
    pub captioner: Option<String>,
    pub inpainter: Option<String>,
    pub reenactor: Option<String>,
    pub pose_detector: Option<String>,
    pub contour_detector: Option<String>,
    pub face_cropper: Option<String>,
    pub embedder: Option<String>,
}

pub type Overrides = FileConfig;

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn check(&self) -> Result<(), CliError> {
        if self.dilation_px.is_some() && self.dilation_fraction.is_some() {
            return Err(CliError::Config(
                "dilation_px and dilation_fraction are mutually exclusive".into(),
            ));
        }
        if let Some(f) = self.dilation_fraction {
            if !f.is_finite() || f < 0.0 {
                return Err(CliError::Config(format!(
                    "dilation_fraction must be >= 0, got {f}"
                )));
            }
        }
        Ok(())
    }

    /// `other` on top of `self`. A dilation setting in `other` replaces
    /// either dilation key in `self`.
    pub fn layered(&self, other: &FileConfig) -> FileConfig {
        let dilation_set = other.dilation_px.is_some() || other.dilation_fraction.is_some();
        macro_rules! pick {
            ($f:ident) => {
                other.$f.clone().or_else(|| self.$f.clone())
            };
        }
        FileConfig {
            seed: pick!(seed),
            prompt_prefix: pick!(prompt_prefix),
            max_retries: pick!(max_retries),
            dilation_px: if dilation_set {
                other.dilation_px
            } else {
                self.dilation_px
            },
            dilation_fraction: if dilation_set {
                other.dilation_fraction
            } else {
                self.dilation_fraction
            },
            cache_dir: pick!(cache_dir),
            evaluate: pick!(evaluate),
            distance: pick!(distance),
            captioner: pick!(captioner),
            inpainter: pick!(inpainter),
            reenactor: pick!(reenactor),
            pose_detector: pick!(pose_detector),
            contour_detector: pick!(contour_detector),
            face_cropper: pick!(face_cropper),
            embedder: pick!(embedder),
        }
    }
}

/// Resolved settings for one invocation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CliConfig {
    pub pipeline: PipelineConfig,
    pub distance: DistanceChoice,
}

impl CliConfig {
    /// Defaults, then the file at `path`, then `overrides`.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        overrides.check()?;
        let file = match path {
            Some(p) => {
                let f = FileConfig::load(p)?;
                f.check()?;
                f
            }
            None => FileConfig::default(),
        };
        Ok(Self::from_layer(&file.layered(overrides)))
    }

    pub fn from_layer(layer: &FileConfig) -> Self {
        let mut pipeline = PipelineConfig::default();
        let p = &mut pipeline.params;
        if let Some(s) = layer.seed {
            p.seed = s;
        }
        if let Some(prefix) = &layer.prompt_prefix {
            p.prompt_prefix = Some(prefix.clone());
        }
        if let Some(n) = layer.max_retries {
            p.max_retries = n;
        }
        if let Some(px) = layer.dilation_px {
            pipeline.dilation = DilationPolicy::Fixed(px);
        } else if let Some(f) = layer.dilation_fraction {
            pipeline.dilation = DilationPolicy::FaceDiagonalFraction(f);
        }
        pipeline.cache_dir = layer.cache_dir.clone();
        pipeline.evaluate = layer.evaluate.unwrap_or(false);
        let b = &mut pipeline.backends;
        for (slot, value) in [
            (&mut b.captioner, &layer.captioner),
            (&mut b.inpainter, &layer.inpainter),
            (&mut b.reenactor, &layer.reenactor),
            (&mut b.pose_detector, &layer.pose_detector),
            (&mut b.contour_detector, &layer.contour_detector),
            (&mut b.face_cropper, &layer.face_cropper),
            (&mut b.embedder, &layer.embedder),
        ] {
            if let Some(v) = value {
                *slot = v.clone();
            }
        }
        Self {
            pipeline,
            distance: layer.distance.unwrap_or_default(),
        }
    }
}
