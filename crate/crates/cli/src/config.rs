use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use hedonic_core::dino::DinoConfig;
use hedonic_core::tabular::{PipelineOptions, SplitRatios, WinsorizeSpec, DEFAULT_SPLIT_SEED};

/// Everything a run depends on. A copy is written next to the outputs so
/// the run can be repeated with `--config <run dir>/run_config.toml`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub preset: String,
    pub caches: Vec<PathBuf>,
    pub seed: u64,
    pub alpha_grid: String,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub split: SplitRatios,
    pub winsorize: WinsorizeSpec,
    pub dino: DinoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            images: None,
            weights: None,
            preset: "vit-s/16".into(),
            caches: Vec::new(),
            seed: DEFAULT_SPLIT_SEED,
            alpha_grid: "default".into(),
            out: PathBuf::from("runs"),
            threads: None,
            split: SplitRatios::default(),
            winsorize: WinsorizeSpec::default(),
            dino: DinoConfig::toy(),
        }
    }
}

/// Flags shared by every subcommand. Each one overrides the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// TOML run configuration; flags take precedence over it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Listing manifest (JSON array of properties)
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Directory of PPM/PNG images for pretraining
    #[arg(long, global = true)]
    pub images: Option<PathBuf>,
    /// VHW1 weight file
    #[arg(long, global = true)]
    pub weights: Option<PathBuf>,
    /// Backbone preset: vit-s/16, vit-s/8, vit-b/16, vit-b/8 or vit-mini/8
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// VHFC1 feature cache to fuse (repeatable)
    #[arg(long = "cache", global = true)]
    pub caches: Vec<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Train/validation/test ratios, e.g. 0.70,0.15,0.15
    #[arg(long, global = true)]
    pub split: Option<String>,
    /// default, log:lo:hi:n, or a comma-separated list
    #[arg(long, global = true)]
    pub alpha_grid: Option<String>,
    /// Percentile limits, e.g. 1,99 or 1,99:sale_price,lot_area
    #[arg(long, global = true)]
    pub winsorize: Option<String>,
    /// Parent directory of run directories
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker thread cap
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Pretraining steps
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Pretraining batch size
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    /// Pretraining learning rate
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut c = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if o.manifest.is_some() {
            c.manifest = o.manifest.clone();
        }
        if o.images.is_some() {
            c.images = o.images.clone();
        }
        if o.weights.is_some() {
            c.weights = o.weights.clone();
        }
        if let Some(p) = &o.preset {
            c.preset = p.clone();
        }
        if !o.caches.is_empty() {
            c.caches = o.caches.clone();
        }
        if let Some(s) = o.seed {
            c.seed = s;
        }
        if let Some(s) = &o.split {
            c.split = SplitRatios::parse(s)?;
        }
        if let Some(g) = &o.alpha_grid {
            c.alpha_grid = g.clone();
        }
        if let Some(w) = &o.winsorize {
            c.winsorize = WinsorizeSpec::parse(w)?;
        }
        if let Some(out) = &o.out {
            c.out = out.clone();
        }
        if o.threads.is_some() {
            c.threads = o.threads;
        }
        if let Some(s) = o.steps {
            c.dino.steps = s;
        }
        if let Some(b) = o.batch_size {
            c.dino.batch_size = b;
        }
        if let Some(lr) = o.learning_rate {
            c.dino.learning_rate = lr;
        }
        c.split.validate()?;
        c.winsorize.validate()?;
        c.dino.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing run configuration")
    }

    pub fn pipeline(&self) -> PipelineOptions {
        PipelineOptions { winsorize: self.winsorize.clone(), split: self.split, seed: self.seed }
    }
}
