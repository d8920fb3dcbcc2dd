//! Command-line surface and effective configuration.
//!
//! Hyperparameters resolve as: flag, then `--config` file, then default.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use marf::features::ConfidenceCenter;
use marf::marf::{DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_SCALES, DEFAULT_TREES_PER_SCALE};
use marf::scan::DEFAULT_JUMP_THRESHOLD;
use marf::tree::{DEFAULT_GINI_EPSILON, DEFAULT_MIN_SOFT_GAIN, DEFAULT_PRF_P_MIN};
use marf::{MarfConfig, TrainParams, TreeKind};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "marf", version, about = "Leg detection in 2D laser scans with multi-scale adaptive-switch random forests")]
#[command(arg_required_else_help = true, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub hyper: HyperArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Marf,
    Srf,
    Prf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterArg {
    PositiveMean,
    OwnClassMean,
}

impl From<CenterArg> for ConfidenceCenter {
    fn from(c: CenterArg) -> Self {
        match c {
            CenterArg::PositiveMean => ConfidenceCenter::PositiveMean,
            CenterArg::OwnClassMean => ConfidenceCenter::OwnClassMean,
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct HyperArgs {
    /// TOML file with hyperparameters (kebab-case keys)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Suppress progress messages
    #[arg(long, short, global = true)]
    pub quiet: bool,
    /// Worker threads for training and feature extraction
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of distance scales (K)
    #[arg(long = "scales", short = 'K', global = true)]
    pub scales: Option<usize>,
    #[arg(long, global = true)]
    pub trees_per_scale: Option<usize>,
    /// Conflict threshold; accepts inf / -inf
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub max_depth: Option<usize>,
    #[arg(long, global = true)]
    pub min_samples: Option<usize>,
    #[arg(long, global = true)]
    pub gini_epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub min_soft_gain: Option<f64>,
    /// Jump-distance clustering threshold in meters
    #[arg(long, global = true)]
    pub jump_threshold: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub confidence_center: Option<CenterArg>,
    #[arg(long, global = true)]
    pub prf_p_min: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub model_kind: Option<ModelKind>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render random rooms into a scan dataset
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        rooms: usize,
        #[arg(long, default_value_t = 20)]
        frames: usize,
        #[arg(long, default_value_t = 1080)]
        beams: usize,
        #[arg(long, default_value_t = 0.01)]
        noise_sigma: f64,
    },
    /// Cluster and label scans, then extract one feature row per cluster
    Features {
        #[arg(long)]
        scans: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from a feature dataset
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-cluster probabilities and labels
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Confusion counts, precision/recall and a PR curve
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Directory receiving metrics.json and pr_curve.csv
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Per-stage latency of cluster, features and predict
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scans: PathBuf,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Feature error distributions under injected range noise
    NoiseStudy {
        #[arg(long)]
        out: PathBuf,
        /// Scene description (JSON); a random room is used when absent
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.01")]
        sigmas: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        frames: usize,
        /// Ignore clusters with fewer points
        #[arg(long, default_value_t = 1)]
        min_points: usize,
    },
    /// Leaf count, depth and node-kind statistics of a model
    TreeStats {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Hyperparameters as they may appear in a config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    threads: Option<usize>,
    seed: Option<u64>,
    #[serde(alias = "K")]
    scales: Option<usize>,
    trees_per_scale: Option<usize>,
    #[serde(default, deserialize_with = "opt_float_or_inf")]
    epsilon: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    max_depth: Option<usize>,
    min_samples: Option<usize>,
    gini_epsilon: Option<f64>,
    min_soft_gain: Option<f64>,
    jump_threshold: Option<f64>,
    confidence_center: Option<CenterArg>,
    prf_p_min: Option<f64>,
    model_kind: Option<ModelKind>,
}

fn opt_float_or_inf<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    marf::model_io::float_or_inf::deserialize(d).map(Some)
}

/// The configuration a run actually used; echoed into every artifact.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Effective {
    pub seed: u64,
    pub scales: usize,
    pub trees_per_scale: usize,
    #[serde(with = "marf::model_io::float_or_inf")]
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub max_depth: usize,
    pub min_samples: usize,
    pub gini_epsilon: f64,
    pub min_soft_gain: f64,
    pub jump_threshold: f64,
    pub confidence_center: CenterArg,
    pub prf_p_min: f64,
    pub model_kind: ModelKind,
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for Effective {
    fn default() -> Self {
        let p = TrainParams::default();
        Self {
            seed: 0,
            scales: DEFAULT_SCALES,
            trees_per_scale: DEFAULT_TREES_PER_SCALE,
            epsilon: p.epsilon,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            max_depth: p.max_depth,
            min_samples: p.min_samples,
            gini_epsilon: DEFAULT_GINI_EPSILON,
            min_soft_gain: DEFAULT_MIN_SOFT_GAIN,
            jump_threshold: DEFAULT_JUMP_THRESHOLD,
            confidence_center: CenterArg::PositiveMean,
            prf_p_min: DEFAULT_PRF_P_MIN,
            model_kind: ModelKind::Marf,
            threads: None,
        }
    }
}

fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("--config {}: {}", path.display(), e.message())))
}

macro_rules! pick {
    ($out:ident, $flags:ident, $file:ident, $($field:ident),*) => {
        $( if let Some(v) = $flags.$field.or($file.$field) { $out.$field = v; } )*
    };
}

impl Effective {
    pub fn resolve(flags: &HyperArgs) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(p) => load_file(p)?,
            None => FileConfig::default(),
        };
        let mut e = Effective::default();
        pick!(
            e, flags, file, seed, scales, trees_per_scale, epsilon, alpha, beta, max_depth, min_samples, gini_epsilon,
            min_soft_gain, jump_threshold, confidence_center, prf_p_min, model_kind
        );
        e.threads = flags.threads.or(file.threads);
        e.check()?;
        Ok(e)
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |flag: &str, why: &str| Err(CliError::Usage(format!("--{flag}: {why}")));
        if self.scales == 0 {
            return bad("scales", "must be at least 1");
        }
        if self.trees_per_scale == 0 {
            return bad("trees-per-scale", "must be at least 1");
        }
        if self.epsilon.is_nan() {
            return bad("epsilon", "must be a number or inf");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha", "must lie in [0, 1]");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta", "must lie in (0, 1)");
        }
        if self.max_depth == 0 || self.min_samples == 0 {
            return bad("max-depth/min-samples", "must be at least 1");
        }
        if self.gini_epsilon.is_nan() || self.gini_epsilon < 0.0 {
            return bad("gini-epsilon", "must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.min_soft_gain) {
            return bad("min-soft-gain", "must lie in [0, 1]");
        }
        if !(self.jump_threshold > 0.0 && self.jump_threshold.is_finite()) {
            return bad("jump-threshold", "must be a positive number of meters");
        }
        if !(0.0..1.0).contains(&self.prf_p_min) {
            return bad("prf-p-min", "must lie in [0, 1)");
        }
        if self.threads == Some(0) {
            return bad("threads", "must be at least 1");
        }
        Ok(())
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            epsilon: self.epsilon,
            max_depth: self.max_depth,
            min_samples: self.min_samples,
            gini_epsilon: self.gini_epsilon,
            min_soft_gain: self.min_soft_gain,
            confidence_center: self.confidence_center.into(),
            seed: self.seed,
            ..TrainParams::default()
        }
    }

    /// Baselines get the same total tree budget as the multi-scale model.
    pub fn marf_config(&self) -> MarfConfig {
        let params = self.train_params();
        let total = self.scales * self.trees_per_scale;
        match self.model_kind {
            ModelKind::Marf => MarfConfig {
                scales: self.scales,
                trees_per_scale: vec![self.trees_per_scale; self.scales],
                alpha: self.alpha,
                beta: self.beta,
                params,
                ..MarfConfig::default()
            },
            ModelKind::Srf => MarfConfig { beta: self.beta, params, ..MarfConfig::standard_forest(total) },
            ModelKind::Prf => MarfConfig {
                beta: self.beta,
                params,
                tree_kind: TreeKind::Probabilistic { p_min: self.prf_p_min, rebalance: false },
                ..MarfConfig::standard_forest(total)
            },
        }
    }
}
