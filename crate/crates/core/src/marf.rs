//! Multi-scale adaptive-switch random forest.
//!
//! The depth axis is split into `K` half-open intervals ending at
//! `[6 m, ∞)`. Forest `k` is trained on a bootstrap biased towards clusters
//! at scale `k` or farther, and a cluster at scale `k` is classified by the
//! mean vote fraction of forests `1..=k`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{feature_stats, ConfidenceReport, FeatureStats, FeatureVector};
use crate::scan::Label;
use crate::seed::{derive_seed, rng_from};
use crate::tree::{TrainParams, Tree, TreeKind, TreeTrainer};

/// The far scale always starts here (meters).
pub const FAR_SCALE_START: f64 = 6.0;

pub const DEFAULT_SCALES: usize = 3;
pub const DEFAULT_TREES_PER_SCALE: usize = 100;
pub const DEFAULT_ALPHA: f64 = 0.6;
pub const DEFAULT_BETA: f64 = 0.5;

/// Attempts per tree at drawing a training set that contains both classes.
const MAX_RESAMPLES: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalePartition {
    boundaries: Vec<f64>,
}

impl ScalePartition {
    /// Boundaries `6 / 2^(K−1−i)` for `i = 1..K−1`: `[3, 6]` for K = 3,
    /// `[1.5, 3, 6]` for K = 4, none for K = 1.
    pub fn new(scales: usize) -> Result<Self> {
        if scales == 0 {
            return Err(Error::invalid("number of scales must be positive"));
        }
        let boundaries = (1..scales)
            .map(|i| FAR_SCALE_START / 2f64.powi((scales - 1 - i) as i32))
            .collect();
        Ok(Self { boundaries })
    }

    pub fn from_boundaries(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.windows(2).any(|w| !(w[0] < w[1])) || boundaries.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::malformed("boundaries", "must be finite, positive and strictly ascending"));
        }
        Ok(Self { boundaries })
    }

    pub fn scales(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Inclusive lower end of scale `k` (1-based).
    pub fn start(&self, k: usize) -> f64 {
        if k <= 1 {
            0.0
        } else {
            self.boundaries[k - 2]
        }
    }

    /// 1-based scale index; a boundary belongs to the upper interval.
    pub fn scale_of(&self, distance: f64) -> usize {
        1 + self.boundaries.iter().take_while(|&&b| b <= distance).count()
    }
}

pub fn make_partition(scales: usize) -> Result<ScalePartition> {
    ScalePartition::new(scales)
}

pub fn scale_of(distance: f64, partition: &ScalePartition) -> usize {
    partition.scale_of(distance)
}

/// Draws `target` row indices with replacement. Rows at scale `k` or beyond
/// are always accepted, nearer rows with probability `alpha`.
pub fn biased_sample_rows<R: Rng>(
    dataset: &[FeatureVector],
    k: usize,
    partition: &ScalePartition,
    alpha: f64,
    target: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("biased sampling needs a non-empty dataset".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let far: Vec<bool> = dataset
        .iter()
        .map(|v| partition.scale_of(v.distance_to_scanner()) >= k)
        .collect();
    if alpha == 0.0 && !far.iter().any(|&f| f) {
        return Err(Error::NonterminatingSampling { scale: k });
    }
    let mut rows = Vec::with_capacity(target);
    while rows.len() < target {
        let i = rng.gen_range(0..dataset.len());
        if far[i] || rng.gen_bool(alpha) {
            rows.push(i);
        }
    }
    Ok(rows)
}

/// Owned variant of [`biased_sample_rows`] with its own seeded RNG.
pub fn biased_sample(
    dataset: &[FeatureVector],
    k: usize,
    partition: &ScalePartition,
    alpha: f64,
    target: usize,
    seed: u64,
) -> Result<Vec<FeatureVector>> {
    let rows = biased_sample_rows(dataset, k, partition, alpha, target, &mut rng_from(seed))?;
    Ok(rows.into_iter().map(|i| dataset[i].clone()).collect())
}

/// One scale's forest.
#[derive(Debug, Clone, PartialEq)]
pub struct Arf {
    pub scale: usize,
    pub trees: Vec<Tree>,
}

impl Arf {
    /// Mean of the trees' binary labels, plus node visits.
    pub fn vote(&self, x: &[f64; crate::features::FEATURE_COUNT]) -> (f64, usize) {
        let mut yes = 0usize;
        let mut visits = 0usize;
        for t in &self.trees {
            let out = t.predict_values(x);
            visits += out.visits;
            if out.label.is_leg() {
                yes += 1;
            }
        }
        (yes as f64 / self.trees.len() as f64, visits)
    }
}

/// Training configuration of a multi-scale forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarfConfig {
    pub scales: usize,
    /// One entry per scale.
    pub trees_per_scale: Vec<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub tree_kind: TreeKind,
    pub params: TrainParams,
    /// Training-set size per tree; `None` = dataset size.
    pub sample_size: Option<usize>,
}

impl Default for MarfConfig {
    fn default() -> Self {
        Self {
            scales: DEFAULT_SCALES,
            trees_per_scale: vec![DEFAULT_TREES_PER_SCALE; DEFAULT_SCALES],
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            tree_kind: TreeKind::AdaptiveSwitch,
            params: TrainParams::default(),
            sample_size: None,
        }
    }
}

impl MarfConfig {
    pub fn with_scales(scales: usize, trees: usize) -> Self {
        Self {
            scales,
            trees_per_scale: vec![trees; scales],
            ..Self::default()
        }
    }

    /// Hard-split bagging with a single scale and plain bootstrap.
    pub fn standard_forest(trees: usize) -> Self {
        Self {
            scales: 1,
            trees_per_scale: vec![trees],
            alpha: 1.0,
            tree_kind: TreeKind::Standard,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales == 0 || self.trees_per_scale.len() != self.scales {
            return Err(Error::invalid(format!(
                "need one tree count per scale ({} scales, {} counts)",
                self.scales,
                self.trees_per_scale.len()
            )));
        }
        if self.trees_per_scale.contains(&0) {
            return Err(Error::invalid("every scale needs at least one tree"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        self.params.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarfModel {
    pub partition: ScalePartition,
    pub arfs: Vec<Arf>,
    pub alpha: f64,
    pub beta: f64,
    pub tree_kind: TreeKind,
    pub params: TrainParams,
    pub stats: FeatureStats,
    pub global_confidence: ConfidenceReport,
    /// Free-form provenance attached by the caller (tool version, config, digests).
    pub provenance: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarfPrediction {
    pub probability: f64,
    pub label: Label,
    /// Forests `1..=consulted` took part.
    pub consulted: usize,
    pub visits: usize,
}

impl MarfModel {
    pub fn scales(&self) -> usize {
        self.partition.scales()
    }

    pub fn tree_count(&self) -> usize {
        self.arfs.iter().map(|a| a.trees.len()).sum()
    }

    pub fn predict(&self, x: &FeatureVector) -> MarfPrediction {
        self.predict_values(&x.values)
    }

    pub fn predict_values(&self, x: &[f64; crate::features::FEATURE_COUNT]) -> MarfPrediction {
        let distance = x[crate::features::FeatureId::DistanceToScanner.index()].max(0.0);
        let k = self.partition.scale_of(distance);
        let mut sum = 0.0;
        let mut visits = 0;
        for arf in &self.arfs[..k] {
            let (v, n) = arf.vote(x);
            sum += v;
            visits += n;
        }
        let probability = sum / k as f64;
        MarfPrediction {
            probability,
            label: if probability > self.beta { Label::Leg } else { Label::NonLeg },
            consulted: k,
            visits,
        }
    }

    /// Fused probability only.
    pub fn probability(&self, x: &FeatureVector) -> f64 {
        self.predict(x).probability
    }
}

pub fn predict_marf(model: &MarfModel, x: &FeatureVector) -> (f64, Label) {
    let p = model.predict(x);
    (p.probability, p.label)
}

/// Rows drawn for one tree during training.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleLog {
    pub scale: usize,
    pub tree: usize,
    pub attempt: u64,
    pub rows: Vec<usize>,
}

pub fn train_marf(dataset: &[FeatureVector], config: &MarfConfig) -> Result<MarfModel> {
    train_marf_logged(dataset, config).map(|(m, _)| m)
}

/// Trains every tree (in parallel on the current rayon pool) and returns the
/// model with the rows each tree was trained on.
pub fn train_marf_logged(dataset: &[FeatureVector], config: &MarfConfig) -> Result<(MarfModel, Vec<SampleLog>)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("training dataset has no clusters".into()));
    }
    let partition = ScalePartition::new(config.scales)?;
    let global_confidence = ConfidenceReport::from_labeled(dataset, config.params.confidence_center)?;
    if dataset.iter().any(|v| v.label.is_none()) {
        return Err(Error::invalid("training dataset contains unlabelled clusters"));
    }
    let stats = feature_stats(dataset)?;
    let target = config.sample_size.unwrap_or(dataset.len()).max(1);
    let master = config.params.seed;

    let jobs: Vec<(usize, usize)> = config
        .trees_per_scale
        .iter()
        .enumerate()
        .flat_map(|(k, &t)| (0..t).map(move |i| (k + 1, i)))
        .collect();

    let trained: Vec<Result<(Tree, SampleLog)>> = jobs
        .par_iter()
        .map(|&(k, t)| {
            for attempt in 0..MAX_RESAMPLES {
                let mut rng = rng_from(derive_seed(master, &[k as u64, t as u64, attempt]));
                let rows = biased_sample_rows(dataset, k, &partition, config.alpha, target, &mut rng)?;
                let has_pos = rows.iter().any(|&r| dataset[r].is_leg());
                let has_neg = rows.iter().any(|&r| !dataset[r].is_leg());
                if !(has_pos && has_neg) {
                    continue;
                }
                let params = TrainParams {
                    seed: derive_seed(master, &[k as u64, t as u64, attempt, 0x7472_6565]),
                    ..config.params.clone()
                };
                let (tree, _) = TreeTrainer::new(config.tree_kind, &params, &global_confidence, &stats)
                    .train_rows(dataset, &rows)?;
                return Ok((tree, SampleLog { scale: k, tree: t, attempt, rows }));
            }
            Err(Error::invalid(format!(
                "scale {k} tree {t}: {MAX_RESAMPLES} bootstrap draws were all single-class"
            )))
        })
        .collect();

    let mut arfs: Vec<Arf> = (1..=config.scales).map(|k| Arf { scale: k, trees: Vec::new() }).collect();
    let mut logs = Vec::with_capacity(jobs.len());
    for r in trained {
        let (tree, log) = r?;
        arfs[log.scale - 1].trees.push(tree);
        logs.push(log);
    }

    Ok((
        MarfModel {
            partition,
            arfs,
            alpha: config.alpha,
            beta: config.beta,
            tree_kind: config.tree_kind,
            params: config.params.clone(),
            stats,
            global_confidence,
            provenance: None,
        },
        logs,
    ))
}
