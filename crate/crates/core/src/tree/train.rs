use rand::seq::index::sample as sample_indices;
use rand_chacha::ChaCha8Rng;

use super::split::{best_hard_threshold, best_soft_threshold, class_mass, dichotomous_weights, impurity_mass, sort_entries, Entry};
use super::{Node, Tree, TrainParams, TreeKind};
use crate::error::{Error, Result};
use crate::features::{confidence_of, conflict_check, ConfidenceReport, FeatureId, FeatureStats, FeatureVector, FEATURE_COUNT};
use crate::scan::Label;
use crate::seed::rng_from;

/// What the trainer decided at one internal node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDecision {
    pub node: u32,
    pub depth: u32,
    pub samples: usize,
    pub feature: FeatureId,
    pub global_confidence: f64,
    /// Only computed by the adaptive-switch trainer.
    pub local_confidence: Option<f64>,
    pub conflict: bool,
    pub sigma: f64,
    /// Relative impurity reduction of the soft split, when one was scored.
    pub soft_gain: Option<f64>,
    pub dichotomous: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub decisions: Vec<NodeDecision>,
}

/// Trains one tree of a given [`TreeKind`] on rows of a shared dataset.
#[derive(Debug, Clone, Copy)]
pub struct TreeTrainer<'a> {
    pub kind: TreeKind,
    pub params: &'a TrainParams,
    pub global_confidence: &'a ConfidenceReport,
    pub stats: &'a FeatureStats,
}

impl<'a> TreeTrainer<'a> {
    pub fn new(kind: TreeKind, params: &'a TrainParams, global_confidence: &'a ConfidenceReport, stats: &'a FeatureStats) -> Self {
        Self { kind, params, global_confidence, stats }
    }

    /// Trains on `data[rows]` (rows may repeat). The RNG is seeded from
    /// `params.seed`.
    pub fn train_rows(&self, data: &[FeatureVector], rows: &[usize]) -> Result<(Tree, TrainLog)> {
        self.params.validate()?;
        if rows.is_empty() {
            return Err(Error::EmptyDataset("tree training set is empty".into()));
        }
        let mut legs = Vec::with_capacity(data.len());
        for (i, v) in data.iter().enumerate() {
            match v.label {
                Some(l) => legs.push(l.is_leg()),
                None => return Err(Error::invalid(format!("training vector {i} has no label"))),
            }
        }
        let has_pos = rows.iter().any(|&r| legs[r]);
        let has_neg = rows.iter().any(|&r| !legs[r]);
        if !(has_pos && has_neg) {
            return Err(Error::invalid("training set must contain both leg and non-leg clusters"));
        }
        let mut b = Builder {
            trainer: *self,
            data,
            legs,
            rng: rng_from(self.params.seed),
            nodes: Vec::new(),
            log: TrainLog::default(),
            entries: Vec::new(),
        };
        let samples: Vec<(u32, f64)> = rows.iter().map(|&r| (r as u32, 1.0)).collect();
        b.build(samples, 0, Label::NonLeg);
        Ok((Tree { nodes: b.nodes }, b.log))
    }
}

/// Adaptive-switch tree on a whole training set.
pub fn train_tree(
    training: &[FeatureVector],
    global_confidence: &ConfidenceReport,
    stats: &FeatureStats,
    params: &TrainParams,
) -> Result<Tree> {
    let rows: Vec<usize> = (0..training.len()).collect();
    TreeTrainer::new(TreeKind::AdaptiveSwitch, params, global_confidence, stats)
        .train_rows(training, &rows)
        .map(|(t, _)| t)
}

/// Standard (hard-split) baseline tree.
pub fn train_srf_tree(training: &[FeatureVector], stats: &FeatureStats, params: &TrainParams) -> Result<Tree> {
    let unused = ConfidenceReport { c: [0.0; FEATURE_COUNT], positive_count: 0, negative_count: 0 };
    let rows: Vec<usize> = (0..training.len()).collect();
    TreeTrainer::new(TreeKind::Standard, params, &unused, stats)
        .train_rows(training, &rows)
        .map(|(t, _)| t)
}

/// Probabilistic baseline tree: every node soft-splits, weights are not
/// re-balanced and samples below `p_min` are dropped from a branch.
pub fn train_prf_tree(training: &[FeatureVector], stats: &FeatureStats, params: &TrainParams, p_min: f64) -> Result<Tree> {
    let unused = ConfidenceReport { c: [0.0; FEATURE_COUNT], positive_count: 0, negative_count: 0 };
    let rows: Vec<usize> = (0..training.len()).collect();
    TreeTrainer::new(TreeKind::probabilistic(p_min), params, &unused, stats)
        .train_rows(training, &rows)
        .map(|(t, _)| t)
}

struct Builder<'a> {
    trainer: TreeTrainer<'a>,
    data: &'a [FeatureVector],
    legs: Vec<bool>,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    log: TrainLog,
    entries: Vec<Entry>,
}

impl Builder<'_> {
    fn value(&self, row: u32, f: usize) -> f64 {
        self.data[row as usize].values[f]
    }

    fn leaf(&mut self, slot: usize, label: Label, depth: u32) -> u32 {
        self.nodes[slot] = Node::Leaf { label, depth };
        slot as u32
    }

    fn drop_threshold(&self) -> f64 {
        match self.trainer.kind {
            TreeKind::Probabilistic { p_min, .. } => p_min,
            _ => 0.0,
        }
    }

    /// Builds the subtree for `samples` (row, carried weight) and returns its
    /// node index.
    fn build(&mut self, mut samples: Vec<(u32, f64)>, depth: u32, fallback: Label) -> u32 {
        let params = self.trainer.params;
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { label: fallback, depth });
        if samples.is_empty() {
            return self.leaf(slot, fallback, depth);
        }

        let n = samples.len();
        let (pos, neg) = class_mass(samples.iter().map(|&(r, w)| (w, self.legs[r as usize])));
        let incoming = pos + neg;
        let dominant = if pos > neg { Label::Leg } else { Label::NonLeg };
        let (pos, neg) = if self.trainer.kind.rebalances() && incoming > 0.0 {
            let k = n as f64 / incoming;
            for s in &mut samples {
                s.1 *= k;
            }
            (pos * k, neg * k)
        } else {
            (pos, neg)
        };

        if n < params.min_samples
            || depth as usize >= params.max_depth
            || impurity_mass(pos, neg) < params.gini_epsilon
            || incoming < params.min_weight_fraction * n as f64
        {
            return self.leaf(slot, dominant, depth);
        }

        // Candidate features: drawn among those that vary at this node.
        let varying: Vec<usize> = (0..FEATURE_COUNT)
            .filter(|&f| {
                let first = self.value(samples[0].0, f);
                samples.iter().any(|&(r, _)| self.value(r, f) != first)
            })
            .collect();
        if varying.is_empty() {
            return self.leaf(slot, dominant, depth);
        }
        let amount = params.candidate_count.min(varying.len());
        let mut candidates: Vec<usize> = sample_indices(&mut self.rng, varying.len(), amount)
            .into_iter()
            .map(|i| varying[i])
            .collect();
        candidates.sort_unstable();

        let mut best: Option<(usize, f64, f64)> = None;
        for &f in &candidates {
            self.fill_entries(&samples, f);
            if let Some((tau, score)) = best_hard_threshold(&self.entries) {
                if best.is_none_or(|(_, _, b)| score < b) {
                    best = Some((f, tau, score));
                }
            }
        }
        let Some((f, mut tau, _)) = best else {
            return self.leaf(slot, dominant, depth);
        };
        let feature = FeatureId::ALL[f];
        let sigma = self.trainer.stats.variance[f].max(0.0).sqrt();
        let global_c = self.trainer.global_confidence.c[f];

        let (local_c, conflict) = match self.trainer.kind {
            TreeKind::AdaptiveSwitch => {
                let side = |leg: bool| -> Vec<f64> {
                    samples.iter().filter(|&&(r, _)| self.legs[r as usize] == leg).map(|&(r, _)| self.value(r, f)).collect()
                };
                let (pv, nv) = (side(true), side(false));
                let local = confidence_of(&pv, &nv, params.confidence_center);
                (Some(local), conflict_check(global_c, local, params.epsilon))
            }
            TreeKind::Standard => (None, false),
            TreeKind::Probabilistic { .. } => (None, true),
        };
        let mut dichotomous = conflict && sigma > 0.0 && sigma.is_finite();
        let mut soft_gain = None;
        if dichotomous {
            self.fill_entries(&samples, f);
            if let Some((t, score)) = best_soft_threshold(&self.entries, sigma, params.soft_threshold_budget) {
                let parent = impurity_mass(pos, neg);
                let gain = if parent > 0.0 { 1.0 - score / parent } else { 0.0 };
                soft_gain = Some(gain);
                if matches!(self.trainer.kind, TreeKind::AdaptiveSwitch) && params.min_soft_gain > 0.0 && gain < params.min_soft_gain {
                    dichotomous = false;
                } else {
                    tau = t;
                }
            }
        }
        self.log.decisions.push(NodeDecision {
            node: slot as u32,
            depth,
            samples: n,
            feature,
            global_confidence: global_c,
            local_confidence: local_c,
            conflict,
            sigma,
            soft_gain,
            dichotomous,
        });

        let (left_samples, right_samples) = if dichotomous {
            let floor = self.drop_threshold();
            let mut left = Vec::with_capacity(n);
            let mut right = Vec::with_capacity(n);
            for &(r, w) in &samples {
                let (wl, wr) = dichotomous_weights(self.value(r, f), tau, sigma);
                let (a, b) = (w * wl, w * wr);
                if a > 0.0 && a >= floor {
                    left.push((r, a));
                }
                if b > 0.0 && b >= floor {
                    right.push((r, b));
                }
            }
            (left, right)
        } else {
            samples.iter().partition(|&&(r, _)| self.value(r, f) < tau)
        };
        drop(samples);

        let left = self.build(left_samples, depth + 1, dominant);
        let right = self.build(right_samples, depth + 1, dominant);
        self.nodes[slot] = if dichotomous {
            Node::Dichotomous { feature, threshold: tau, sigma, left, right }
        } else {
            Node::Regular { feature, threshold: tau, left, right }
        };
        slot as u32
    }

    fn fill_entries(&mut self, samples: &[(u32, f64)], f: usize) {
        self.entries.clear();
        for &(r, w) in samples {
            self.entries.push(Entry {
                x: self.data[r as usize].values[f],
                w,
                leg: self.legs[r as usize],
            });
        }
        sort_entries(&mut self.entries);
    }
}
