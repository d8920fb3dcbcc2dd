//! Decision trees with regular (hard), dichotomous (Gaussian-CDF weighted)
//! and leaf nodes, plus the standard and probabilistic baselines.
//!
//! Trees are stored as a flat pre-order node array with the root at index 0;
//! children always have larger indices than their parent.

mod split;
mod train;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ConfidenceCenter, FeatureId, FeatureVector, FEATURE_COUNT};
use crate::scan::Label;

pub use split::{
    dichotomous_weights, find_best_dichotomous_threshold, find_best_dichotomous_threshold_with_budget,
    find_best_split, gini, normal_cdf, SplitChoice, WeightedSample,
};
pub use train::{
    train_prf_tree, train_srf_tree, train_tree, NodeDecision, TrainLog, TreeTrainer,
};

/// `e⁻⁶`, the default impurity floor below which a node becomes a leaf.
pub const DEFAULT_GINI_EPSILON: f64 = 0.002_478_752_176_666_358_4;

pub const DEFAULT_MIN_SOFT_GAIN: f64 = 0.05;

/// Default probability-mass floor of the probabilistic baseline.
pub const DEFAULT_PRF_P_MIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    /// Conflict threshold: a node switches to dichotomous when
    /// `local − global ≥ epsilon`.
    #[serde(with = "crate::model_io::float_or_inf")]
    pub epsilon: f64,
    pub max_depth: usize,
    pub min_samples: usize,
    pub gini_epsilon: f64,
    pub candidate_count: usize,
    /// A node whose incoming weight mass is below this fraction of its
    /// sample count becomes a leaf.
    pub min_weight_fraction: f64,
    /// Upper bound on thresholds scored by the soft search (0 = all).
    pub soft_threshold_budget: usize,
    /// A conflicting adaptive-switch node only goes dichotomous when the soft
    /// split removes at least this fraction of the node's impurity mass;
    /// otherwise it keeps the hard split. 0 disables the check.
    #[serde(default)]
    pub min_soft_gain: f64,
    pub confidence_center: ConfidenceCenter,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            max_depth: 20,
            min_samples: 2,
            gini_epsilon: DEFAULT_GINI_EPSILON,
            candidate_count: (FEATURE_COUNT as f64).sqrt().floor() as usize,
            min_weight_fraction: 1e-3,
            soft_threshold_budget: 256,
            min_soft_gain: DEFAULT_MIN_SOFT_GAIN,
            confidence_center: ConfidenceCenter::PositiveMean,
            seed: 0,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon.is_nan() {
            return Err(Error::invalid("epsilon must not be NaN"));
        }
        if self.max_depth == 0 || self.min_samples == 0 || self.candidate_count == 0 {
            return Err(Error::invalid("max_depth, min_samples and candidate_count must be positive"));
        }
        if !(self.gini_epsilon >= 0.0) || !(self.min_weight_fraction >= 0.0) {
            return Err(Error::invalid("gini_epsilon and min_weight_fraction must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.min_soft_gain) {
            return Err(Error::invalid(format!("min_soft_gain must lie in [0, 1], got {}", self.min_soft_gain)));
        }
        Ok(())
    }
}

/// How internal nodes are built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeKind {
    /// Regular nodes, switched to dichotomous on a global-local confidence
    /// conflict; weights are re-balanced at every node.
    AdaptiveSwitch,
    /// Hard splits only.
    Standard,
    /// Every node soft-splits; carried weights multiply without re-balancing
    /// and samples whose weight drops below `p_min` leave the branch.
    Probabilistic { p_min: f64, rebalance: bool },
}

impl TreeKind {
    pub fn probabilistic(p_min: f64) -> Self {
        TreeKind::Probabilistic { p_min, rebalance: false }
    }

    pub(crate) fn rebalances(self) -> bool {
        match self {
            TreeKind::AdaptiveSwitch | TreeKind::Standard => true,
            TreeKind::Probabilistic { rebalance, .. } => rebalance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Regular {
        feature: FeatureId,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Dichotomous {
        feature: FeatureId,
        threshold: f64,
        sigma: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        label: Label,
        depth: u32,
    },
}

/// Result of evaluating one tree on one vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeOutput {
    pub label: Label,
    /// Path-weighted sum of leaf labels.
    pub score: f64,
    /// Nodes touched during traversal.
    pub visits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub leaf_count: usize,
    pub mean_leaf_depth: f64,
    pub node_count: usize,
    pub dichotomous_count: usize,
    pub depth_histogram: BTreeMap<u32, usize>,
}

impl Tree {
    /// Builds a tree from a pre-order node array, checking structure.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        let tree = Tree { nodes };
        tree.validate()?;
        Ok(tree)
    }

    pub fn leaf(label: Label) -> Self {
        Tree { nodes: vec![Node::Leaf { label, depth: 0 }] }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::malformed("nodes", "tree has no nodes"));
        }
        let mut parent_seen = vec![false; self.nodes.len()];
        let mut depth = vec![0u32; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            let children = match *node {
                Node::Regular { threshold, left, right, .. } => {
                    if !threshold.is_finite() {
                        return Err(Error::malformed(format!("nodes[{i}].tau"), "threshold must be finite"));
                    }
                    Some((left, right))
                }
                Node::Dichotomous { threshold, sigma, left, right, .. } => {
                    if !threshold.is_finite() {
                        return Err(Error::malformed(format!("nodes[{i}].tau"), "threshold must be finite"));
                    }
                    if !(sigma > 0.0 && sigma.is_finite()) {
                        return Err(Error::malformed(format!("nodes[{i}].sigma"), "dichotomous sigma must be > 0"));
                    }
                    Some((left, right))
                }
                Node::Leaf { depth: d, .. } => {
                    if d != depth[i] {
                        return Err(Error::malformed(
                            format!("nodes[{i}].depth"),
                            format!("stored depth {d} but node sits at depth {}", depth[i]),
                        ));
                    }
                    None
                }
            };
            if let Some((l, r)) = children {
                for c in [l, r] {
                    let c = c as usize;
                    if c <= i || c >= self.nodes.len() || parent_seen[c] {
                        return Err(Error::malformed(
                            format!("nodes[{i}]"),
                            format!("child index {c} is out of order, out of range or shared"),
                        ));
                    }
                    parent_seen[c] = true;
                    depth[c] = depth[i] + 1;
                }
            }
        }
        if let Some(orphan) = parent_seen.iter().skip(1).position(|&seen| !seen) {
            return Err(Error::malformed(format!("nodes[{}]", orphan + 1), "node is unreachable from the root"));
        }
        Ok(())
    }

    /// Depth of every node, by traversal from the root.
    pub fn node_depths(&self) -> Vec<u32> {
        let mut depth = vec![0u32; self.nodes.len()];
        for i in 0..self.nodes.len() {
            if let Node::Regular { left, right, .. } | Node::Dichotomous { left, right, .. } = self.nodes[i] {
                depth[left as usize] = depth[i] + 1;
                depth[right as usize] = depth[i] + 1;
            }
        }
        depth
    }

    pub fn predict(&self, x: &FeatureVector) -> TreeOutput {
        self.predict_values(&x.values)
    }

    /// Sums `Π w · label` over every reachable leaf; regular nodes pass the
    /// full carried weight to one child, dichotomous nodes split it.
    pub fn predict_values(&self, x: &[f64; FEATURE_COUNT]) -> TreeOutput {
        let mut score = 0.0;
        let mut visits = 0;
        let mut stack: Vec<(u32, f64)> = Vec::with_capacity(32);
        stack.push((0, 1.0));
        while let Some((idx, w)) = stack.pop() {
            visits += 1;
            match self.nodes[idx as usize] {
                Node::Regular { feature, threshold, left, right } => {
                    let next = if x[feature.index()] < threshold { left } else { right };
                    stack.push((next, w));
                }
                Node::Dichotomous { feature, threshold, sigma, left, right } => {
                    let (wl, wr) = dichotomous_weights(x[feature.index()], threshold, sigma);
                    if wr * w > 0.0 {
                        stack.push((right, w * wr));
                    }
                    if wl * w > 0.0 {
                        stack.push((left, w * wl));
                    }
                }
                Node::Leaf { label, .. } => {
                    if label.is_leg() {
                        score += w;
                    }
                }
            }
        }
        // summation can overshoot by an ulp
        let score = score.clamp(0.0, 1.0);
        TreeOutput {
            label: if score > 0.5 { Label::Leg } else { Label::NonLeg },
            score,
            visits,
        }
    }

    pub fn stats(&self) -> TreeStats {
        let depths = self.node_depths();
        let mut hist = BTreeMap::new();
        let mut leaves = 0usize;
        let mut depth_sum = 0u64;
        let mut dich = 0usize;
        for (node, &d) in self.nodes.iter().zip(&depths) {
            match node {
                Node::Leaf { .. } => {
                    leaves += 1;
                    depth_sum += u64::from(d);
                    *hist.entry(d).or_insert(0) += 1;
                }
                Node::Dichotomous { .. } => dich += 1,
                Node::Regular { .. } => {}
            }
        }
        TreeStats {
            leaf_count: leaves,
            mean_leaf_depth: depth_sum as f64 / leaves as f64,
            node_count: self.nodes.len(),
            dichotomous_count: dich,
            depth_histogram: hist,
        }
    }

    pub fn max_depth(&self) -> u32 {
        self.node_depths().into_iter().max().unwrap_or(0)
    }
}

/// Leaf count, mean leaf depth and leaf-depth histogram.
pub fn tree_stats(tree: &Tree) -> TreeStats {
    tree.stats()
}

pub fn predict_tree(tree: &Tree, x: &FeatureVector) -> (Label, f64) {
    let out = tree.predict(x);
    (out.label, out.score)
}

/// Flat serialized form of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub kind: NodeKindTag,
    pub feature: Option<FeatureId>,
    pub tau: Option<f64>,
    pub sigma: Option<f64>,
    pub left_index: Option<u32>,
    pub right_index: Option<u32>,
    pub leaf_label: Option<Label>,
    pub depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKindTag {
    Regular,
    Dichotomous,
    Leaf,
}

impl Tree {
    pub fn to_records(&self) -> Vec<NodeRecord> {
        let depths = self.node_depths();
        self.nodes
            .iter()
            .zip(depths)
            .map(|(node, depth)| match *node {
                Node::Regular { feature, threshold, left, right } => NodeRecord {
                    kind: NodeKindTag::Regular,
                    feature: Some(feature),
                    tau: Some(threshold),
                    sigma: None,
                    left_index: Some(left),
                    right_index: Some(right),
                    leaf_label: None,
                    depth,
                },
                Node::Dichotomous { feature, threshold, sigma, left, right } => NodeRecord {
                    kind: NodeKindTag::Dichotomous,
                    feature: Some(feature),
                    tau: Some(threshold),
                    sigma: Some(sigma),
                    left_index: Some(left),
                    right_index: Some(right),
                    leaf_label: None,
                    depth,
                },
                Node::Leaf { label, depth } => NodeRecord {
                    kind: NodeKindTag::Leaf,
                    feature: None,
                    tau: None,
                    sigma: None,
                    left_index: None,
                    right_index: None,
                    leaf_label: Some(label),
                    depth,
                },
            })
            .collect()
    }

    /// Rebuilds a tree from records; `path` prefixes field errors.
    pub fn from_records(records: &[NodeRecord], path: &str) -> Result<Self> {
        fn need<T>(path: &str, i: usize, field: &str, v: Option<T>) -> Result<T> {
            v.ok_or_else(|| Error::malformed(format!("{path}[{i}].{field}"), "missing for this node kind"))
        }
        let mut nodes = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let node = match r.kind {
                NodeKindTag::Regular => Node::Regular {
                    feature: need(path, i, "feature", r.feature)?,
                    threshold: need(path, i, "tau", r.tau)?,
                    left: need(path, i, "left_index", r.left_index)?,
                    right: need(path, i, "right_index", r.right_index)?,
                },
                NodeKindTag::Dichotomous => Node::Dichotomous {
                    feature: need(path, i, "feature", r.feature)?,
                    threshold: need(path, i, "tau", r.tau)?,
                    sigma: need(path, i, "sigma", r.sigma)?,
                    left: need(path, i, "left_index", r.left_index)?,
                    right: need(path, i, "right_index", r.right_index)?,
                },
                NodeKindTag::Leaf => Node::Leaf {
                    label: need(path, i, "leaf_label", r.leaf_label)?,
                    depth: r.depth,
                },
            };
            nodes.push(node);
        }
        let tree = Tree { nodes };
        tree.validate().map_err(|e| match e {
            Error::MalformedField { path: p, message } => Error::malformed(format!("{path}.{p}"), message),
            other => other,
        })?;
        let depths = tree.node_depths();
        if let Some(i) = records.iter().zip(&depths).position(|(r, d)| r.depth != *d) {
            return Err(Error::malformed(
                format!("{path}[{i}].depth"),
                format!("stored depth {} but node sits at depth {}", records[i].depth, depths[i]),
            ));
        }
        Ok(tree)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(v: f64) -> [f64; FEATURE_COUNT] {
        [v; FEATURE_COUNT]
    }

    fn stump(kind_dich: bool, left: Label, right: Label) -> Tree {
        let root = if kind_dich {
            Node::Dichotomous { feature: FeatureId::Width, threshold: 1.0, sigma: 0.5, left: 1, right: 2 }
        } else {
            Node::Regular { feature: FeatureId::Width, threshold: 1.0, left: 1, right: 2 }
        };
        Tree::from_nodes(vec![
            root,
            Node::Leaf { label: left, depth: 1 },
            Node::Leaf { label: right, depth: 1 },
        ])
        .unwrap()
    }

    #[test]
    fn single_leaf_prediction() {
        let t = Tree::leaf(Label::Leg);
        let out = t.predict_values(&x(3.0));
        assert_eq!((out.label, out.score), (Label::Leg, 1.0));
        let s = t.stats();
        assert_eq!((s.leaf_count, s.mean_leaf_depth), (1, 0.0));
        assert_eq!(s.depth_histogram, BTreeMap::from([(0, 1)]));
    }

    #[test]
    fn dichotomous_at_threshold_scores_half_and_says_no() {
        let t = stump(true, Label::Leg, Label::NonLeg);
        let out = t.predict_values(&x(1.0));
        assert_eq!(out.score, 0.5);
        assert_eq!(out.label, Label::NonLeg);
        assert_eq!(out.visits, 3);
    }

    #[test]
    fn regular_routes_strictly_less_left() {
        let t = stump(false, Label::Leg, Label::NonLeg);
        assert_eq!(t.predict_values(&x(0.999)).label, Label::Leg);
        assert_eq!(t.predict_values(&x(1.0)).label, Label::NonLeg);
        assert_eq!(t.predict_values(&x(1.0)).visits, 2);
    }

    #[test]
    fn perfect_depth_two_stats() {
        let nodes = vec![
            Node::Regular { feature: FeatureId::Width, threshold: 0.0, left: 1, right: 4 },
            Node::Regular { feature: FeatureId::Width, threshold: -1.0, left: 2, right: 3 },
            Node::Leaf { label: Label::Leg, depth: 2 },
            Node::Leaf { label: Label::NonLeg, depth: 2 },
            Node::Regular { feature: FeatureId::Width, threshold: 1.0, left: 5, right: 6 },
            Node::Leaf { label: Label::Leg, depth: 2 },
            Node::Leaf { label: Label::NonLeg, depth: 2 },
        ];
        let s = Tree::from_nodes(nodes).unwrap().stats();
        assert_eq!((s.leaf_count, s.mean_leaf_depth), (4, 2.0));
        assert_eq!(s.depth_histogram, BTreeMap::from([(2, 4)]));
    }

    #[test]
    fn structural_validation() {
        assert!(Tree::from_nodes(vec![]).is_err());
        // child pointing backwards
        assert!(Tree::from_nodes(vec![
            Node::Regular { feature: FeatureId::Width, threshold: 0.0, left: 0, right: 1 },
            Node::Leaf { label: Label::Leg, depth: 1 },
        ])
        .is_err());
        // zero sigma
        assert!(Tree::from_nodes(vec![
            Node::Dichotomous { feature: FeatureId::Width, threshold: 0.0, sigma: 0.0, left: 1, right: 2 },
            Node::Leaf { label: Label::Leg, depth: 1 },
            Node::Leaf { label: Label::Leg, depth: 1 },
        ])
        .is_err());
        // wrong leaf depth
        assert!(Tree::from_nodes(vec![
            Node::Regular { feature: FeatureId::Width, threshold: 0.0, left: 1, right: 2 },
            Node::Leaf { label: Label::Leg, depth: 3 },
            Node::Leaf { label: Label::Leg, depth: 1 },
        ])
        .is_err());
    }

    #[test]
    fn records_round_trip() {
        let t = stump(true, Label::Leg, Label::NonLeg);
        let back = Tree::from_records(&t.to_records(), "tree").unwrap();
        assert_eq!(back, t);
        let mut recs = t.to_records();
        recs[0].sigma = None;
        let err = Tree::from_records(&recs, "arfs[0].trees[3]").unwrap_err();
        assert!(err.to_string().contains("arfs[0].trees[3][0].sigma"), "{err}");
    }
}
