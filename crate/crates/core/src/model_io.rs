//! Model file: a JSON document holding the partition, hyperparameters,
//! training statistics and every tree as a flat node array.
//!
//! Floats are written in shortest round-trip form and parsed with correct
//! rounding, so `load(save(m))` reproduces every bit of `m`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ConfidenceCenter, ConfidenceReport, FeatureStats};
use crate::marf::{Arf, MarfModel, ScalePartition};
use crate::tree::{NodeRecord, TrainParams, Tree, TreeKind};

pub const FORMAT_VERSION: u32 = 1;

/// Serde helper for floats that may be infinite (written as `"inf"` /
/// `"-inf"`).
pub mod float_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got \"{other}\""))),
            },
        }
    }
}

/// Choices the trainer made where several readings were possible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionFlags {
    pub confidence_center: ConfidenceCenter,
    /// Carried weights are multiplied along dichotomous paths, then rescaled
    /// to sum to the node's sample count before each split.
    pub rebalancing: String,
    pub tree_kind: TreeKind,
    pub arf_vote: String,
    pub scale_routing_feature: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArfRecord {
    pub k: usize,
    pub trees: Vec<Vec<NodeRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub boundaries: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    #[serde(with = "float_or_inf")]
    pub epsilon: f64,
    pub feature_stats: FeatureStats,
    pub global_confidence: ConfidenceReport,
    pub decision_flags: DecisionFlags,
    pub train_params: TrainParams,
    pub arfs: Vec<ArfRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl ModelFile {
    pub fn from_model(m: &MarfModel) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            k: m.scales(),
            boundaries: m.partition.boundaries().to_vec(),
            alpha: m.alpha,
            beta: m.beta,
            epsilon: m.params.epsilon,
            feature_stats: m.stats.clone(),
            global_confidence: m.global_confidence.clone(),
            decision_flags: DecisionFlags {
                confidence_center: m.params.confidence_center,
                rebalancing: match m.tree_kind {
                    TreeKind::Probabilistic { rebalance: false, .. } => "none".into(),
                    _ => "multiply_then_rescale_to_sample_count".into(),
                },
                tree_kind: m.tree_kind,
                arf_vote: "mean_of_binary_tree_labels".into(),
                scale_routing_feature: "distance_to_scanner".into(),
            },
            train_params: m.params.clone(),
            arfs: m
                .arfs
                .iter()
                .map(|a| ArfRecord {
                    k: a.scale,
                    trees: a.trees.iter().map(Tree::to_records).collect(),
                })
                .collect(),
            provenance: m.provenance.clone(),
        }
    }

    pub fn into_model(self) -> Result<MarfModel> {
        let partition = ScalePartition::from_boundaries(self.boundaries.clone())?;
        if partition.scales() != self.k {
            return Err(Error::malformed("K", format!("K = {} but {} boundaries given", self.k, self.boundaries.len())));
        }
        if self.arfs.len() != self.k {
            return Err(Error::malformed("arfs", format!("expected {} forests, found {}", self.k, self.arfs.len())));
        }
        if self.epsilon.to_bits() != self.train_params.epsilon.to_bits() {
            return Err(Error::malformed("epsilon", "disagrees with train_params.epsilon"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::malformed("beta", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::malformed("alpha", "must lie in [0, 1]"));
        }
        if self.decision_flags.tree_kind_params_mismatch(&self.train_params) {
            return Err(Error::malformed("decision_flags.confidence_center", "disagrees with train_params"));
        }
        let mut arfs = Vec::with_capacity(self.k);
        for (i, rec) in self.arfs.into_iter().enumerate() {
            if rec.k != i + 1 {
                return Err(Error::malformed(format!("arfs[{i}].k"), format!("expected {}, found {}", i + 1, rec.k)));
            }
            if rec.trees.is_empty() {
                return Err(Error::malformed(format!("arfs[{i}].trees"), "a forest needs at least one tree"));
            }
            let trees = rec
                .trees
                .iter()
                .enumerate()
                .map(|(t, nodes)| Tree::from_records(nodes, &format!("arfs[{i}].trees[{t}]")))
                .collect::<Result<Vec<_>>>()?;
            arfs.push(Arf { scale: rec.k, trees });
        }
        Ok(MarfModel {
            partition,
            arfs,
            alpha: self.alpha,
            beta: self.beta,
            tree_kind: self.decision_flags.tree_kind,
            params: self.train_params,
            stats: self.feature_stats,
            global_confidence: self.global_confidence,
            provenance: self.provenance,
        })
    }
}

impl DecisionFlags {
    fn tree_kind_params_mismatch(&self, params: &TrainParams) -> bool {
        self.confidence_center != params.confidence_center
    }
}

pub fn model_to_string(model: &MarfModel) -> String {
    let mut s = serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("model file is always serializable");
    s.push('\n');
    s
}

pub fn model_from_str(text: &str) -> Result<MarfModel> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::malformed("<document>", e.to_string()))?;
    match value.get("format_version").map(|v| v.as_u64()) {
        None => return Err(Error::malformed("format_version", "missing")),
        Some(None) => return Err(Error::malformed("format_version", "must be a non-negative integer")),
        Some(Some(v)) if v != u64::from(FORMAT_VERSION) => {
            return Err(Error::VersionMismatch {
                found: u32::try_from(v).unwrap_or(u32::MAX),
                expected: FORMAT_VERSION,
            })
        }
        _ => {}
    }
    // Re-parse from text so floats go through the round-trip parser.
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ModelFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::malformed(if path == "." { "<document>".into() } else { path }, e.into_inner().to_string())
    })?;
    file.into_model()
}

pub fn save_model(model: &MarfModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MarfModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureId, FeatureVector, FEATURE_COUNT};
    use crate::marf::{train_marf, MarfConfig};
    use crate::scan::Label;

    fn model() -> MarfModel {
        let data: Vec<FeatureVector> = (0..90)
            .map(|i| {
                let mut v = [0.0; FEATURE_COUNT];
                v[FeatureId::DistanceToScanner.index()] = 0.3 + (i % 30) as f64 * 0.3;
                v[FeatureId::Width.index()] = (i * 7 % 13) as f64 / 13.0;
                v[FeatureId::Circularity.index()] = (i * 5 % 11) as f64 / 11.0;
                FeatureVector::new(v, Some(if (i * 7 % 13) < 5 { Label::Leg } else { Label::NonLeg }))
            })
            .collect();
        let mut cfg = MarfConfig::with_scales(3, 2);
        cfg.params.epsilon = f64::INFINITY;
        cfg.params.seed = 4;
        train_marf(&data, &cfg).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let m = model();
        let text = model_to_string(&m);
        let back = model_from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_string(&back), text);
        assert!(text.contains("\"epsilon\": \"inf\""));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let text = model_to_string(&model()).replace("\"format_version\": 1", "\"format_version\": 99");
        assert!(matches!(model_from_str(&text), Err(Error::VersionMismatch { found: 99, expected: 1 })));
    }

    #[test]
    fn truncated_file_is_malformed() {
        let text = model_to_string(&model());
        let err = model_from_str(&text[..text.len() / 2]).unwrap_err();
        assert!(matches!(err, Error::MalformedField { .. }), "{err}");
    }

    #[test]
    fn bad_field_reports_path() {
        let text = model_to_string(&model()).replacen("\"beta\": 0.5", "\"beta\": \"half\"", 1);
        match model_from_str(&text) {
            Err(Error::MalformedField { path, .. }) => assert_eq!(path, "beta"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
