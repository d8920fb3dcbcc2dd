use serde::{Deserialize, Serialize};

use super::metrics::ConfusionCounts;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::marf::MarfModel;
use crate::scan::Label;

pub const PR_POINTS: usize = 100;
pub const PR_BETA_MIN: f64 = 0.1;
pub const PR_BETA_MAX: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub beta: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub counts: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// Human-readable grid definition.
    pub grid: String,
    pub points: Vec<PrPoint>,
}

/// 100 equally spaced thresholds from 0.1 to 0.9 inclusive.
pub fn beta_grid() -> Vec<f64> {
    let step = (PR_BETA_MAX - PR_BETA_MIN) / (PR_POINTS - 1) as f64;
    (0..PR_POINTS)
        .map(|i| if i == PR_POINTS - 1 { PR_BETA_MAX } else { PR_BETA_MIN + step * i as f64 })
        .collect()
}

pub fn pr_curve_from_probabilities(probabilities: &[f64], truths: &[Label], betas: &[f64]) -> Result<PrCurve> {
    if probabilities.len() != truths.len() {
        return Err(Error::invalid("probabilities and truths differ in length"));
    }
    let points = betas
        .iter()
        .map(|&beta| {
            let c = ConfusionCounts::from_pairs(
                probabilities
                    .iter()
                    .zip(truths)
                    .map(|(&p, &t)| (if p > beta { Label::Leg } else { Label::NonLeg }, t)),
            );
            PrPoint { beta, precision: c.precision(), recall: c.recall(), counts: c }
        })
        .collect();
    Ok(PrCurve {
        grid: format!("{} thresholds, {PR_BETA_MIN} to {PR_BETA_MAX}, equal spacing, label = probability > beta", betas.len()),
        points,
    })
}

/// Predicts every cluster once, then sweeps the label threshold.
pub fn pr_curve(model: &MarfModel, dataset: &[FeatureVector]) -> Result<PrCurve> {
    let truths = dataset
        .iter()
        .enumerate()
        .map(|(i, v)| v.label.ok_or_else(|| Error::invalid(format!("cluster {i} has no label"))))
        .collect::<Result<Vec<_>>>()?;
    let probs: Vec<f64> = dataset.iter().map(|v| model.probability(v)).collect();
    pr_curve_from_probabilities(&probs, &truths, &beta_grid())
}
