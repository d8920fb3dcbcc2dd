use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan::Label;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut c = ConfusionCounts::default();
        for (pred, truth) in pairs {
            match (pred.is_leg(), truth.is_leg()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    /// `TP / (TP + FP)`; `None` when nothing was predicted positive.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `TP / (TP + FN)`; `None` when there are no positives.
    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Counts and rates for predicted vs. true labels. Undefined rates are `None`.
pub fn confusion_and_rates(
    predictions: &[Label],
    truths: &[Label],
) -> Result<(ConfusionCounts, Option<f64>, Option<f64>)> {
    if predictions.len() != truths.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} ground-truth labels",
            predictions.len(),
            truths.len()
        )));
    }
    let c = ConfusionCounts::from_pairs(predictions.iter().copied().zip(truths.iter().copied()));
    Ok((c, c.precision(), c.recall()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct() {
        let l = [Label::Leg, Label::NonLeg, Label::Leg];
        let (c, p, r) = confusion_and_rates(&l, &l).unwrap();
        assert_eq!((c.tp, c.tn), (2, 1));
        assert_eq!((p, r), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn no_predicted_positives() {
        let (_, p, r) = confusion_and_rates(&[Label::NonLeg, Label::NonLeg], &[Label::Leg, Label::NonLeg]).unwrap();
        assert_eq!(p, None);
        assert_eq!(r, Some(0.0));
    }

    #[test]
    fn length_mismatch() {
        assert!(confusion_and_rates(&[Label::Leg], &[]).is_err());
    }

    #[test]
    fn undefined_serializes_as_null() {
        let c = ConfusionCounts::default();
        assert_eq!(serde_json::to_string(&c.precision()).unwrap(), "null");
        assert!(serde_json::to_string(&c).unwrap().contains("\"fn\":0"));
    }
}
