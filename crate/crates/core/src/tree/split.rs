//! Split scoring: two-class Gini impurity, exhaustive hard-threshold search
//! and the Gaussian-CDF soft threshold search used by dichotomous nodes.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::features::{FeatureId, FEATURE_COUNT};
use crate::scan::Label;

/// A labelled feature vector with a routing weight.
#[derive(Debug, Clone, Copy)]
pub struct WeightedSample<'a> {
    pub values: &'a [f64; FEATURE_COUNT],
    pub weight: f64,
    pub label: Label,
}

/// Weighted Gini impurity `2 · (W⁺/W) · (W⁻/W)`.
pub fn gini(samples: &[WeightedSample<'_>]) -> Result<f64> {
    let (pos, neg) = class_mass(samples.iter().map(|s| (s.weight, s.label.is_leg())));
    let total = pos + neg;
    if samples.is_empty() || !(total > 0.0) {
        return Err(Error::invalid("gini impurity needs a positive total weight"));
    }
    Ok(2.0 * (pos / total) * (neg / total))
}

pub(crate) fn class_mass(it: impl Iterator<Item = (f64, bool)>) -> (f64, f64) {
    it.fold((0.0, 0.0), |(p, n), (w, leg)| if leg { (p + w, n) } else { (p, n + w) })
}

/// `G · W` for a pool with the given class masses; 0 for an empty pool.
#[inline]
pub(crate) fn impurity_mass(pos: f64, neg: f64) -> f64 {
    let total = pos + neg;
    if total > 0.0 {
        2.0 * pos * neg / total
    } else {
        0.0
    }
}

/// One sample projected on a single feature.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Entry {
    pub x: f64,
    pub w: f64,
    pub leg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: FeatureId,
    pub threshold: f64,
    /// `G_l · ΣW_l + G_r · ΣW_r` at the chosen threshold.
    pub impurity: f64,
}

#[inline]
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m <= a {
        b
    } else {
        m
    }
}

pub(crate) fn sort_entries(entries: &mut [Entry]) {
    entries.sort_unstable_by(|a, b| a.x.total_cmp(&b.x));
}

/// Midpoints between consecutive distinct values of sorted entries.
pub(crate) fn midpoints(sorted: &[Entry]) -> Vec<f64> {
    sorted
        .windows(2)
        .filter(|w| w[0].x < w[1].x)
        .map(|w| midpoint(w[0].x, w[1].x))
        .collect()
}

/// Best hard threshold `[x < τ]` over sorted entries: `(τ, impurity)`.
/// Ties keep the smallest τ. `None` when all values are equal.
pub(crate) fn best_hard_threshold(sorted: &[Entry]) -> Option<(f64, f64)> {
    let (tot_pos, tot_neg) = class_mass(sorted.iter().map(|e| (e.w, e.leg)));
    let (mut lp, mut ln) = (0.0, 0.0);
    let mut best: Option<(f64, f64)> = None;
    for i in 0..sorted.len().saturating_sub(1) {
        let e = sorted[i];
        if e.leg {
            lp += e.w;
        } else {
            ln += e.w;
        }
        let next = sorted[i + 1].x;
        if e.x < next {
            let score = impurity_mass(lp, ln) + impurity_mass(tot_pos - lp, tot_neg - ln);
            if best.is_none_or(|(_, b)| score < b) {
                best = Some((midpoint(e.x, next), score));
            }
        }
    }
    best
}

/// Exhaustive hard-split search over the candidate features. Ties prefer the
/// lower feature index, then the smaller threshold.
pub fn find_best_split(samples: &[WeightedSample<'_>], candidates: &[FeatureId]) -> Result<SplitChoice> {
    let mut sorted_candidates = candidates.to_vec();
    sorted_candidates.sort();
    sorted_candidates.dedup();
    let mut entries = Vec::with_capacity(samples.len());
    let mut best: Option<SplitChoice> = None;
    for f in sorted_candidates {
        entries.clear();
        entries.extend(samples.iter().map(|s| Entry {
            x: s.values[f.index()],
            w: s.weight,
            leg: s.label.is_leg(),
        }));
        sort_entries(&mut entries);
        if let Some((threshold, impurity)) = best_hard_threshold(&entries) {
            if best.is_none_or(|b| impurity < b.impurity) {
                best = Some(SplitChoice { feature: f, threshold, impurity });
            }
        }
    }
    best.ok_or(Error::NoValidSplit)
}

/// Standard normal CDF via `erfc`, accurate in both tails.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Left/right routing weights of a value at a dichotomous node:
/// `w_l = Φ((τ − x)/σ)`, `w_r = Φ((x − τ)/σ)`.
#[inline]
pub fn dichotomous_weights(x: f64, tau: f64, sigma: f64) -> (f64, f64) {
    debug_assert!(sigma > 0.0);
    let z = (tau - x) / sigma;
    (normal_cdf(z), normal_cdf(-z))
}

/// Candidate thresholds for the soft search: every midpoint when there are
/// at most `budget`, otherwise `budget` midpoints at evenly spaced ranks.
pub(crate) fn soft_candidates(sorted: &[Entry], budget: usize) -> Vec<f64> {
    let all = midpoints(sorted);
    if budget == 0 || all.len() <= budget {
        return all;
    }
    let m = all.len();
    (0..budget)
        .map(|k| all[(k * (m - 1)) / (budget - 1).max(1)])
        .collect()
}

/// Soft-split objective of one threshold: every entry feeds `w·w_l` to the
/// left pool and `w·w_r` to the right pool.
pub(crate) fn soft_objective(entries: &[Entry], tau: f64, sigma: f64) -> f64 {
    let (mut lp, mut ln, mut rp, mut rn) = (0.0, 0.0, 0.0, 0.0);
    for e in entries {
        let (wl, wr) = dichotomous_weights(e.x, tau, sigma);
        if e.leg {
            lp += e.w * wl;
            rp += e.w * wr;
        } else {
            ln += e.w * wl;
            rn += e.w * wr;
        }
    }
    impurity_mass(lp, ln) + impurity_mass(rp, rn)
}

pub(crate) fn best_soft_threshold(sorted: &[Entry], sigma: f64, budget: usize) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for tau in soft_candidates(sorted, budget) {
        let score = soft_objective(sorted, tau, sigma);
        if best.is_none_or(|(_, b)| score < b) {
            best = Some((tau, score));
        }
    }
    best
}

/// Re-selects the threshold of a dichotomous node on `feature`, scoring each
/// midpoint with Gaussian-CDF soft assignment. Returns `(τ, impurity)`.
pub fn find_best_dichotomous_threshold(
    samples: &[WeightedSample<'_>],
    feature: FeatureId,
    sigma: f64,
) -> Result<(f64, f64)> {
    find_best_dichotomous_threshold_with_budget(samples, feature, sigma, 0)
}

/// As [`find_best_dichotomous_threshold`], scoring at most `budget`
/// thresholds (0 = unlimited).
pub fn find_best_dichotomous_threshold_with_budget(
    samples: &[WeightedSample<'_>],
    feature: FeatureId,
    sigma: f64,
    budget: usize,
) -> Result<(f64, f64)> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("dichotomous sigma must be > 0, got {sigma}")));
    }
    let mut entries: Vec<Entry> = samples
        .iter()
        .map(|s| Entry {
            x: s.values[feature.index()],
            w: s.weight,
            leg: s.label.is_leg(),
        })
        .collect();
    sort_entries(&mut entries);
    best_soft_threshold(&entries, sigma, budget).ok_or(Error::NoValidSplit)
}
