//! The 17-dimensional cluster descriptor and the per-feature confidence
//! statistics that drive the adaptive switch.
//!
//! Feature definitions (all in meters / radians unless noted):
//!
//! | feature | definition |
//! |---|---|
//! | width | distance between first and last point |
//! | circularity | mean squared radial residual of the algebraic (Kåsa) circle fit |
//! | linearity | mean squared orthogonal residual of the total-least-squares line |
//! | boundary length | sum of consecutive point distances |
//! | number of points | point count |
//! | radius of best-fit circle | Kåsa radius, or half the width when no fit exists |
//! | mean angular difference | mean signed turning angle over consecutive triples |
//! | standard distance to gravity | population std of point-to-centroid distances |
//! | average distance to median | mean distance to the geometric median (Weiszfeld) |
//! | mean curvature | mean signed Menger curvature over consecutive triples |
//! | boundary regularity | population std of consecutive point distances |
//! | distance to scanner | norm of the centroid |
//! | standard / average inscribed angular | std / mean of the angle at each interior point subtended by the endpoints |
//! | distance to scanner per point | mean point range divided by point count |
//! | left / right occlusion | 1 when the nearest retained beam before / after the cluster is strictly closer than the adjacent endpoint |
//!
//! Triple- and fit-based features are 0 for clusters with fewer than three
//! points.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan::{Label, LaserScan, Point2D, PointCluster};

pub const FEATURE_COUNT: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureId {
    Width = 0,
    Circularity,
    Linearity,
    BoundaryLength,
    NumberOfPoints,
    BestFitCircleRadius,
    MeanAngularDifference,
    StandardDistanceToGravity,
    AverageDistanceToMedian,
    MeanCurvature,
    BoundaryRegularity,
    DistanceToScanner,
    StandardInscribedAngular,
    AverageInscribedAngular,
    DistanceToScannerPerPoint,
    LeftOcclusion,
    RightOcclusion,
}

impl FeatureId {
    pub const ALL: [FeatureId; FEATURE_COUNT] = [
        FeatureId::Width,
        FeatureId::Circularity,
        FeatureId::Linearity,
        FeatureId::BoundaryLength,
        FeatureId::NumberOfPoints,
        FeatureId::BestFitCircleRadius,
        FeatureId::MeanAngularDifference,
        FeatureId::StandardDistanceToGravity,
        FeatureId::AverageDistanceToMedian,
        FeatureId::MeanCurvature,
        FeatureId::BoundaryRegularity,
        FeatureId::DistanceToScanner,
        FeatureId::StandardInscribedAngular,
        FeatureId::AverageInscribedAngular,
        FeatureId::DistanceToScannerPerPoint,
        FeatureId::LeftOcclusion,
        FeatureId::RightOcclusion,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<FeatureId> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureId::Width => "width",
            FeatureId::Circularity => "circularity",
            FeatureId::Linearity => "linearity",
            FeatureId::BoundaryLength => "boundary_length",
            FeatureId::NumberOfPoints => "number_of_points",
            FeatureId::BestFitCircleRadius => "best_fit_circle_radius",
            FeatureId::MeanAngularDifference => "mean_angular_difference",
            FeatureId::StandardDistanceToGravity => "standard_distance_to_gravity",
            FeatureId::AverageDistanceToMedian => "average_distance_to_median",
            FeatureId::MeanCurvature => "mean_curvature",
            FeatureId::BoundaryRegularity => "boundary_regularity",
            FeatureId::DistanceToScanner => "distance_to_scanner",
            FeatureId::StandardInscribedAngular => "standard_inscribed_angular",
            FeatureId::AverageInscribedAngular => "average_inscribed_angular",
            FeatureId::DistanceToScannerPerPoint => "distance_to_scanner_per_point",
            FeatureId::LeftOcclusion => "left_occlusion",
            FeatureId::RightOcclusion => "right_occlusion",
        }
    }

    pub fn from_name(name: &str) -> Option<FeatureId> {
        Self::ALL.iter().copied().find(|f| f.name() == name)
    }

    /// Features whose value only changes when noise alters the segmentation
    /// or the beam ordering (count and occlusion flags).
    pub fn is_discrete(self) -> bool {
        matches!(
            self,
            FeatureId::NumberOfPoints | FeatureId::LeftOcclusion | FeatureId::RightOcclusion
        )
    }
}

impl std::fmt::Display for FeatureId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for FeatureId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for FeatureId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        FeatureId::from_name(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown feature `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
    pub label: Option<Label>,
    pub scan_id: String,
}

impl FeatureVector {
    pub fn new(values: [f64; FEATURE_COUNT], label: Option<Label>) -> Self {
        Self {
            values,
            label,
            scan_id: String::new(),
        }
    }

    pub fn get(&self, f: FeatureId) -> f64 {
        self.values[f.index()]
    }

    /// Range used for scale routing.
    pub fn distance_to_scanner(&self) -> f64 {
        self.get(FeatureId::DistanceToScanner)
    }

    pub fn is_leg(&self) -> bool {
        self.label == Some(Label::Leg)
    }
}

fn pop_mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

struct CircleFit {
    center: Point2D,
    radius: f64,
}

/// Algebraic least-squares circle fit on centroid-centered coordinates.
fn kasa_fit(points: &[Point2D], centroid: Point2D) -> Option<CircleFit> {
    if points.len() < 3 {
        return None;
    }
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for p in points {
        let (u, v) = (p.x - centroid.x, p.y - centroid.y);
        let row = Vector3::new(u, v, 1.0);
        ata += row * row.transpose();
        atb -= row * (u * u + v * v);
    }
    let sol = ata.lu().solve(&atb)?;
    let (d, e, f) = (sol[0], sol[1], sol[2]);
    let r2 = (d * d + e * e) / 4.0 - f;
    if !(r2 > 0.0) || !sol.iter().all(|x| x.is_finite()) {
        return None;
    }
    let center = Point2D::new(centroid.x - d / 2.0, centroid.y - e / 2.0);
    let radius = r2.sqrt();
    (radius.is_finite() && center.is_finite()).then_some(CircleFit { center, radius })
}

/// Smallest eigenvalue of the population covariance, i.e. the mean squared
/// orthogonal distance to the total-least-squares line.
fn tls_residual(points: &[Point2D], centroid: Point2D) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let n = points.len() as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (u, v) = (p.x - centroid.x, p.y - centroid.y);
        sxx += u * u;
        syy += v * v;
        sxy += u * v;
    }
    let (a, b, c) = (sxx / n, syy / n, sxy / n);
    let half_tr = (a + b) / 2.0;
    let disc = (((a - b) / 2.0).powi(2) + c * c).sqrt();
    (half_tr - disc).max(0.0)
}

fn geometric_median(points: &[Point2D], start: Point2D) -> Point2D {
    let mut y = start;
    for _ in 0..100 {
        let (mut num, mut den) = (Point2D::ORIGIN, 0.0);
        for p in points {
            let d = p.dist(y);
            if d < 1e-12 {
                continue;
            }
            num = num + p.scale(1.0 / d);
            den += 1.0 / d;
        }
        if den == 0.0 {
            break;
        }
        let next = num.scale(1.0 / den);
        let moved = next.dist(y);
        y = next;
        if moved < 1e-9 {
            break;
        }
    }
    y
}

fn turning_angle(a: Point2D, b: Point2D) -> f64 {
    a.cross(b).atan2(a.dot(b))
}

fn signed_menger(p: Point2D, q: Point2D, r: Point2D) -> f64 {
    let (a, b, c) = (q - p, r - q, r - p);
    let denom = a.norm() * b.norm() * c.norm();
    if denom < 1e-15 {
        0.0
    } else {
        2.0 * a.cross(b) / denom
    }
}

/// Computes the descriptor of `cluster`, which must come from `scan`.
pub fn extract_features(cluster: &PointCluster, scan: &LaserScan) -> FeatureVector {
    let pts = &cluster.points;
    let n = pts.len();
    let centroid = cluster.centroid;
    let first = pts[0];
    let last = pts[n - 1];
    let mut v = [0.0; FEATURE_COUNT];
    let set = |v: &mut [f64; FEATURE_COUNT], f: FeatureId, x: f64| v[f.index()] = x;

    let width = first.dist(last);
    let steps = pts.windows(2).map(|w| w[0].dist(w[1]));
    let (_, step_std) = pop_mean_std(steps.clone());
    set(&mut v, FeatureId::Width, width);
    set(&mut v, FeatureId::BoundaryLength, steps.sum());
    set(&mut v, FeatureId::BoundaryRegularity, step_std);
    set(&mut v, FeatureId::NumberOfPoints, n as f64);
    set(&mut v, FeatureId::Linearity, tls_residual(pts, centroid));

    match kasa_fit(pts, centroid) {
        Some(fit) => {
            let residual = pts
                .iter()
                .map(|p| (p.dist(fit.center) - fit.radius).powi(2))
                .sum::<f64>()
                / n as f64;
            set(&mut v, FeatureId::Circularity, residual);
            set(&mut v, FeatureId::BestFitCircleRadius, fit.radius);
        }
        None => set(&mut v, FeatureId::BestFitCircleRadius, width / 2.0),
    }

    if n >= 3 {
        let triples = || pts.windows(3);
        let turn = triples()
            .map(|w| turning_angle(w[1] - w[0], w[2] - w[1]))
            .sum::<f64>()
            / (n - 2) as f64;
        let curv = triples().map(|w| signed_menger(w[0], w[1], w[2])).sum::<f64>() / (n - 2) as f64;
        let inscribed = pts[1..n - 1].iter().map(|&p| {
            let (a, b) = (first - p, last - p);
            a.cross(b).abs().atan2(a.dot(b))
        });
        let (ins_mean, ins_std) = pop_mean_std(inscribed);
        set(&mut v, FeatureId::MeanAngularDifference, turn);
        set(&mut v, FeatureId::MeanCurvature, curv);
        set(&mut v, FeatureId::AverageInscribedAngular, ins_mean);
        set(&mut v, FeatureId::StandardInscribedAngular, ins_std);
    }

    let (_, grav_std) = pop_mean_std(pts.iter().map(|p| p.dist(centroid)));
    set(&mut v, FeatureId::StandardDistanceToGravity, grav_std);
    let median = geometric_median(pts, centroid);
    set(
        &mut v,
        FeatureId::AverageDistanceToMedian,
        pts.iter().map(|p| p.dist(median)).sum::<f64>() / n as f64,
    );

    set(&mut v, FeatureId::DistanceToScanner, centroid.norm());
    let mean_range = pts.iter().map(|p| p.norm()).sum::<f64>() / n as f64;
    set(&mut v, FeatureId::DistanceToScannerPerPoint, mean_range / n as f64);

    let first_range = scan.range(cluster.first_beam()).unwrap_or_else(|| first.norm());
    let last_range = scan.range(cluster.last_beam()).unwrap_or_else(|| last.norm());
    let left = scan.previous_retained(cluster.first_beam()).is_some_and(|r| r < first_range);
    let right = scan.next_retained(cluster.last_beam()).is_some_and(|r| r < last_range);
    set(&mut v, FeatureId::LeftOcclusion, f64::from(u8::from(left)));
    set(&mut v, FeatureId::RightOcclusion, f64::from(u8::from(right)));

    FeatureVector {
        values: v,
        label: cluster.label,
        scan_id: cluster.scan_id.clone(),
    }
}

/// Per-feature population mean and variance over a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: [f64; FEATURE_COUNT],
    pub variance: [f64; FEATURE_COUNT],
}

impl FeatureStats {
    pub fn sigma(&self, f: FeatureId) -> f64 {
        self.variance[f.index()].sqrt()
    }

    /// Stats with every variance multiplied by `factor²`.
    pub fn scaled_sigma(&self, factor: f64) -> FeatureStats {
        let mut out = self.clone();
        for v in &mut out.variance {
            *v *= factor * factor;
        }
        out
    }
}

/// Population (divide-by-N) statistics, accumulated in one Welford pass.
pub fn feature_stats(vectors: &[FeatureVector]) -> Result<FeatureStats> {
    if vectors.is_empty() {
        return Err(Error::EmptyDataset("feature statistics need at least one vector".into()));
    }
    let mut mean = [0.0; FEATURE_COUNT];
    let mut m2 = [0.0; FEATURE_COUNT];
    for (k, fv) in vectors.iter().enumerate() {
        let count = (k + 1) as f64;
        for j in 0..FEATURE_COUNT {
            let x = fv.values[j];
            let delta = x - mean[j];
            mean[j] += delta / count;
            m2[j] += delta * (x - mean[j]);
        }
    }
    let n = vectors.len() as f64;
    let variance = m2.map(|s| (s / n).max(0.0));
    Ok(FeatureStats { mean, variance })
}

/// Which mean the negative-class spread is measured around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceCenter {
    /// Both spreads are taken around the leg-class mean.
    #[default]
    PositiveMean,
    OwnClassMean,
}

/// Confidence of one feature from its leg and non-leg values:
/// `1 - min(δ⁺, δ⁻) / max(δ⁺, δ⁻)`, 0 when both spreads vanish.
pub fn confidence_of(positives: &[f64], negatives: &[f64], center: ConfidenceCenter) -> f64 {
    debug_assert!(!positives.is_empty() && !negatives.is_empty());
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let spread = |xs: &[f64], m: f64| xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
    let pos_mean = mean(positives);
    let neg_center = match center {
        ConfidenceCenter::PositiveMean => pos_mean,
        ConfidenceCenter::OwnClassMean => mean(negatives),
    };
    confidence_from_spreads(spread(positives, pos_mean), spread(negatives, neg_center))
}

pub(crate) fn confidence_from_spreads(pos: f64, neg: f64) -> f64 {
    let hi = pos.max(neg);
    if hi <= 0.0 {
        return 0.0;
    }
    (1.0 - pos.min(neg) / hi).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceReport {
    pub c: [f64; FEATURE_COUNT],
    pub positive_count: usize,
    pub negative_count: usize,
}

impl ConfidenceReport {
    pub fn get(&self, f: FeatureId) -> f64 {
        self.c[f.index()]
    }

    /// Splits labelled vectors by class and scores every feature.
    pub fn from_labeled(vectors: &[FeatureVector], center: ConfidenceCenter) -> Result<Self> {
        let (pos, neg): (Vec<&FeatureVector>, Vec<&FeatureVector>) = vectors
            .iter()
            .filter(|v| v.label.is_some())
            .partition(|v| v.is_leg());
        feature_confidence_refs(&pos, &neg, center)
    }
}

pub fn feature_confidence(
    positives: &[FeatureVector],
    negatives: &[FeatureVector],
    center: ConfidenceCenter,
) -> Result<ConfidenceReport> {
    let pos: Vec<&FeatureVector> = positives.iter().collect();
    let neg: Vec<&FeatureVector> = negatives.iter().collect();
    feature_confidence_refs(&pos, &neg, center)
}

fn feature_confidence_refs(
    pos: &[&FeatureVector],
    neg: &[&FeatureVector],
    center: ConfidenceCenter,
) -> Result<ConfidenceReport> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid(format!(
            "feature confidence needs both classes (got {} leg, {} non-leg)",
            pos.len(),
            neg.len()
        )));
    }
    let mut c = [0.0; FEATURE_COUNT];
    let mut pv = Vec::with_capacity(pos.len());
    let mut nv = Vec::with_capacity(neg.len());
    for (j, cj) in c.iter_mut().enumerate() {
        pv.clear();
        nv.clear();
        pv.extend(pos.iter().map(|v| v.values[j]));
        nv.extend(neg.iter().map(|v| v.values[j]));
        *cj = confidence_of(&pv, &nv, center);
    }
    Ok(ConfidenceReport {
        c,
        positive_count: pos.len(),
        negative_count: neg.len(),
    })
}

/// True when the local confidence exceeds the global one by at least `epsilon`.
pub fn conflict_check(global_c: f64, local_c: f64, epsilon: f64) -> bool {
    local_c - global_c >= epsilon
}
