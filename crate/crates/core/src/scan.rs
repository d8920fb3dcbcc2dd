//! Laser scans, jump-distance clustering and ground-truth labelling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default gap (meters) between consecutive points that starts a new cluster.
pub const DEFAULT_JUMP_THRESHOLD: f64 = 0.13;

/// A cluster is a leg candidate for a person only when its centroid lies
/// strictly closer than this (meters).
pub const LEG_MATCH_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const ORIGIN: Point2D = Point2D { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn scale(self, s: f64) -> Point2D {
        Point2D::new(self.x * s, self.y * s)
    }

    pub fn dot(self, other: Point2D) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point2D) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Arithmetic mean; `None` for an empty slice.
    pub fn mean(points: &[Point2D]) -> Option<Point2D> {
        if points.is_empty() {
            return None;
        }
        let n = points.len() as f64;
        let (sx, sy) = points
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Some(Point2D::new(sx / n, sy / n))
    }
}

impl std::ops::Add for Point2D {
    type Output = Point2D;

    fn add(self, other: Point2D) -> Point2D {
        Point2D::new(self.x + other.x, self.y + other.y)
    }
}

impl std::ops::Sub for Point2D {
    type Output = Point2D;

    fn sub(self, other: Point2D) -> Point2D {
        Point2D::new(self.x - other.x, self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NonLeg = 0,
    Leg = 1,
}

impl Label {
    pub fn from_bit(bit: u8) -> Option<Label> {
        match bit {
            0 => Some(Label::NonLeg),
            1 => Some(Label::Leg),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        self as u8
    }

    pub fn is_leg(self) -> bool {
        self == Label::Leg
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.bit())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let bit = u8::deserialize(d)?;
        Label::from_bit(bit).ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {bit}")))
    }
}

/// One polar range sweep. Out-of-range beams are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserScan {
    pub scan_id: String,
    pub angle_min: f64,
    pub angle_increment: f64,
    pub max_range: f64,
    pub ranges: Vec<Option<f64>>,
}

impl LaserScan {
    pub fn new(
        scan_id: impl Into<String>,
        angle_min: f64,
        angle_increment: f64,
        max_range: f64,
        ranges: Vec<Option<f64>>,
    ) -> Result<Self> {
        let scan = Self {
            scan_id: scan_id.into(),
            angle_min,
            angle_increment,
            max_range,
            ranges,
        };
        scan.validate()?;
        Ok(scan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ranges.is_empty() {
            return Err(Error::invalid(format!("scan {}: ranges is empty", self.scan_id)));
        }
        if !(self.angle_increment > 0.0 && self.angle_increment.is_finite()) {
            return Err(Error::invalid(format!(
                "scan {}: angle_increment must be finite and > 0, got {}",
                self.scan_id, self.angle_increment
            )));
        }
        if !self.angle_min.is_finite() || !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::invalid(format!(
                "scan {}: angle_min and max_range must be finite (max_range > 0)",
                self.scan_id
            )));
        }
        for (i, r) in self.ranges.iter().enumerate() {
            if let Some(r) = *r {
                if !(0.0..=self.max_range).contains(&r) {
                    return Err(Error::invalid(format!(
                        "scan {}: ranges[{i}] = {r} outside [0, {}]",
                        self.scan_id, self.max_range
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn bearing(&self, beam: usize) -> f64 {
        self.angle_min + beam as f64 * self.angle_increment
    }

    /// Cartesian point of a beam, `None` when out of range.
    pub fn point(&self, beam: usize) -> Option<Point2D> {
        let r = self.ranges.get(beam).copied().flatten()?;
        let a = self.bearing(beam);
        Some(Point2D::new(r * a.cos(), r * a.sin()))
    }

    pub fn range(&self, beam: usize) -> Option<f64> {
        self.ranges.get(beam).copied().flatten()
    }

    /// Range of the closest retained beam strictly before `beam`.
    pub fn previous_retained(&self, beam: usize) -> Option<f64> {
        self.ranges[..beam.min(self.ranges.len())]
            .iter()
            .rev()
            .find_map(|r| *r)
    }

    /// Range of the closest retained beam strictly after `beam`.
    pub fn next_retained(&self, beam: usize) -> Option<f64> {
        self.ranges.get(beam + 1..)?.iter().find_map(|r| *r)
    }

    pub fn retained_count(&self) -> usize {
        self.ranges.iter().filter(|r| r.is_some()).count()
    }
}

/// A ground-truth person position for one scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonAnnotation {
    pub person_id: String,
    pub position: Point2D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCluster {
    pub scan_id: String,
    pub points: Vec<Point2D>,
    pub beam_indices: Vec<usize>,
    pub centroid: Point2D,
    pub label: Option<Label>,
}

impl PointCluster {
    fn from_run(scan_id: &str, run: Vec<(usize, Point2D)>) -> Self {
        let (beam_indices, points): (Vec<usize>, Vec<Point2D>) = run.into_iter().unzip();
        let centroid = Point2D::mean(&points).expect("clusters are never empty");
        Self {
            scan_id: scan_id.to_owned(),
            points,
            beam_indices,
            centroid,
            label: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_beam(&self) -> usize {
        self.beam_indices[0]
    }

    pub fn last_beam(&self) -> usize {
        *self.beam_indices.last().expect("clusters are never empty")
    }
}

/// Segments a scan into clusters by jump distance.
///
/// Out-of-range beams are dropped before segmentation; the gap test is then
/// applied to each pair of consecutive retained points.
pub fn cluster_scan(scan: &LaserScan, jump_threshold: f64) -> Result<Vec<PointCluster>> {
    if !(jump_threshold > 0.0) {
        return Err(Error::invalid(format!(
            "jump_threshold must be > 0, got {jump_threshold}"
        )));
    }
    let mut clusters = Vec::new();
    let mut run: Vec<(usize, Point2D)> = Vec::new();
    for beam in 0..scan.len() {
        let Some(p) = scan.point(beam) else { continue };
        if let Some(&(_, last)) = run.last() {
            if last.dist(p) > jump_threshold {
                clusters.push(PointCluster::from_run(&scan.scan_id, std::mem::take(&mut run)));
            }
        }
        run.push((beam, p));
    }
    if !run.is_empty() {
        clusters.push(PointCluster::from_run(&scan.scan_id, run));
    }
    Ok(clusters)
}

/// Marks up to two clusters per person as legs.
///
/// Candidate (person, cluster) pairs closer than [`LEG_MATCH_RADIUS`] are
/// assigned greedily in increasing distance; a cluster is claimed at most
/// once and a person claims at most two clusters. Equal distances fall back
/// to beam order, then annotation order.
pub fn label_clusters(mut clusters: Vec<PointCluster>, annotations: &[PersonAnnotation]) -> Vec<PointCluster> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, person) in annotations.iter().enumerate() {
        for (ci, c) in clusters.iter().enumerate() {
            let d = c.centroid.dist(person.position);
            if d < LEG_MATCH_RADIUS {
                pairs.push((d, ci, pi));
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| clusters[a.1].first_beam().cmp(&clusters[b.1].first_beam()))
            .then_with(|| a.2.cmp(&b.2))
    });

    let mut claimed = vec![false; clusters.len()];
    let mut legs_per_person = vec![0u8; annotations.len()];
    for (_, ci, pi) in pairs {
        if !claimed[ci] && legs_per_person[pi] < 2 {
            claimed[ci] = true;
            legs_per_person[pi] += 1;
        }
    }
    for (c, leg) in clusters.iter_mut().zip(claimed) {
        c.label = Some(if leg { Label::Leg } else { Label::NonLeg });
    }
    clusters
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan(ranges: Vec<Option<f64>>, inc: f64) -> LaserScan {
        LaserScan::new("t", 0.0, inc, 30.0, ranges).unwrap()
    }

    // Reference segmentation: collect all retained points, then cut at every
    // consecutive pair whose gap exceeds the threshold.
    fn brute_force_sizes(scan: &LaserScan, thr: f64) -> Vec<usize> {
        let pts: Vec<Point2D> = (0..scan.len()).filter_map(|i| scan.point(i)).collect();
        if pts.is_empty() {
            return vec![];
        }
        let cuts: Vec<usize> = (1..pts.len()).filter(|&i| pts[i - 1].dist(pts[i]) > thr).collect();
        let mut bounds = vec![0];
        bounds.extend(cuts);
        bounds.push(pts.len());
        bounds.windows(2).map(|w| w[1] - w[0]).collect()
    }

    #[test]
    fn no_finite_ranges_gives_no_clusters() {
        let s = scan(vec![None; 10], 0.01);
        assert!(cluster_scan(&s, 0.13).unwrap().is_empty());
    }

    #[test]
    fn three_close_points_form_one_cluster() {
        // Beams at angle 0 only differ by range, so points lie on the x axis.
        let s = LaserScan::new("t", 0.0, 1e-12, 30.0, vec![Some(1.0), Some(1.05), Some(1.10)]).unwrap();
        let c = cluster_scan(&s, 0.13).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].len(), 3);
    }

    #[test]
    fn depth_jump_splits_seven_beams_four_and_three() {
        let mut ranges = vec![Some(2.0); 7];
        for r in ranges.iter_mut().skip(4) {
            *r = Some(2.5);
        }
        let s = scan(ranges, 0.01);
        let sizes: Vec<usize> = cluster_scan(&s, 0.13).unwrap().iter().map(|c| c.len()).collect();
        assert_eq!(sizes, brute_force_sizes(&s, 0.13));
        assert_eq!(sizes, vec![4, 3]);
    }

    #[test]
    fn out_of_range_beam_keeps_close_neighbours_together() {
        let s = scan(vec![Some(2.0), None, Some(2.0)], 0.01);
        let c = cluster_scan(&s, 0.13).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].beam_indices, vec![0, 2]);
    }

    #[test]
    fn rejects_non_positive_threshold() {
        let s = scan(vec![Some(1.0)], 0.01);
        assert!(cluster_scan(&s, 0.0).is_err());
    }

    #[test]
    fn scan_validation() {
        assert!(LaserScan::new("x", 0.0, 0.01, 5.0, vec![]).is_err());
        assert!(LaserScan::new("x", 0.0, 0.0, 5.0, vec![Some(1.0)]).is_err());
        assert!(LaserScan::new("x", 0.0, 0.01, 5.0, vec![Some(6.0)]).is_err());
        assert!(LaserScan::new("x", 0.0, 0.01, 5.0, vec![Some(-0.1)]).is_err());
    }

    fn cluster_at(p: Point2D, beam: usize) -> PointCluster {
        PointCluster::from_run("t", vec![(beam, p)])
    }

    fn person(x: f64, y: f64) -> PersonAnnotation {
        PersonAnnotation { person_id: "p".into(), position: Point2D::new(x, y) }
    }

    #[test]
    fn labels_without_annotations_are_all_non_leg() {
        let cs = vec![cluster_at(Point2D::new(1.0, 0.0), 0), cluster_at(Point2D::new(2.0, 0.0), 1)];
        let out = label_clusters(cs, &[]);
        assert!(out.iter().all(|c| c.label == Some(Label::NonLeg)));
    }

    #[test]
    fn two_nearest_clusters_under_half_meter_become_legs() {
        let cs = vec![
            cluster_at(Point2D::new(2.45, 0.0), 0),
            cluster_at(Point2D::new(2.2, 0.0), 1),
            cluster_at(Point2D::new(2.3, 0.0), 2),
        ];
        let out = label_clusters(cs, &[person(2.0, 0.0)]);
        let labels: Vec<_> = out.iter().map(|c| c.label.unwrap()).collect();
        assert_eq!(labels, vec![Label::NonLeg, Label::Leg, Label::Leg]);
    }

    #[test]
    fn cluster_beyond_radius_is_not_a_leg() {
        let out = label_clusters(vec![cluster_at(Point2D::new(2.6, 0.0), 0)], &[person(2.0, 0.0)]);
        assert_eq!(out[0].label, Some(Label::NonLeg));
    }

    #[test]
    fn contested_cluster_goes_to_nearer_person() {
        let cs = vec![cluster_at(Point2D::new(0.0, 0.0), 0)];
        let out = label_clusters(cs, &[person(0.3, 0.0), person(0.1, 0.0)]);
        assert_eq!(out.iter().filter(|c| c.label == Some(Label::Leg)).count(), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn segmentation_is_sound(
                ranges in proptest::collection::vec(proptest::option::weighted(0.85, 0.5f64..8.0), 1..200),
                thr in 0.02f64..0.5,
            ) {
                let s = LaserScan::new("p", -1.0, 0.005, 10.0, ranges).unwrap();
                let clusters = cluster_scan(&s, thr).unwrap();
                let total: usize = clusters.iter().map(|c| c.len()).sum();
                prop_assert_eq!(total, s.retained_count());
                for c in &clusters {
                    prop_assert!(c.beam_indices.windows(2).all(|w| w[0] < w[1]));
                    prop_assert!(c.points.windows(2).all(|w| w[0].dist(w[1]) <= thr));
                }
                for pair in clusters.windows(2) {
                    let a = *pair[0].points.last().unwrap();
                    let b = pair[1].points[0];
                    prop_assert!(a.dist(b) > thr);
                    prop_assert!(pair[0].last_beam() < pair[1].first_beam());
                }
            }

            #[test]
            fn at_most_two_legs_per_person(
                xs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..30),
                people in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 0..5),
            ) {
                let cs: Vec<_> = xs.iter().enumerate().map(|(i, &(x, y))| cluster_at(Point2D::new(x, y), i)).collect();
                let anns: Vec<_> = people.iter().map(|&(x, y)| person(x, y)).collect();
                let out = label_clusters(cs, &anns);
                let legs = out.iter().filter(|c| c.label == Some(Label::Leg)).count();
                prop_assert!(legs <= 2 * anns.len());
            }
        }
    }
}
