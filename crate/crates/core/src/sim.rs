//! Ray-cast scene simulator and range-noise injection.
//!
//! Legs are circles (two per person, placed either side of the person's
//! trajectory point), obstacles are circles or wall segments. Beam ranges are
//! the nearest positive ray hit; anything beyond `max_range` is reported as
//! out of range.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan::{LaserScan, PersonAnnotation, Point2D};
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Obstacle {
    Circle { center: Point2D, radius: f64 },
    Segment { a: Point2D, b: Point2D },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonTrack {
    /// One position per frame; frames beyond the end wrap around.
    pub trajectory: Vec<Point2D>,
    pub leg_separation: f64,
    pub leg_radius: f64,
    /// Fore-aft leg swing amplitude (meters) along the walking direction.
    #[serde(default)]
    pub gait_amplitude: f64,
}

impl PersonTrack {
    fn position(&self, frame: usize) -> Point2D {
        self.trajectory[frame % self.trajectory.len()]
    }

    /// Leg centers for a frame.
    pub fn legs(&self, frame: usize) -> [Point2D; 2] {
        let n = self.trajectory.len();
        let p = self.position(frame);
        let next = self.trajectory[(frame + 1) % n];
        let prev = self.trajectory[(frame + n - 1) % n];
        let mut heading = next - p;
        if heading.norm() < 1e-9 {
            heading = p - prev;
        }
        if heading.norm() < 1e-9 {
            // Standing still: legs side by side as seen from the scanner.
            heading = p;
        }
        let h = heading.scale(1.0 / heading.norm().max(1e-12));
        let side = Point2D::new(-h.y, h.x).scale(self.leg_separation / 2.0);
        let swing = h.scale(self.gait_amplitude * (0.6 * frame as f64).sin());
        [p + side + swing, p - side - swing]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub beam_count: usize,
    /// Total field of view, centered on the +x axis.
    pub angle_span: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub persons: Vec<PersonTrack>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
}

impl SceneConfig {
    pub fn empty(beam_count: usize, angle_span: f64, max_range: f64) -> Self {
        Self {
            beam_count,
            angle_span,
            max_range,
            range_noise_sigma: 0.0,
            seed: 0,
            persons: Vec::new(),
            obstacles: Vec::new(),
        }
    }

    pub fn angle_min(&self) -> f64 {
        -self.angle_span / 2.0
    }

    pub fn angle_increment(&self) -> f64 {
        if self.beam_count > 1 {
            self.angle_span / (self.beam_count - 1) as f64
        } else {
            self.angle_span.max(f64::EPSILON)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_count == 0 {
            return Err(Error::invalid("scene: beam_count must be positive"));
        }
        if !(self.angle_span > 0.0 && self.angle_span <= 2.0 * PI) {
            return Err(Error::invalid("scene: angle_span must lie in (0, 2π]"));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::invalid("scene: max_range must be finite and > 0"));
        }
        if !(self.range_noise_sigma >= 0.0) {
            return Err(Error::invalid("scene: range_noise_sigma must be >= 0"));
        }
        for (i, person) in self.persons.iter().enumerate() {
            if person.trajectory.is_empty() {
                return Err(Error::invalid(format!("scene: person {i} has an empty trajectory")));
            }
            if !(person.leg_radius > 0.0) {
                return Err(Error::invalid(format!("scene: person {i} leg_radius must be > 0")));
            }
            if person.trajectory.iter().any(|p| !p.is_finite()) {
                return Err(Error::invalid(format!("scene: person {i} trajectory is not finite")));
            }
            for frame in 0..person.trajectory.len() {
                for leg in person.legs(frame) {
                    if leg.norm() <= person.leg_radius {
                        return Err(Error::invalid(format!(
                            "scene: person {i} leg circle covers the scanner origin at frame {frame}"
                        )));
                    }
                }
            }
        }
        for (i, ob) in self.obstacles.iter().enumerate() {
            if let Obstacle::Circle { center, radius } = ob {
                if !(*radius > 0.0) || center.norm() <= *radius {
                    return Err(Error::invalid(format!(
                        "scene: obstacle {i} must have radius > 0 and exclude the scanner origin"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn ray_circle(dir: Point2D, center: Point2D, radius: f64) -> Option<f64> {
    let b = dir.dot(center);
    let c = center.dot(center) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let t0 = b - s;
    if t0 > 0.0 {
        return Some(t0);
    }
    let t1 = b + s;
    (t1 > 0.0).then_some(t1)
}

fn ray_segment(dir: Point2D, a: Point2D, b: Point2D) -> Option<f64> {
    let e = b - a;
    let denom = dir.cross(e);
    if denom.abs() < 1e-15 {
        return None;
    }
    // origin + t·dir = a + s·e
    let t = a.cross(e) / denom;
    let s = a.cross(dir) / denom;
    (t > 0.0 && (0.0..=1.0).contains(&s)).then_some(t)
}

/// Renders one frame of a scene. Deterministic in `(config, frame_index)`.
pub fn generate_scene(config: &SceneConfig, frame_index: usize) -> Result<(LaserScan, Vec<PersonAnnotation>)> {
    config.validate()?;
    let mut circles: Vec<(Point2D, f64)> = Vec::new();
    let mut annotations = Vec::with_capacity(config.persons.len());
    for (i, person) in config.persons.iter().enumerate() {
        for leg in person.legs(frame_index) {
            circles.push((leg, person.leg_radius));
        }
        annotations.push(PersonAnnotation {
            person_id: format!("person{i}"),
            position: person.position(frame_index),
        });
    }
    let mut segments = Vec::new();
    for ob in &config.obstacles {
        match *ob {
            Obstacle::Circle { center, radius } => circles.push((center, radius)),
            Obstacle::Segment { a, b } => segments.push((a, b)),
        }
    }

    let angle_min = config.angle_min();
    let inc = config.angle_increment();
    let ranges = (0..config.beam_count)
        .map(|beam| {
            let a = angle_min + beam as f64 * inc;
            let dir = Point2D::new(a.cos(), a.sin());
            let hit = circles
                .iter()
                .filter_map(|&(c, r)| ray_circle(dir, c, r))
                .chain(segments.iter().filter_map(|&(p, q)| ray_segment(dir, p, q)))
                .fold(f64::INFINITY, f64::min);
            (hit <= config.max_range).then_some(hit)
        })
        .collect();

    let clean = LaserScan {
        scan_id: format!("s{}-f{frame_index}", config.seed),
        angle_min,
        angle_increment: inc,
        max_range: config.max_range,
        ranges,
    };
    let scan = if config.range_noise_sigma > 0.0 {
        let noise_seed = derive_seed(config.seed, &[0x6e6f697365, frame_index as u64]);
        inject_gaussian_noise(&clean, config.range_noise_sigma, noise_seed)?
    } else {
        clean
    };
    Ok((scan, annotations))
}

/// Perturbs every finite range with independent zero-mean Gaussian noise,
/// clamped to `[0, max_range]`.
pub fn inject_gaussian_noise(scan: &LaserScan, sigma: f64, seed: u64) -> Result<LaserScan> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("noise sigma must be finite and >= 0, got {sigma}")));
    }
    let mut out = scan.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut rng = rng_from(seed);
    for r in out.ranges.iter_mut().flatten() {
        *r = (*r + normal.sample(&mut rng)).clamp(0.0, scan.max_range);
    }
    Ok(out)
}

/// Parameters for [`random_room`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub beam_count: usize,
    pub angle_span: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub frames: usize,
    pub max_persons: usize,
    /// Room side lengths are drawn from this interval (meters).
    pub room_size: (f64, f64),
}

impl Default for RoomSpec {
    fn default() -> Self {
        Self {
            beam_count: 1080,
            angle_span: 270f64.to_radians(),
            max_range: 30.0,
            range_noise_sigma: 0.01,
            frames: 20,
            max_persons: 4,
            room_size: (5.0, 14.0),
        }
    }
}

/// Builds a random rectangular room with clutter and walking people.
///
/// Clutter includes thin furniture legs and posts whose cross-sections look
/// like human legs, so the resulting data is not trivially separable.
pub fn random_room(spec: &RoomSpec, seed: u64) -> SceneConfig {
    let mut rng = rng_from(derive_seed(seed, &[0x726f6f6d]));
    let w = rng.gen_range(spec.room_size.0..=spec.room_size.1);
    let h = rng.gen_range(spec.room_size.0..=spec.room_size.1);
    // Scanner at the origin; the room is placed around it.
    let x0 = -rng.gen_range(0.5..(w * 0.5).max(0.6));
    let y0 = -rng.gen_range(0.5..(h - 0.5).max(0.6));
    let (x1, y1) = (x0 + w, y0 + h);
    let corners = [
        Point2D::new(x0, y0),
        Point2D::new(x1, y0),
        Point2D::new(x1, y1),
        Point2D::new(x0, y1),
    ];
    let mut obstacles = Vec::new();
    for i in 0..4 {
        let (a, b) = (corners[i], corners[(i + 1) % 4]);
        if rng.gen_bool(0.4) {
            // doorway
            let t = rng.gen_range(0.2..0.7);
            let gap = rng.gen_range(0.8..1.6) / a.dist(b);
            let mid1 = a + (b - a).scale(t);
            let mid2 = a + (b - a).scale((t + gap).min(1.0));
            obstacles.push(Obstacle::Segment { a, b: mid1 });
            obstacles.push(Obstacle::Segment { a: mid2, b });
        } else {
            obstacles.push(Obstacle::Segment { a, b });
        }
    }

    let inside = |rng: &mut rand_chacha::ChaCha8Rng, margin: f64| loop {
        let p = Point2D::new(
            rng.gen_range(x0 + margin..x1 - margin),
            rng.gen_range(y0 + margin..y1 - margin),
        );
        if p.norm() > 0.8 {
            break p;
        }
    };

    let clutter = rng.gen_range(4..12);
    for _ in 0..clutter {
        match rng.gen_range(0..4) {
            0 => {
                // table or chair: four thin legs on a rectangle
                let c = inside(&mut rng, 0.8);
                let (hx, hy) = (rng.gen_range(0.2..0.6), rng.gen_range(0.2..0.45));
                let r = rng.gen_range(0.012..0.035);
                for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
                    obstacles.push(Obstacle::Circle {
                        center: Point2D::new(c.x + sx * hx, c.y + sy * hy),
                        radius: r,
                    });
                }
            }
            1 => {
                let c = inside(&mut rng, 0.5);
                obstacles.push(Obstacle::Circle { center: c, radius: rng.gen_range(0.1..0.18) });
            }
            2 => {
                let c = inside(&mut rng, 0.6);
                obstacles.push(Obstacle::Circle { center: c, radius: rng.gen_range(0.18..0.45) });
            }
            _ => {
                let c = inside(&mut rng, 0.9);
                let (hx, hy) = (rng.gen_range(0.15..0.6), rng.gen_range(0.15..0.6));
                let rect = [
                    Point2D::new(c.x - hx, c.y - hy),
                    Point2D::new(c.x + hx, c.y - hy),
                    Point2D::new(c.x + hx, c.y + hy),
                    Point2D::new(c.x - hx, c.y + hy),
                ];
                for i in 0..4 {
                    obstacles.push(Obstacle::Segment { a: rect[i], b: rect[(i + 1) % 4] });
                }
            }
        }
    }
    obstacles.retain(|ob| match ob {
        Obstacle::Circle { center, radius } => center.norm() > radius + 0.3,
        Obstacle::Segment { .. } => true,
    });

    let n_persons = rng.gen_range(1..=spec.max_persons.max(1));
    let frames = spec.frames.max(1);
    let mut persons = Vec::with_capacity(n_persons);
    for _ in 0..n_persons {
        let leg_radius = rng.gen_range(0.045..0.08);
        let leg_separation = rng.gen_range(0.18..0.36);
        let gait_amplitude = rng.gen_range(0.0..0.22);
        let speed = rng.gen_range(0.0..0.12);
        let heading = rng.gen_range(0.0..2.0 * PI);
        let mut v = Point2D::new(heading.cos(), heading.sin()).scale(speed);
        let mut p = inside(&mut rng, 0.6);
        let mut trajectory = Vec::with_capacity(frames);
        for _ in 0..frames {
            trajectory.push(p);
            let mut next = p + v;
            if next.x < x0 + 0.5 || next.x > x1 - 0.5 {
                v.x = -v.x;
            }
            if next.y < y0 + 0.5 || next.y > y1 - 0.5 {
                v.y = -v.y;
            }
            next = p + v;
            // keep away from the scanner
            if next.norm() < 0.6 {
                v = v.scale(-1.0);
                next = p + v;
            }
            p = next;
        }
        persons.push(PersonTrack { trajectory, leg_separation, leg_radius, gait_amplitude });
    }

    SceneConfig {
        beam_count: spec.beam_count,
        angle_span: spec.angle_span,
        max_range: spec.max_range,
        range_noise_sigma: spec.range_noise_sigma,
        seed,
        persons,
        obstacles,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_leg_scene() -> SceneConfig {
        let mut cfg = SceneConfig::empty(721, PI / 2.0, 10.0);
        cfg.obstacles.push(Obstacle::Circle { center: Point2D::new(2.0, 0.0), radius: 0.06 });
        cfg
    }

    #[test]
    fn empty_scene_is_all_out_of_range() {
        let cfg = SceneConfig::empty(360, PI, 10.0);
        let (scan, anns) = generate_scene(&cfg, 0).unwrap();
        assert!(scan.ranges.iter().all(Option::is_none));
        assert!(anns.is_empty());
    }

    #[test]
    fn single_circle_matches_analytic_intersection() {
        let cfg = single_leg_scene();
        let (scan, _) = generate_scene(&cfg, 0).unwrap();
        let half_angle = (0.06f64 / 2.0).asin();
        let mut hits = 0;
        for (i, r) in scan.ranges.iter().enumerate() {
            let a = scan.bearing(i);
            // Analytic oracle: ray hits iff |2 sin a| <= 0.06, range 2cos a - sqrt(r² - 4 sin² a)
            let perp = 2.0 * a.sin();
            if a.abs() < half_angle - 1e-9 {
                let expected = 2.0 * a.cos() - (0.06f64.powi(2) - perp * perp).sqrt();
                let got = r.expect("beam should hit the circle");
                assert!((got - expected).abs() < 1e-12);
                assert!((2.0 - 0.06 - 1e-12..=2.0).contains(&got));
                hits += 1;
            } else if a.abs() > half_angle + 1e-9 {
                assert!(r.is_none(), "beam {i} should miss");
            }
        }
        assert!(hits > 3);
    }

    #[test]
    fn generation_is_deterministic() {
        let mut cfg = random_room(&RoomSpec::default(), 11);
        cfg.range_noise_sigma = 0.02;
        let a = generate_scene(&cfg, 3).unwrap();
        let b = generate_scene(&cfg, 3).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&cfg, 4).unwrap();
        assert_ne!(a.0.ranges, c.0.ranges);
    }

    #[test]
    fn rejects_leg_over_origin() {
        let mut cfg = SceneConfig::empty(10, PI, 10.0);
        cfg.persons.push(PersonTrack {
            trajectory: vec![Point2D::new(0.05, 0.0)],
            leg_separation: 0.0,
            leg_radius: 0.06,
            gait_amplitude: 0.0,
        });
        assert!(generate_scene(&cfg, 0).is_err());
    }

    #[test]
    fn annotations_follow_trajectory() {
        let mut cfg = SceneConfig::empty(10, PI, 10.0);
        cfg.persons.push(PersonTrack {
            trajectory: vec![Point2D::new(2.0, 0.0), Point2D::new(2.0, 0.1)],
            leg_separation: 0.2,
            leg_radius: 0.05,
            gait_amplitude: 0.0,
        });
        let (_, anns) = generate_scene(&cfg, 1).unwrap();
        assert_eq!(anns[0].position, Point2D::new(2.0, 0.1));
        let legs = cfg.persons[0].legs(0);
        assert!((legs[0].dist(legs[1]) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn zero_sigma_noise_is_identity() {
        let (scan, _) = generate_scene(&single_leg_scene(), 0).unwrap();
        assert_eq!(inject_gaussian_noise(&scan, 0.0, 9).unwrap(), scan);
    }

    #[test]
    fn noise_has_requested_moments() {
        let n = 100_000;
        let scan = LaserScan::new("n", 0.0, 1e-5, 10.0, vec![Some(5.0); n]).unwrap();
        let sigma = 0.01;
        let noisy = inject_gaussian_noise(&scan, sigma, 42).unwrap();
        let d: Vec<f64> = noisy.ranges.iter().map(|r| r.unwrap() - 5.0).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let std = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt());
        assert!((std - sigma).abs() < 0.02 * sigma);
        assert_eq!(noisy, inject_gaussian_noise(&scan, sigma, 42).unwrap());
    }

    #[test]
    fn noise_leaves_out_of_range_beams() {
        let scan = LaserScan::new("n", 0.0, 0.1, 10.0, vec![None, Some(9.999), None]).unwrap();
        let noisy = inject_gaussian_noise(&scan, 0.5, 1).unwrap();
        assert!(noisy.ranges[0].is_none() && noisy.ranges[2].is_none());
        assert!(noisy.ranges[1].unwrap() <= 10.0);
    }

    #[test]
    fn random_rooms_validate() {
        for seed in 0..20 {
            random_room(&RoomSpec::default(), seed).validate().unwrap();
        }
    }
}
