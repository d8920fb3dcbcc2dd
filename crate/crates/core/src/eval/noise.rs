use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureId, FEATURE_COUNT};
use crate::scan::{cluster_scan, PointCluster};
use crate::seed::derive_seed;
use crate::sim::{generate_scene, inject_gaussian_noise, SceneConfig};

pub const HISTOGRAM_BINS: usize = 41;

/// Central moments of an error sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Population moments. Skewness and kurtosis are 0 for a constant sample.
pub fn moments(xs: &[f64]) -> Moments {
    let n = xs.len();
    if n == 0 {
        return Moments::default();
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let scale = mean.abs().max(1.0);
    let (skewness, excess_kurtosis) = if m2.sqrt() <= 1e-15 * scale {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    Moments { count: n, mean, std: m2.sqrt(), skewness, excess_kurtosis }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges, equal width over the sample range.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn build(xs: &[f64], bins: usize) -> Histogram {
        let bins = bins.max(1);
        let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        if xs.is_empty() {
            return Histogram { edges: vec![0.0, 0.0], counts: vec![0] };
        }
        if hi <= lo {
            return Histogram { edges: vec![lo, hi], counts: vec![xs.len() as u64] };
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
        let mut counts = vec![0u64; bins];
        for &x in xs {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Histogram { edges, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureErrorSummary {
    pub feature: FeatureId,
    /// Count-valued and occlusion features are not expected to respond to small noise.
    pub discrete: bool,
    pub moments: Moments,
    pub zero_fraction: f64,
    pub integer_valued: bool,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevelReport {
    pub sigma: f64,
    pub frames: usize,
    pub frames_skipped: usize,
    pub clusters_matched: usize,
    pub features: Vec<FeatureErrorSummary>,
}

impl NoiseLevelReport {
    pub fn feature(&self, id: FeatureId) -> &FeatureErrorSummary {
        &self.features[id.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub seed: u64,
    pub levels: Vec<NoiseLevelReport>,
}

/// Pairs each clean cluster with the noisy cluster sharing the most beams;
/// ties go to the nearer centroid. Returns `None` unless the pairing is a
/// bijection.
pub fn match_clusters(clean: &[PointCluster], noisy: &[PointCluster], beam_count: usize) -> Option<Vec<usize>> {
    if clean.len() != noisy.len() {
        return None;
    }
    let mut owner = vec![usize::MAX; beam_count];
    for (j, c) in noisy.iter().enumerate() {
        for &b in &c.beam_indices {
            if b < beam_count {
                owner[b] = j;
            }
        }
    }
    let mut taken = vec![false; noisy.len()];
    let mut pairs = Vec::with_capacity(clean.len());
    let mut overlap: Vec<(usize, usize)> = Vec::new();
    for c in clean {
        overlap.clear();
        for &b in &c.beam_indices {
            let j = owner.get(b).copied().unwrap_or(usize::MAX);
            if j == usize::MAX {
                continue;
            }
            match overlap.iter_mut().find(|(k, _)| *k == j) {
                Some(e) => e.1 += 1,
                None => overlap.push((j, 1)),
            }
        }
        let best = overlap.iter().copied().max_by(|a, b| {
            a.1.cmp(&b.1).then_with(|| {
                let da = c.centroid.dist(noisy[a.0].centroid);
                let db = c.centroid.dist(noisy[b.0].centroid);
                db.total_cmp(&da)
            })
        })?;
        if taken[best.0] {
            return None;
        }
        taken[best.0] = true;
        pairs.push(best.0);
    }
    Some(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudyOptions {
    pub jump_threshold: f64,
    pub seed: u64,
    /// Matched pairs whose clean cluster has fewer points are not accumulated.
    pub min_points: usize,
    pub bins: usize,
}

impl Default for NoiseStudyOptions {
    fn default() -> Self {
        Self { jump_threshold: crate::scan::DEFAULT_JUMP_THRESHOLD, seed: 0, min_points: 1, bins: HISTOGRAM_BINS }
    }
}

/// Per-feature error distributions (noisy minus clean) over `frames` frames
/// of `scene` rendered without noise, for each sigma.
pub fn noise_study(scene: &SceneConfig, sigmas: &[f64], frames: usize, opts: &NoiseStudyOptions) -> Result<NoiseReport> {
    let (jump_threshold, seed) = (opts.jump_threshold, opts.seed);
    if frames == 0 {
        return Err(Error::invalid("noise study needs at least one frame"));
    }
    if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::invalid(format!("noise sigma must be finite and non-negative, got {s}")));
    }
    let mut clean_scene = scene.clone();
    clean_scene.range_noise_sigma = 0.0;
    clean_scene.validate()?;

    let mut levels = Vec::with_capacity(sigmas.len());
    for (li, &sigma) in sigmas.iter().enumerate() {
        let mut errors: Vec<Vec<f64>> = vec![Vec::new(); FEATURE_COUNT];
        let mut skipped = 0;
        let mut matched = 0;
        for f in 0..frames {
            let (clean, _) = generate_scene(&clean_scene, f)?;
            let clean_clusters = cluster_scan(&clean, jump_threshold)?;
            if clean_clusters.is_empty() {
                return Err(Error::invalid(format!("scene produced no clusters at frame {f}")));
            }
            let noisy = inject_gaussian_noise(&clean, sigma, derive_seed(seed, &[li as u64, f as u64]))?;
            let noisy_clusters = cluster_scan(&noisy, jump_threshold)?;
            let Some(pairs) = match_clusters(&clean_clusters, &noisy_clusters, clean.len()) else {
                skipped += 1;
                continue;
            };
            for (c, &j) in clean_clusters.iter().zip(&pairs) {
                if c.len() < opts.min_points {
                    continue;
                }
                let a = extract_features(c, &clean);
                let b = extract_features(&noisy_clusters[j], &noisy);
                for (i, e) in errors.iter_mut().enumerate() {
                    e.push(b.values[i] - a.values[i]);
                }
            }
            matched += clean_clusters.iter().filter(|c| c.len() >= opts.min_points).count();
        }
        let features = FeatureId::ALL
            .iter()
            .zip(&errors)
            .map(|(&id, xs)| {
                let zeros = xs.iter().filter(|&&x| x == 0.0).count();
                FeatureErrorSummary {
                    feature: id,
                    discrete: id.is_discrete(),
                    moments: moments(xs),
                    zero_fraction: if xs.is_empty() { 0.0 } else { zeros as f64 / xs.len() as f64 },
                    integer_valued: xs.iter().all(|x| x.fract() == 0.0),
                    histogram: Histogram::build(xs, opts.bins),
                }
            })
            .collect();
        levels.push(NoiseLevelReport { sigma, frames, frames_skipped: skipped, clusters_matched: matched, features });
    }
    Ok(NoiseReport { seed, levels })
}
