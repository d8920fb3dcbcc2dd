use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::extract_features;
use crate::marf::MarfModel;
use crate::scan::{cluster_scan, LaserScan};

pub const MIN_BENCH_SCANS: usize = 10;
pub const MIN_BENCH_REPETITIONS: usize = 3;

/// Per-scan latency summary for one stage, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub median: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub scans: usize,
    pub repetitions: usize,
    /// Index of the repetition reported (lowest median total latency).
    pub best_repetition: usize,
    pub clustering: StageTimings,
    pub features: StageTimings,
    pub prediction: StageTimings,
    pub total: StageTimings,
    pub scans_per_second: f64,
    pub mean_clusters_per_scan: f64,
    pub total_node_visits: u64,
    pub node_visits_per_prediction: f64,
    pub concurrent_tree_evaluation: bool,
}

struct Run {
    clustering: Vec<f64>,
    features: Vec<f64>,
    prediction: Vec<f64>,
    total: Vec<f64>,
    clusters: usize,
    visits: u64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    // nearest-rank
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn summarize(mut xs: Vec<f64>) -> StageTimings {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let median = if n == 0 {
        0.0
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    };
    StageTimings { median, p95: quantile(&xs, 0.95) }
}

fn run_once(model: &MarfModel, scans: &[LaserScan], jump: f64) -> Result<Run> {
    let mut run = Run {
        clustering: Vec::with_capacity(scans.len()),
        features: Vec::with_capacity(scans.len()),
        prediction: Vec::with_capacity(scans.len()),
        total: Vec::with_capacity(scans.len()),
        clusters: 0,
        visits: 0,
    };
    for scan in scans {
        let t0 = Instant::now();
        let clusters = cluster_scan(scan, jump)?;
        let t1 = Instant::now();
        let vectors: Vec<_> = clusters.iter().map(|c| extract_features(c, scan)).collect();
        let t2 = Instant::now();
        for v in &vectors {
            let p = model.predict(v);
            run.visits += p.visits as u64;
        }
        let t3 = Instant::now();
        run.clusters += clusters.len();
        run.clustering.push((t1 - t0).as_secs_f64());
        run.features.push((t2 - t1).as_secs_f64());
        run.prediction.push((t3 - t2).as_secs_f64());
        run.total.push((t3 - t0).as_secs_f64());
    }
    Ok(run)
}

/// Times clustering, feature extraction and prediction per scan on the
/// calling thread. Each repetition processes every scan; the repetition with
/// the lowest median total is reported.
pub fn benchmark(model: &MarfModel, scans: &[LaserScan], repetitions: usize, jump_threshold: f64) -> Result<BenchReport> {
    if scans.len() < MIN_BENCH_SCANS {
        return Err(Error::invalid(format!("benchmark needs at least {MIN_BENCH_SCANS} scans, got {}", scans.len())));
    }
    if repetitions < MIN_BENCH_REPETITIONS {
        return Err(Error::invalid(format!(
            "benchmark needs at least {MIN_BENCH_REPETITIONS} repetitions, got {repetitions}"
        )));
    }
    for s in scans {
        s.validate()?;
    }
    let mut best: Option<(usize, f64, Run)> = None;
    for rep in 0..repetitions {
        let run = run_once(model, scans, jump_threshold)?;
        let median = summarize(run.total.clone()).median;
        if best.as_ref().is_none_or(|(_, m, _)| median < *m) {
            best = Some((rep, median, run));
        }
    }
    let (best_repetition, _, run) = best.expect("at least one repetition");
    let wall: f64 = run.total.iter().sum();
    Ok(BenchReport {
        scans: scans.len(),
        repetitions,
        best_repetition,
        clustering: summarize(run.clustering),
        features: summarize(run.features),
        prediction: summarize(run.prediction),
        total: summarize(run.total),
        scans_per_second: if wall > 0.0 { scans.len() as f64 / wall } else { f64::INFINITY },
        mean_clusters_per_scan: run.clusters as f64 / scans.len() as f64,
        total_node_visits: run.visits,
        node_visits_per_prediction: if run.clusters > 0 { run.visits as f64 / run.clusters as f64 } else { 0.0 },
        concurrent_tree_evaluation: false,
    })
}
