#![allow(dead_code)]

use marf::features::{feature_stats, ConfidenceCenter, ConfidenceReport, FeatureStats};
use marf::{FeatureVector, Label, FEATURE_COUNT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Noisy two-class vectors: legs are separated from clutter mostly along
/// the first few features, with some overlap.
pub fn random_vectors(n: usize, seed: u64) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let leg = rng.gen_bool(0.4);
            let mut values = [0.0; FEATURE_COUNT];
            for (j, v) in values.iter_mut().enumerate() {
                let shift = if leg && j < 5 { 0.6 } else { 0.0 };
                *v = rng.gen_range(0.0..1.0) * (1.0 + j as f64) + shift;
            }
            // a discrete-ish feature
            values[4] = (values[4] * 3.0).round();
            values[11] = rng.gen_range(0.2..12.0);
            FeatureVector {
                values,
                label: Some(if leg { Label::Leg } else { Label::NonLeg }),
                scan_id: format!("r{i}"),
            }
        })
        .collect()
}

pub fn random_point(rng: &mut ChaCha8Rng) -> [f64; FEATURE_COUNT] {
    let mut x = [0.0; FEATURE_COUNT];
    for (j, v) in x.iter_mut().enumerate() {
        *v = rng.gen_range(-0.5..1.5) * (1.0 + j as f64);
    }
    x[11] = rng.gen_range(0.0..14.0);
    x
}

pub fn stats_and_confidence(data: &[FeatureVector]) -> (FeatureStats, ConfidenceReport) {
    (
        feature_stats(data).unwrap(),
        ConfidenceReport::from_labeled(data, ConfidenceCenter::PositiveMean).unwrap(),
    )
}

/// Labelled vectors from rendered rooms (1080 beams, 1 cm range noise),
/// four frames per room.
pub fn synthetic_dataset(rooms: usize, seed: u64) -> Vec<FeatureVector> {
    let spec = marf::sim::RoomSpec { frames: 4, ..marf::sim::RoomSpec::default() };
    let scans = marf::dataset::synthesize_scans(&spec, rooms, seed).unwrap();
    marf::dataset::featurize(&scans, marf::scan::DEFAULT_JUMP_THRESHOLD).unwrap()
}
