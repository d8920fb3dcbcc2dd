//! Shared fixtures for the pipeline benchmarks.

use marf::dataset::{featurize, synthesize_scans};
use marf::scan::DEFAULT_JUMP_THRESHOLD;
use marf::sim::RoomSpec;
use marf::{FeatureVector, LaserScan, MarfConfig, MarfModel};

pub struct Fixture {
    pub scans: Vec<LaserScan>,
    pub features: Vec<FeatureVector>,
    pub model: MarfModel,
}

/// Synthetic scans plus a model trained on a disjoint set of rooms.
pub fn fixture(trees_per_scale: usize) -> Fixture {
    let spec = RoomSpec { frames: 4, ..RoomSpec::default() };
    let train = synthesize_scans(&spec, 12, 1).expect("synthetic training scans");
    let train = featurize(&train, DEFAULT_JUMP_THRESHOLD).expect("training features");
    let mut config = MarfConfig { trees_per_scale: vec![trees_per_scale; 3], ..MarfConfig::default() };
    config.params.seed = 1;
    let model = marf::marf::train_marf(&train, &config).expect("training");

    let test = synthesize_scans(&spec, 5, 2).expect("synthetic test scans");
    let features = featurize(&test, DEFAULT_JUMP_THRESHOLD).expect("test features");
    Fixture { scans: test.into_iter().map(|(s, _)| s).collect(), features, model }
}
