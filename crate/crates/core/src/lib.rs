//! Leg detection in 2D laser scans with multi-scale adaptive-switch random
//! forests (MARF).
//!
//! The pipeline is: [`scan::cluster_scan`] segments a scan by jump distance,
//! [`features::extract_features`] describes each cluster with 17 geometric
//! features, and a [`marf::MarfModel`] classifies the descriptor with
//! distance-dependent forests of adaptive-switch trees ([`tree`]).
//! [`eval`] holds metrics, PR curves, the latency benchmark and the
//! feature-noise study; [`sim`] renders synthetic scans.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod marf;
pub mod model_io;
pub mod scan;
pub mod seed;
pub mod sim;
pub mod tree;

pub use error::{Error, Result};
pub use features::{FeatureId, FeatureVector, FEATURE_COUNT};
pub use marf::{MarfConfig, MarfModel};
pub use scan::{Label, LaserScan, Point2D, PointCluster};
pub use tree::{TrainParams, Tree, TreeKind};
