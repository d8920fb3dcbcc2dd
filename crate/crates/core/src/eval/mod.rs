//! Evaluation: detection metrics, precision-recall sweeps, pipeline latency
//! benchmarking and the feature-noise study.

mod bench;
mod metrics;
mod noise;
mod pr;

pub use bench::{benchmark, BenchReport, StageTimings};
pub use metrics::{confusion_and_rates, ConfusionCounts};
pub use noise::{match_clusters, moments, noise_study, FeatureErrorSummary, Histogram, Moments, NoiseLevelReport, NoiseReport, NoiseStudyOptions, HISTOGRAM_BINS};
pub use pr::{beta_grid, pr_curve, pr_curve_from_probabilities, PrCurve, PrPoint, PR_BETA_MAX, PR_BETA_MIN, PR_POINTS};
