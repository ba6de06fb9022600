//! Probability calibration toolkit built around feature-aware binning trees.
//!
//! The centerpiece is [`tree::MbctModel`]: an ensemble of greedily grown
//! binning trees whose nodes partition a calibration set by discrete feature
//! values and rescale predictions with a per-node linear factor. Splits are
//! chosen to minimize the multi-view calibration error ([`metrics::mvce`]),
//! the average partition calibration error over many random uniform-mass
//! divisions of the data.
//!
//! Around it:
//!
//! - [`calibrators`]: classical post-hoc baselines (Platt scaling, beta
//!   calibration, histogram binning, isotonic regression, scaling-binning)
//!   behind one [`calibrators::Calibrator`] trait.
//! - [`metrics`]: calibration-error and order-accuracy metrics (PCE, MVCE,
//!   ECE, ECE-sweep, TCE, PUD, BFGPCE, AUC, monotonicity classification).
//! - [`sim`]: a Monte-Carlo harness that measures how well each metric
//!   tracks the closed-form calibration error of synthetic scenarios with
//!   known ground truth.
//! - [`model`]: versioned serialization shared by all calibrators.
//!
//! Everything randomized takes an explicit seed and is reproducible bit for
//! bit across runs. Data-parallel inner loops (division sampling, candidate
//! split search, simulation experiments) run on rayon when the default
//! `parallel` feature is enabled and fall back to sequential execution
//! without it; results are identical either way.

pub mod calibrators;
pub mod data;
pub mod division;
mod exec;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sim;
pub mod tree;

use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty bin")]
    EmptyBin,
    #[error("degenerate division: need at least two bins ({n} samples, bin size {bin_size})")]
    DegenerateDivision { n: usize, bin_size: usize },
    #[error("sort key required for {0:?} divisions")]
    MissingSortKey(division::DivisionKind),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("TCE requires synthetic ground truth")]
    MissingTrueProb,
    #[error("AUC undefined: both classes must be present")]
    AucUndefined,
    #[error("PUD undefined: bin mean label is zero")]
    PudUndefined,
    #[error("degenerate label mean")]
    DegenerateLabelMean,
    #[error("single-class data: {0}")]
    SingleClass(String),
    #[error("subset count {k} exceeds bin size {n}")]
    SubsetCountTooLarge { k: usize, n: usize },
    #[error("feature schema mismatch: expected {expected} features, got {got}")]
    SchemaMismatch { expected: usize, got: usize },
}

/// Toolkit-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
