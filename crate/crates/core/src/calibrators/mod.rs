//! Classical post-hoc calibrators behind one interface.
//!
//! Scaling family (strictly monotonic, AUC-preserving): [`PlattParams`],
//! [`BetaParams`]. Binning family (non-individual, non-strictly monotonic):
//! [`BinTable`] histogram binning and [`ScalingBinning`]. In between,
//! [`IsotonicFit`] pool-adjacent-violators regression.
//!
//! Fitted calibrators are immutable; `apply` is a pure total function that
//! clamps out-of-range inputs to the nearest fitted region.

mod beta;
mod histogram;
mod isotonic;
mod logistic;
mod platt;
mod scaling_binning;

pub use beta::BetaParams;
pub use histogram::BinTable;
pub use isotonic::IsotonicFit;
pub use platt::PlattParams;
pub use scaling_binning::ScalingBinning;

use crate::data::Dataset;
use crate::{Error, Result};

/// A fitted post-hoc calibrator.
pub trait Calibrator {
    /// Calibrated probability for one prediction. Baselines ignore
    /// `features`; the tree model routes on them.
    fn apply(&self, prediction: f64, features: &[u32]) -> f64;

    /// Short identifier used in reports and model files.
    fn name(&self) -> &'static str;

    /// Calibrates every sample of a dataset, in order.
    fn apply_dataset(&self, dataset: &Dataset) -> Vec<f64> {
        let preds = dataset.predictions();
        (0..dataset.len())
            .map(|i| {
                let features: Vec<u32> = (0..dataset.n_features())
                    .map(|f| dataset.feature_column(f)[i])
                    .collect();
                self.apply(preds[i], &features)
            })
            .collect()
    }
}

pub(crate) const PROB_EPS: f64 = 1e-6;

/// Clamps a probability into the open interval used before logit transforms.
pub(crate) fn clamp_prob(x: f64) -> f64 {
    x.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub(crate) fn logit(x: f64) -> f64 {
    let x = clamp_prob(x);
    (x / (1.0 - x)).ln()
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Errors unless the (possibly weighted, possibly aggregated) labels carry
/// both outcomes. An aggregated row with a fractional label counts as both.
pub(crate) fn require_both_classes(dataset: &Dataset, what: &str) -> Result<()> {
    let labels = dataset.labels();
    let has_pos = labels.iter().any(|&l| l > 0.0);
    let has_neg = labels.iter().any(|&l| l < 1.0);
    if has_pos && has_neg {
        Ok(())
    } else {
        Err(Error::SingleClass(what.to_string()))
    }
}

/// Weighted base rate, clamped away from 0 and 1.
pub(crate) fn base_rate(dataset: &Dataset) -> f64 {
    let mut y = 0.0;
    let mut w = 0.0;
    for (l, wi) in dataset.labels().iter().zip(dataset.weights()) {
        y += l * wi;
        w += wi;
    }
    clamp_prob(y / w)
}
