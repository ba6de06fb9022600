//! Platt scaling: a logistic map on the logit of the base prediction.

use serde::{Deserialize, Serialize};

use super::logistic::fit_logistic;
use super::{base_rate, logit, require_both_classes, sigmoid, Calibrator};
use crate::data::Dataset;
use crate::Result;

/// Parameters of `calibrated = sigmoid(a * logit(x) + b)`.
///
/// Predictions are probabilities, so the slope acts on their logit; inputs
/// are clamped to `[1e-6, 1 - 1e-6]` before the transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

impl PlattParams {
    /// Maximum-likelihood fit by damped Newton iterations (gradient
    /// max-norm below 1e-8 or 200 steps).
    ///
    /// When every prediction is identical the slope is unidentifiable and
    /// the fit degenerates to `a = 0`, `b = logit(base rate)`.
    pub fn fit(dataset: &Dataset) -> Result<Self> {
        require_both_classes(dataset, "Platt scaling needs both outcomes")?;
        let z: Vec<f64> = dataset.predictions().iter().map(|&x| logit(x)).collect();
        let first = z[0];
        if z.iter().all(|&v| v == first) {
            return Ok(Self {
                a: 0.0,
                b: logit(base_rate(dataset)),
            });
        }
        let rows: Vec<Vec<f64>> = z.iter().map(|&v| vec![v, 1.0]).collect();
        let fit = fit_logistic(
            &rows,
            dataset.labels(),
            dataset.weights(),
            &[1.0, 0.0],
            1e-8,
            200,
        );
        if !fit.converged {
            log::debug!("platt fit stopped before gradient tolerance");
        }
        Ok(Self {
            a: fit.coefs[0],
            b: fit.coefs[1],
        })
    }
}

impl Calibrator for PlattParams {
    fn apply(&self, prediction: f64, _features: &[u32]) -> f64 {
        sigmoid(self.a * logit(prediction) + self.b)
    }

    fn name(&self) -> &'static str {
        "platt"
    }
}
