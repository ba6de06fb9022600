//! Beta calibration: a two-sided logistic map suited to non-logistic base
//! predictors.

use serde::{Deserialize, Serialize};

use super::logistic::fit_logistic;
use super::{base_rate, clamp_prob, logit, require_both_classes, sigmoid, Calibrator};
use crate::data::Dataset;
use crate::Result;

/// Parameters of `calibrated = sigmoid(a*ln(x) - b*ln(1-x) + c)`.
///
/// `a` and `b` are kept non-negative so the map is monotone; a negative
/// fitted coefficient is clamped to zero and the remaining covariate refit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl BetaParams {
    pub fn fit(dataset: &Dataset) -> Result<Self> {
        require_both_classes(dataset, "beta calibration needs both outcomes")?;
        let labels = dataset.labels();
        let weights = dataset.weights();
        // covariates ln(x) and -ln(1-x) on clamped predictions
        let z1: Vec<f64> = dataset
            .predictions()
            .iter()
            .map(|&x| clamp_prob(x).ln())
            .collect();
        let z2: Vec<f64> = dataset
            .predictions()
            .iter()
            .map(|&x| -(1.0 - clamp_prob(x)).ln())
            .collect();

        let full: Vec<Vec<f64>> = z1.iter().zip(&z2).map(|(&a, &b)| vec![a, b, 1.0]).collect();
        let fit = fit_logistic(&full, labels, weights, &[1.0, 1.0, 0.0], 1e-8, 200);
        let (a, b, c) = (fit.coefs[0], fit.coefs[1], fit.coefs[2]);
        if a >= 0.0 && b >= 0.0 {
            return Ok(Self { a, b, c });
        }

        if a < 0.0 {
            let rows: Vec<Vec<f64>> = z2.iter().map(|&v| vec![v, 1.0]).collect();
            let refit = fit_logistic(&rows, labels, weights, &[1.0, 0.0], 1e-8, 200);
            if refit.coefs[0] >= 0.0 {
                return Ok(Self {
                    a: 0.0,
                    b: refit.coefs[0],
                    c: refit.coefs[1],
                });
            }
        } else {
            let rows: Vec<Vec<f64>> = z1.iter().map(|&v| vec![v, 1.0]).collect();
            let refit = fit_logistic(&rows, labels, weights, &[1.0, 0.0], 1e-8, 200);
            if refit.coefs[0] >= 0.0 {
                return Ok(Self {
                    a: refit.coefs[0],
                    b: 0.0,
                    c: refit.coefs[1],
                });
            }
        }
        // both directions degenerate: constant at the base rate
        Ok(Self {
            a: 0.0,
            b: 0.0,
            c: logit(base_rate(dataset)),
        })
    }
}

impl Calibrator for BetaParams {
    fn apply(&self, prediction: f64, _features: &[u32]) -> f64 {
        let x = clamp_prob(prediction);
        sigmoid(self.a * x.ln() - self.b * (1.0 - x).ln() + self.c)
    }

    fn name(&self) -> &'static str {
        "beta"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CalibrationSample;
    use crate::metrics::{classify_monotonicity, Monotonicity};
    use crate::rng::DetRng;
    use rand::Rng;

    #[test]
    fn recovers_identity_map() {
        let mut rng = DetRng::new(14);
        let samples: Vec<_> = (0..100_000)
            .map(|_| {
                let x: f64 = 0.02 + 0.96 * rng.random::<f64>();
                let y = f64::from(u8::from(rng.random::<f64>() < x));
                CalibrationSample::new(vec![], x, y)
            })
            .collect();
        let ds = Dataset::from_samples(vec![], vec![], &samples).unwrap();
        let p = BetaParams::fit(&ds).unwrap();
        assert!((p.a - 1.0).abs() < 0.1, "a = {}", p.a);
        assert!((p.b - 1.0).abs() < 0.1, "b = {}", p.b);
        assert!(p.c.abs() < 0.1, "c = {}", p.c);
    }

    #[test]
    fn coefficients_never_negative() {
        // anti-correlated labels push the unconstrained slopes negative
        let mut rng = DetRng::new(5);
        let samples: Vec<_> = (0..5000)
            .map(|_| {
                let x: f64 = 0.05 + 0.9 * rng.random::<f64>();
                let y = f64::from(u8::from(rng.random::<f64>() < 1.0 - x));
                CalibrationSample::new(vec![], x, y)
            })
            .collect();
        let ds = Dataset::from_samples(vec![], vec![], &samples).unwrap();
        let p = BetaParams::fit(&ds).unwrap();
        assert!(p.a >= 0.0 && p.b >= 0.0, "{p:?}");
    }

    #[test]
    fn monotone_on_distinct_inputs() {
        let mut rng = DetRng::new(8);
        let samples: Vec<_> = (0..2000)
            .map(|_| {
                let x: f64 = 0.05 + 0.9 * rng.random::<f64>();
                let y = f64::from(u8::from(rng.random::<f64>() < x * x));
                CalibrationSample::new(vec![], x, y)
            })
            .collect();
        let ds = Dataset::from_samples(vec![], vec![], &samples).unwrap();
        let p = BetaParams::fit(&ds).unwrap();
        let cal: Vec<f64> = ds.predictions().iter().map(|&x| p.apply(x, &[])).collect();
        assert_eq!(
            classify_monotonicity(ds.predictions(), &cal),
            Monotonicity::StrictlyMonotonic
        );
    }
}
