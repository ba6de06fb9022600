//! Weighted isotonic regression by pool-adjacent-violators.

use serde::{Deserialize, Serialize};

use super::Calibrator;
use crate::data::Dataset;
use crate::{Error, Result};

/// Non-decreasing step function fitted by PAV.
///
/// `thresholds[k]` is the smallest prediction of block `k`; predictions at
/// or above it (and below the next threshold) calibrate to `values[k]`.
/// Inputs below the first threshold clamp to the first value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicFit {
    thresholds: Vec<f64>,
    values: Vec<f64>,
}

impl IsotonicFit {
    /// Least-squares isotonic fit of labels on predictions with weights.
    ///
    /// Duplicate predictions are pooled up front so the result is a function
    /// of the prediction.
    pub fn fit(dataset: &Dataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::InvalidDataset("isotonic fit needs samples".into()));
        }
        let mut points: Vec<(f64, f64, f64)> = dataset
            .predictions()
            .iter()
            .zip(dataset.labels())
            .zip(dataset.weights())
            .map(|((&x, &y), &w)| (x, w * y, w))
            .collect();
        points.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        // pool exact duplicate predictions
        let mut pooled: Vec<(f64, f64, f64)> = Vec::with_capacity(points.len());
        for (x, wy, w) in points {
            match pooled.last_mut() {
                Some(last) if last.0 == x => {
                    last.1 += wy;
                    last.2 += w;
                }
                _ => pooled.push((x, wy, w)),
            }
        }

        // PAV: stack of blocks (x_start, weighted label sum, weight)
        let mut blocks: Vec<(f64, f64, f64)> = Vec::with_capacity(pooled.len());
        for (x, wy, w) in pooled {
            blocks.push((x, wy, w));
            while blocks.len() >= 2 {
                let n = blocks.len();
                let mean_prev = blocks[n - 2].1 / blocks[n - 2].2;
                let mean_last = blocks[n - 1].1 / blocks[n - 1].2;
                if mean_prev <= mean_last {
                    break;
                }
                let (_, wy2, w2) = blocks.pop().unwrap();
                let last = blocks.last_mut().unwrap();
                last.1 += wy2;
                last.2 += w2;
            }
        }

        Ok(Self {
            thresholds: blocks.iter().map(|b| b.0).collect(),
            values: blocks.iter().map(|b| (b.1 / b.2).clamp(0.0, 1.0)).collect(),
        })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Calibrator for IsotonicFit {
    fn apply(&self, prediction: f64, _features: &[u32]) -> f64 {
        let idx = self.thresholds.partition_point(|&t| t <= prediction);
        self.values[idx.saturating_sub(1)]
    }

    fn name(&self) -> &'static str {
        "isotonic"
    }
}
