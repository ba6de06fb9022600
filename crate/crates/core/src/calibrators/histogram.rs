//! Histogram binning: sorted uniform-mass bins over predictions, each
//! calibrating to its weighted mean label.

use serde::{Deserialize, Serialize};

use super::Calibrator;
use crate::data::Dataset;
use crate::division::{sorted_order, uniform_mass_assign, DivisionKind, DivisionScheme};
use crate::{Error, Result};

/// Piecewise-constant calibration table over a sorted key.
///
/// `cuts` holds the strictly increasing boundaries between bins (midpoints
/// of adjacent bins' extreme keys); `outputs[j]` is the calibrated value for
/// keys in bin `j`. Out-of-range keys clamp to the first or last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinTable {
    cuts: Vec<f64>,
    outputs: Vec<f64>,
}

impl BinTable {
    /// Histogram-binning fit: uniform-mass bins over raw predictions,
    /// per-bin output = weighted mean label.
    pub fn fit(dataset: &Dataset, n_bins: usize) -> Result<Self> {
        Ok(Self::fit_detailed(dataset, n_bins)?.0)
    }

    /// [`BinTable::fit`] plus the division it calibrated, for inspection of
    /// the per-bin training error.
    pub fn fit_detailed(dataset: &Dataset, n_bins: usize) -> Result<(Self, DivisionScheme)> {
        let preds = dataset.predictions();
        let (table, division) = build_table(dataset, preds, dataset.labels(), n_bins)?;
        Ok((table, division))
    }

    /// Bin lookup for a key.
    pub fn lookup(&self, key: f64) -> f64 {
        let idx = self.cuts.partition_point(|&c| c <= key);
        self.outputs[idx]
    }

    pub fn n_bins(&self) -> usize {
        self.outputs.len()
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }
}

impl Calibrator for BinTable {
    fn apply(&self, prediction: f64, _features: &[u32]) -> f64 {
        self.lookup(prediction)
    }

    fn name(&self) -> &'static str {
        "histogram"
    }
}

/// Shared uniform-mass table builder: bins samples by `key`, outputs the
/// weighted mean of `value` per bin, and places cuts at midpoints between
/// adjacent bins' extreme keys. Bins whose key ranges touch (ties straddling
/// a boundary) are merged so cuts stay strictly increasing.
pub(super) fn build_table(
    dataset: &Dataset,
    key: &[f64],
    value: &[f64],
    n_bins: usize,
) -> Result<(BinTable, DivisionScheme)> {
    if n_bins < 1 || n_bins > dataset.len() {
        return Err(Error::InvalidConfig(format!(
            "n_bins {n_bins} must be in [1, {}]",
            dataset.len()
        )));
    }
    let weights = dataset.weights();
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let order = sorted_order(dataset, &indices, key);
    let total: f64 = weights.iter().sum();

    struct Agg {
        v_sum: f64,
        w_sum: f64,
        key_min: f64,
        key_max: f64,
        members: Vec<usize>,
    }
    let mut bins: Vec<Agg> = (0..n_bins)
        .map(|_| Agg {
            v_sum: 0.0,
            w_sum: 0.0,
            key_min: f64::INFINITY,
            key_max: f64::NEG_INFINITY,
            members: Vec::new(),
        })
        .collect();
    uniform_mass_assign(&order, weights, total, n_bins, |i, b| {
        let i = i as usize;
        let agg = &mut bins[b];
        agg.v_sum += weights[i] * value[i];
        agg.w_sum += weights[i];
        agg.key_min = agg.key_min.min(key[i]);
        agg.key_max = agg.key_max.max(key[i]);
        agg.members.push(i);
    });

    // merge bins that touch in key space; a cut between them would not be
    // strictly increasing and lookup could not reproduce the assignment
    let mut merged: Vec<Agg> = Vec::with_capacity(n_bins);
    for agg in bins {
        if agg.members.is_empty() {
            continue;
        }
        if let Some(last) = merged.last_mut() {
            if agg.key_min <= last.key_max {
                last.v_sum += agg.v_sum;
                last.w_sum += agg.w_sum;
                last.key_max = last.key_max.max(agg.key_max);
                last.members.extend(agg.members);
                continue;
            }
        }
        merged.push(agg);
    }

    let outputs: Vec<f64> = merged.iter().map(|a| a.v_sum / a.w_sum).collect();
    let cuts: Vec<f64> = merged
        .windows(2)
        .map(|w| 0.5 * (w[0].key_max + w[1].key_min))
        .collect();
    let division = DivisionScheme {
        bins: merged.into_iter().map(|a| a.members).collect(),
        kind: DivisionKind::SortedUniformMass,
    };
    Ok((BinTable { cuts, outputs }, division))
}
