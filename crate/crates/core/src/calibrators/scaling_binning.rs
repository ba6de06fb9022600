//! Scaling-binning: a Platt fit to reduce variance, then uniform-mass bins
//! whose outputs are the mean of the scaled function values in the bin (not
//! the mean label; that is the defining choice of the method).

use serde::{Deserialize, Serialize};

use super::histogram::build_table;
use super::{BinTable, Calibrator, PlattParams};
use crate::data::Dataset;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingBinning {
    pub platt: PlattParams,
    table: BinTable,
}

impl ScalingBinning {
    pub fn fit(dataset: &Dataset, n_bins: usize) -> Result<Self> {
        let platt = PlattParams::fit(dataset)?;
        let scaled: Vec<f64> = dataset
            .predictions()
            .iter()
            .map(|&x| platt.apply(x, &[]))
            .collect();
        let (table, _) = build_table(dataset, &scaled, &scaled, n_bins)?;
        Ok(Self { platt, table })
    }

    pub fn table(&self) -> &BinTable {
        &self.table
    }
}

impl Calibrator for ScalingBinning {
    fn apply(&self, prediction: f64, _features: &[u32]) -> f64 {
        self.table.lookup(self.platt.apply(prediction, &[]))
    }

    fn name(&self) -> &'static str {
        "scaling-binning"
    }
}
