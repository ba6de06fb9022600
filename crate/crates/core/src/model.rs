//! Serializable union of every fitted calibrator.
//!
//! The CLI wraps this in a versioned file envelope together with the
//! ingestion schema; keeping the union here lets library users persist and
//! reload calibrators without the file plumbing. JSON serialization uses
//! exact float round-tripping, so a reloaded model applies bit-identically.

use serde::{Deserialize, Serialize};

use crate::calibrators::{
    BetaParams, BinTable, Calibrator, IsotonicFit, PlattParams, ScalingBinning,
};
use crate::tree::MbctModel;

/// A fitted calibrator of any kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CalibratorModel {
    Platt(PlattParams),
    Beta(BetaParams),
    Histogram(BinTable),
    Isotonic(IsotonicFit),
    ScalingBinning(ScalingBinning),
    Mbct(MbctModel),
}

impl CalibratorModel {
    pub fn as_calibrator(&self) -> &dyn Calibrator {
        match self {
            CalibratorModel::Platt(c) => c,
            CalibratorModel::Beta(c) => c,
            CalibratorModel::Histogram(c) => c,
            CalibratorModel::Isotonic(c) => c,
            CalibratorModel::ScalingBinning(c) => c,
            CalibratorModel::Mbct(c) => c,
        }
    }

    pub fn name(&self) -> &'static str {
        self.as_calibrator().name()
    }

    /// The tree model, when this is one.
    pub fn as_mbct(&self) -> Option<&MbctModel> {
        match self {
            CalibratorModel::Mbct(m) => Some(m),
            _ => None,
        }
    }
}
