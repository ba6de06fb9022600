//! Boosted feature-aware binning trees with per-node linear calibrators.
//!
//! Each tree partitions the calibration set by discrete feature values:
//! every node holds a single multiplicative scaler fitted so its bin's
//! training calibration error is exactly zero, and splits are chosen
//! greedily to minimize the node's local multi-view error. Trees stack
//! multiplicatively: tree `t + 1` calibrates the output of trees `1..t`,
//! and a new tree is kept only when the global multi-view error strictly
//! decreases.
//!
//! The minimum leaf mass comes from [`solve_min_bin_size`]: the largest
//! uniform-mass bin size whose concentration bound still exceeds the
//! permitted relative error, so every leaf keeps enough mass for its mean
//! to be trustworthy.

mod growth;
mod rules;

pub use growth::{fit_node_scaler, grow_tree, select_split_feature};
pub use rules::{Rule, RuleCondition, RuleSet};


use serde::{Deserialize, Serialize};

use crate::data::{BinStats, Dataset};
use crate::{Error, Result};

/// Reserved name of the derived prediction-bucket feature.
pub const PRED_BUCKET_FEATURE: &str = "__pred_bucket__";

/// Training knobs. Defaults follow the reference experimental setup.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MbctConfig {
    /// Confidence level of the minimum-bin-size bound.
    pub alpha: f64,
    /// Permissible relative error of a bin mean.
    pub e: f64,
    pub max_depth: usize,
    pub max_trees: usize,
    /// Random divisions per multi-view loss evaluation.
    pub r: usize,
    /// Norm exponent of the multi-view loss.
    pub p: f64,
    pub seed: u64,
    /// Overrides the solved minimum bin size when set.
    pub min_bin_size_override: Option<usize>,
    /// Buckets of the derived prediction feature, recomputed from the
    /// boosted output before each tree; 0 disables the feature.
    pub prediction_buckets: u32,
    /// When set, this fraction of the training mass is held out and tree
    /// acceptance uses the holdout loss instead of the training loss.
    pub holdout_fraction: Option<f64>,
}

impl Default for MbctConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            e: 0.1,
            max_depth: 5,
            max_trees: 8,
            r: 100,
            p: 2.0,
            seed: 0,
            min_bin_size_override: None,
            prediction_buckets: 100,
            holdout_fraction: None,
        }
    }
}

impl MbctConfig {
    fn validate(&self) -> Result<()> {
        if self.alpha.is_nan() || self.alpha <= 0.0 || self.alpha >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "alpha {} outside (0, 1)",
                self.alpha
            )));
        }
        if self.e.is_nan() || self.e <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "permissible error {} must be positive",
                self.e
            )));
        }
        if self.max_depth == 0 || self.max_trees == 0 || self.r == 0 {
            return Err(Error::InvalidConfig(
                "max_depth, max_trees and r must be positive".into(),
            ));
        }
        if self.p < 1.0 {
            return Err(Error::InvalidConfig(format!("p {} must be >= 1", self.p)));
        }
        if let Some(f) = self.holdout_fraction {
            if f.is_nan() || f <= 0.0 || f >= 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "holdout fraction {f} outside (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// One node of a binning tree.
///
/// A leaf has no split feature and no children; the path from the root to a
/// leaf is a bin. `scaler_k` multiplies the node's incoming predictions so
/// that the node's weighted mean calibrated prediction equals its weighted
/// mean label. Children are kept sorted by feature value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeNode {
    pub split_feature: Option<usize>,
    pub children: Vec<(u32, TreeNode)>,
    pub scaler_k: f64,
    pub node_stats: BinStats,
    /// Local multi-view loss under this node's own scaler, where evaluated.
    pub local_mvce_before: Option<f64>,
    /// Local loss after split and child calibration; set on split nodes.
    pub local_mvce_after: Option<f64>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.split_feature.is_none()
    }

    /// Child handling the given feature value.
    pub fn child(&self, value: u32) -> Option<&TreeNode> {
        self.children
            .binary_search_by_key(&value, |&(v, _)| v)
            .ok()
            .map(|i| &self.children[i].1)
    }

    fn count_leaves(&self) -> usize {
        if self.is_leaf() {
            1
        } else {
            self.children.iter().map(|(_, c)| c.count_leaves()).sum()
        }
    }

    fn depth(&self) -> usize {
        if self.is_leaf() {
            0
        } else {
            1 + self
                .children
                .iter()
                .map(|(_, c)| c.depth())
                .max()
                .unwrap_or(0)
        }
    }
}

/// A single binning tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationTree {
    pub root: TreeNode,
    pub depth: usize,
}

impl CalibrationTree {
    pub fn n_leaves(&self) -> usize {
        self.root.count_leaves()
    }

    /// Multiplier for one sample: routes by feature values, stopping at the
    /// deepest node whose branch matches (unseen values stop early and use
    /// that node's scaler).
    ///
    /// `bucket` is the sample's derived prediction-bucket value for this
    /// boosting stage.
    pub fn multiplier(&self, features: &[u32], bucket: Option<u32>) -> f64 {
        let mut node = &self.root;
        while let Some(f) = node.split_feature {
            let value = if f < features.len() {
                features[f]
            } else {
                match bucket {
                    Some(b) => b,
                    None => break,
                }
            };
            match node.child(value) {
                Some(child) => node = child,
                None => break,
            }
        }
        node.scaler_k
    }

    /// The `(feature, value)` conditions a sample matches on its way down;
    /// identifies the bin (leaf or early-stop node) the sample lands in.
    pub fn route_path(&self, features: &[u32], bucket: Option<u32>) -> Vec<(usize, u32)> {
        let mut node = &self.root;
        let mut path = Vec::new();
        while let Some(f) = node.split_feature {
            let value = if f < features.len() {
                features[f]
            } else {
                match bucket {
                    Some(b) => b,
                    None => break,
                }
            };
            match node.child(value) {
                Some(child) => {
                    path.push((f, value));
                    node = child;
                }
                None => break,
            }
        }
        path
    }
}

/// The fitted boosted-tree calibrator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MbctModel {
    pub trees: Vec<CalibrationTree>,
    pub config: MbctConfig,
    /// Solved (or overridden) minimum leaf mass.
    pub min_bin_size: usize,
    /// Global loss before any tree, then after each accepted tree.
    pub global_mvce_per_tree: Vec<f64>,
    /// Feature count of the training schema (excluding the derived bucket).
    pub n_base_features: usize,
    /// Feature names incl. the derived bucket feature when enabled.
    pub feature_names: Vec<String>,
}

impl MbctModel {
    /// Trains the boosted ensemble. See [`growth`] for the procedure.
    pub fn fit(dataset: &Dataset, config: &MbctConfig) -> Result<Self> {
        config.validate()?;
        growth::fit(dataset, config)
    }

    /// Calibrates one prediction by routing it through every tree in order
    /// and multiplying the reached nodes' scalers, clamped to `[0, 1]`.
    pub fn apply(&self, prediction: f64, features: &[u32]) -> Result<f64> {
        if features.len() != self.n_base_features {
            return Err(Error::SchemaMismatch {
                expected: self.n_base_features,
                got: features.len(),
            });
        }
        if !(0.0..=1.0).contains(&prediction) || !prediction.is_finite() {
            return Err(Error::InvalidSample(format!(
                "prediction {prediction} outside [0, 1]"
            )));
        }
        let mut current = prediction;
        for tree in &self.trees {
            let bucket = self.bucket_of(current);
            let k = tree.multiplier(features, bucket);
            current = (current * k).clamp(0.0, 1.0);
        }
        Ok(current)
    }

    /// Calibrates a whole dataset (schema-checked once).
    pub fn apply_dataset(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        if dataset.n_features() != self.n_base_features {
            return Err(Error::SchemaMismatch {
                expected: self.n_base_features,
                got: dataset.n_features(),
            });
        }
        let mut features = vec![0u32; self.n_base_features];
        let preds = dataset.predictions();
        (0..dataset.len())
            .map(|i| {
                for (f, slot) in features.iter_mut().enumerate() {
                    *slot = dataset.feature_column(f)[i];
                }
                self.apply(preds[i], &features)
            })
            .collect()
    }

    /// Derived prediction-bucket value for a boosted output.
    pub fn bucket_of(&self, prediction: f64) -> Option<u32> {
        bucket_value(prediction, self.config.prediction_buckets)
    }

    /// Total leaf count across trees (the size of the exported rule set).
    pub fn n_leaves(&self) -> usize {
        self.trees.iter().map(CalibrationTree::n_leaves).sum()
    }

    /// Flattens every root-to-leaf path into a rule set that reproduces
    /// [`MbctModel::apply`] exactly.
    pub fn export_rules(&self) -> RuleSet {
        rules::export(self)
    }
}

impl crate::calibrators::Calibrator for MbctModel {
    fn apply(&self, prediction: f64, features: &[u32]) -> f64 {
        // trait surface is infallible; schema errors surface through the
        // fallible inherent method, bad inputs clamp here
        MbctModel::apply(self, prediction.clamp(0.0, 1.0), features).unwrap_or(prediction)
    }

    fn name(&self) -> &'static str {
        "mbct"
    }
}

/// Equal-width bucket of a prediction in `[0, 1]`; the upper edge folds into
/// the last bucket.
pub(crate) fn bucket_value(prediction: f64, buckets: u32) -> Option<u32> {
    if buckets == 0 {
        return None;
    }
    let b = (prediction * f64::from(buckets)) as u32;
    Some(b.min(buckets - 1))
}

/// Largest uniform-mass bin size whose concentration bound still exceeds
/// the permitted relative error of a bin mean.
///
/// With `B = |D| / c` bins substituted into the bound, the right side
/// shrinks as `c` grows; the returned `c` is the last size where
/// `mean <= bound(c) / e`, capped to `[2, |D| / 2]`. When even `c = 2`
/// fails the inequality the floor of 2 is returned with a warning.
pub fn solve_min_bin_size(dataset: &Dataset, alpha: f64, e: f64) -> Result<usize> {
    if alpha.is_nan() || alpha <= 0.0 || alpha >= 1.0 || e.is_nan() || e <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "alpha {alpha} must be in (0, 1) and e {e} positive"
        )));
    }
    let indices: Vec<usize> = (0..dataset.len()).collect();
    let stats = crate::data::compute_bin_stats(dataset, &indices, None)?;
    solve_min_bin_size_from_stats(
        stats.mean_label,
        stats.label_variance,
        stats.count,
        alpha,
        e,
    )
}

/// [`solve_min_bin_size`] on raw dataset statistics.
pub fn solve_min_bin_size_from_stats(
    mean_label: f64,
    label_variance: f64,
    total_weight: f64,
    alpha: f64,
    e: f64,
) -> Result<usize> {
    if mean_label <= 0.0 {
        return Err(Error::DegenerateLabelMean);
    }
    let cap = (total_weight / 2.0).floor() as usize;
    if cap < 2 {
        return Err(Error::InvalidDataset(
            "dataset too small for a two-bin division".into(),
        ));
    }
    let holds = |c: usize| -> bool {
        min_bin_size_bound(label_variance, total_weight, alpha, c) >= e * mean_label
    };
    if !holds(2) {
        log::warn!(
            "no bin size satisfies the concentration bound at e = {e}; falling back to 2"
        );
        return Ok(2);
    }
    // bound decreases in c: binary-search the last satisfying size
    let (mut lo, mut hi) = (2usize, cap);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Ok(lo)
}

/// Right side of the minimum-bin-size inequality at bin size `c`.
pub(crate) fn min_bin_size_bound(
    label_variance: f64,
    total_weight: f64,
    alpha: f64,
    c: usize,
) -> f64 {
    let c = c as f64;
    let bins = total_weight / c;
    let log_term = (3.0 * bins * total_weight / (c * alpha)).ln();
    (2.0 * label_variance * log_term / c).sqrt() + 3.0 * log_term / c
}
