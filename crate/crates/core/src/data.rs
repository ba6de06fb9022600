//! Samples, datasets, and per-bin aggregate statistics.
//!
//! A [`Dataset`] stores one calibration row per sample: a vector of discrete
//! feature-value identifiers, the base predictor output in `[0, 1]`, a
//! binary label, an optional ground-truth probability (synthetic data only),
//! and a positive weight. Storage is column-major; [`CalibrationSample`] is
//! the row view used at construction and ingestion time.
//!
//! Weights exist so that rows sharing identical `(features, prediction)` can
//! be collapsed into one aggregate row ([`aggregate_dataset`]) whose label is
//! the group's positive rate. Every weighted statistic downstream (bin means,
//! variances, scalers) is computed so that aggregated and raw data give the
//! same answers.

use serde::{Deserialize, Serialize};

use crate::rng::Digest;
use crate::{Error, Result};

/// One calibration row.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSample {
    /// Discrete feature-value identifiers, one per feature column.
    pub features: Vec<u32>,
    /// Base predictor output in `[0, 1]`.
    pub prediction: f64,
    /// Binary outcome; aggregated rows carry the group's mean label.
    pub label: f64,
    /// Ground-truth probability, present only for synthetic data.
    pub true_prob: Option<f64>,
    /// Positive weight (raw row count behind an aggregate).
    pub weight: f64,
}

impl CalibrationSample {
    pub fn new(features: Vec<u32>, prediction: f64, label: f64) -> Self {
        Self {
            features,
            prediction,
            label,
            true_prob: None,
            weight: 1.0,
        }
    }

    pub fn with_true_prob(mut self, p: f64) -> Self {
        self.true_prob = Some(p);
        self
    }

    pub fn with_weight(mut self, w: f64) -> Self {
        self.weight = w;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.prediction) || !self.prediction.is_finite() {
            return Err(Error::InvalidSample(format!(
                "prediction {} outside [0, 1]",
                self.prediction
            )));
        }
        if !(0.0..=1.0).contains(&self.label) {
            return Err(Error::InvalidSample(format!(
                "label {} outside [0, 1]",
                self.label
            )));
        }
        if let Some(t) = self.true_prob {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidSample(format!(
                    "true probability {t} outside [0, 1]"
                )));
            }
        }
        if self.weight <= 0.0 || !self.weight.is_finite() {
            return Err(Error::InvalidSample(format!(
                "weight {} must be positive",
                self.weight
            )));
        }
        Ok(())
    }
}

/// A calibration set with a fixed discrete-feature schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    feature_names: Vec<String>,
    feature_cardinalities: Vec<u32>,
    // column-major: feature_columns[f][i] is feature f of sample i
    feature_columns: Vec<Vec<u32>>,
    predictions: Vec<f64>,
    labels: Vec<f64>,
    weights: Vec<f64>,
    true_probs: Option<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset from rows, validating every invariant.
    ///
    /// `true_prob` must be present on all rows or none.
    pub fn from_samples(
        feature_names: Vec<String>,
        feature_cardinalities: Vec<u32>,
        samples: &[CalibrationSample],
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidDataset("no samples".into()));
        }
        if feature_names.len() != feature_cardinalities.len() {
            return Err(Error::InvalidDataset(
                "feature names and cardinalities differ in length".into(),
            ));
        }
        let d = feature_names.len();
        let with_truth = samples[0].true_prob.is_some();
        let mut cols = vec![Vec::with_capacity(samples.len()); d];
        let mut predictions = Vec::with_capacity(samples.len());
        let mut labels = Vec::with_capacity(samples.len());
        let mut weights = Vec::with_capacity(samples.len());
        let mut true_probs = if with_truth {
            Some(Vec::with_capacity(samples.len()))
        } else {
            None
        };
        for (i, s) in samples.iter().enumerate() {
            s.validate()?;
            if s.features.len() != d {
                return Err(Error::InvalidDataset(format!(
                    "sample {i} has {} features, schema has {d}",
                    s.features.len()
                )));
            }
            if s.true_prob.is_some() != with_truth {
                return Err(Error::InvalidDataset(
                    "true_prob must be present on all samples or none".into(),
                ));
            }
            for (f, (&v, &card)) in s.features.iter().zip(&feature_cardinalities).enumerate() {
                if v >= card {
                    return Err(Error::InvalidDataset(format!(
                        "sample {i} feature {f} value {v} >= cardinality {card}"
                    )));
                }
                cols[f].push(v);
            }
            predictions.push(s.prediction);
            labels.push(s.label);
            weights.push(s.weight);
            if let Some(tp) = &mut true_probs {
                tp.push(s.true_prob.unwrap());
            }
        }
        Ok(Self {
            feature_names,
            feature_cardinalities,
            feature_columns: cols,
            predictions,
            labels,
            weights,
            true_probs,
        })
    }

    /// Featureless dataset from parallel value slices (simulation data).
    pub fn from_columns(
        predictions: Vec<f64>,
        labels: Vec<f64>,
        true_probs: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = predictions.len();
        if n == 0 {
            return Err(Error::InvalidDataset("no samples".into()));
        }
        if labels.len() != n || true_probs.as_ref().is_some_and(|t| t.len() != n) {
            return Err(Error::InvalidDataset("column lengths differ".into()));
        }
        for i in 0..n {
            let s = CalibrationSample {
                features: Vec::new(),
                prediction: predictions[i],
                label: labels[i],
                true_prob: true_probs.as_ref().map(|t| t[i]),
                weight: 1.0,
            };
            s.validate()?;
        }
        Ok(Self {
            feature_names: Vec::new(),
            feature_cardinalities: Vec::new(),
            feature_columns: Vec::new(),
            predictions,
            labels,
            weights: vec![1.0; n],
            true_probs,
        })
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_cardinalities(&self) -> &[u32] {
        &self.feature_cardinalities
    }

    /// One feature column across all samples.
    pub fn feature_column(&self, f: usize) -> &[u32] {
        &self.feature_columns[f]
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn true_probs(&self) -> Option<&[f64]> {
        self.true_probs.as_deref()
    }

    /// Total weight (raw row count when nothing is aggregated).
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Row view of sample `i`.
    pub fn sample(&self, i: usize) -> CalibrationSample {
        CalibrationSample {
            features: self.feature_columns.iter().map(|c| c[i]).collect(),
            prediction: self.predictions[i],
            label: self.labels[i],
            true_prob: self.true_probs.as_ref().map(|t| t[i]),
            weight: self.weights[i],
        }
    }

    /// Replaces the prediction column (used by boosting stages).
    pub fn with_predictions(&self, predictions: Vec<f64>) -> Result<Self> {
        if predictions.len() != self.len() {
            return Err(Error::InvalidDataset("column lengths differ".into()));
        }
        let mut out = self.clone();
        out.predictions = predictions;
        Ok(out)
    }

    /// Stage view for one boosting round: predictions replaced and an
    /// optional derived feature column appended.
    pub(crate) fn stage_view(
        &self,
        predictions: Vec<f64>,
        extra: Option<(String, u32, Vec<u32>)>,
    ) -> Result<Self> {
        let mut out = self.with_predictions(predictions)?;
        if let Some((name, cardinality, column)) = extra {
            if column.len() != out.len() {
                return Err(Error::InvalidDataset("column lengths differ".into()));
            }
            if let Some(&bad) = column.iter().find(|&&v| v >= cardinality) {
                return Err(Error::InvalidDataset(format!(
                    "derived feature value {bad} >= cardinality {cardinality}"
                )));
            }
            out.feature_names.push(name);
            out.feature_cardinalities.push(cardinality);
            out.feature_columns.push(column);
        }
        Ok(out)
    }

    /// Content digest of `(features, prediction)` for sample `i`.
    ///
    /// Rows collapsed by [`aggregate_dataset`] share this digest, so shuffle
    /// and sort orders derived from it treat a group and its aggregate
    /// identically.
    pub(crate) fn group_digest(&self, i: usize) -> u64 {
        let mut d = Digest::new();
        for col in &self.feature_columns {
            d = d.push_u64(u64::from(col[i]));
        }
        d.push_f64(self.predictions[i]).finish()
    }

    /// Full content digest of sample `i` (group digest plus outcome fields).
    pub(crate) fn full_digest(&self, i: usize) -> u64 {
        let mut d = Digest::new().push_u64(self.group_digest(i));
        d = d.push_f64(self.labels[i]).push_f64(self.weights[i]);
        if let Some(t) = &self.true_probs {
            d = d.push_f64(t[i]);
        }
        d.finish()
    }
}

/// Weighted aggregates of one bin, the quantities of the concentration bound
/// behind the minimum-bin-size rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    /// Weighted sample count.
    pub count: f64,
    /// Weighted mean label.
    pub mean_label: f64,
    /// Weighted mean (calibrated) prediction.
    pub mean_prediction: f64,
    /// Weighted label variance.
    pub label_variance: f64,
}

/// Weighted bin aggregates over `indices`.
///
/// `calibrated`, when given, replaces raw predictions in `mean_prediction`
/// and must be aligned with the dataset.
///
/// Labels are Bernoulli outcomes (an aggregated row's label is its group's
/// positive rate), so the label second moment equals the mean and the
/// variance is `m * (1 - m)`. Computing it this way keeps the statistic
/// identical between raw and aggregated forms of the same data.
pub fn compute_bin_stats(
    dataset: &Dataset,
    indices: &[usize],
    calibrated: Option<&[f64]>,
) -> Result<BinStats> {
    if indices.is_empty() {
        return Err(Error::EmptyBin);
    }
    if let Some(c) = calibrated {
        if c.len() != dataset.len() {
            return Err(Error::InvalidDataset(
                "calibrated vector not aligned with dataset".into(),
            ));
        }
    }
    let preds = calibrated.unwrap_or_else(|| dataset.predictions());
    let labels = dataset.labels();
    let weights = dataset.weights();
    let mut w_sum = 0.0;
    let mut y_sum = 0.0;
    let mut p_sum = 0.0;
    for &i in indices {
        let w = weights[i];
        w_sum += w;
        y_sum += w * labels[i];
        p_sum += w * preds[i];
    }
    let mean_label = y_sum / w_sum;
    Ok(BinStats {
        count: w_sum,
        mean_label,
        mean_prediction: p_sum / w_sum,
        label_variance: (mean_label * (1.0 - mean_label)).max(0.0),
    })
}

/// Collapses rows with identical `(features, prediction)` into weighted
/// aggregates.
///
/// The aggregate's label is the group's weighted mean label and its weight
/// the group's total weight, so every weighted statistic used by metrics and
/// calibrators is unchanged. Discrete features plus an already-discretized
/// prediction column keep the number of distinct groups finite.
pub fn aggregate_dataset(dataset: &Dataset) -> Dataset {
    use std::collections::HashMap;

    // key: (feature values, prediction bits); accumulator: (weight, weighted
    // label sum, weighted truth sum, row count)
    type GroupKey = (Vec<u32>, u64);
    let mut groups: HashMap<GroupKey, (f64, f64, f64, f64)> = HashMap::new();
    let mut order: Vec<GroupKey> = Vec::new();
    for i in 0..dataset.len() {
        let key: (Vec<u32>, u64) = (
            dataset
                .feature_columns
                .iter()
                .map(|c| c[i])
                .collect::<Vec<_>>(),
            dataset.predictions[i].to_bits(),
        );
        let w = dataset.weights[i];
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (0.0, 0.0, 0.0, 0.0)
        });
        entry.0 += w;
        entry.1 += w * dataset.labels[i];
        if let Some(t) = &dataset.true_probs {
            entry.2 += w * t[i];
        }
        entry.3 += 1.0;
    }

    let with_truth = dataset.true_probs.is_some();
    let mut samples: Vec<CalibrationSample> = order
        .iter()
        .map(|key| {
            let (w, y_sum, t_sum, _) = groups[key];
            CalibrationSample {
                features: key.0.clone(),
                prediction: f64::from_bits(key.1),
                label: y_sum / w,
                true_prob: with_truth.then_some(t_sum / w),
                weight: w,
            }
        })
        .collect();
    // deterministic output order regardless of input order
    samples.sort_by(|a, b| (&a.features, a.prediction.to_bits())
        .cmp(&(&b.features, b.prediction.to_bits())));

    Dataset::from_samples(
        dataset.feature_names.clone(),
        dataset.feature_cardinalities.clone(),
        &samples,
    )
    .expect("aggregation preserves validity")
}
