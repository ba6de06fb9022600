//! Column schema, discretization, and CSV ingestion.
//!
//! A schema string names each relevant column and its role:
//!
//! ```text
//! click=label,pctr=prediction,site=feature,age=feature:quantile(8),x=feature:width(10)
//! ```
//!
//! Plain `feature` columns are categorical: their distinct tokens become a
//! vocabulary. `quantile(k)` and `width(k)` discretize numeric columns into
//! k buckets with boundaries computed from the training data. Everything is
//! frozen into a [`FittedSchema`] at train time; evaluation and calibration
//! reuse the stored boundaries and vocabularies, never refitting on test
//! data. Unseen tokens map to a reserved out-of-vocabulary identifier.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mbct_core::data::{CalibrationSample, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnRole {
    Feature,
    Prediction,
    Label,
    TrueProb,
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    None,
    Quantile(usize),
    EqualWidth(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub role: ColumnRole,
    pub discretization: Discretization,
}

/// Parses the `name=role[:disc]` schema string.
pub fn parse_schema(spec: &str) -> Result<Vec<ColumnSpec>> {
    let mut columns = Vec::new();
    let mut predictions = 0;
    let mut labels = 0;
    for entry in spec.split(',') {
        let entry = entry.trim();
        if entry.is_empty() {
            continue;
        }
        let (name, rest) = entry
            .split_once('=')
            .with_context(|| format!("schema entry '{entry}' is not name=role"))?;
        let (role_str, disc_str) = match rest.split_once(':') {
            Some((r, d)) => (r, Some(d)),
            None => (rest, None),
        };
        let role = match role_str.trim() {
            "feature" => ColumnRole::Feature,
            "prediction" => ColumnRole::Prediction,
            "label" => ColumnRole::Label,
            "trueprob" | "true-prob" => ColumnRole::TrueProb,
            "ignore" => ColumnRole::Ignore,
            other => bail!("unknown role '{other}' in schema entry '{entry}'"),
        };
        let discretization = match disc_str {
            None => Discretization::None,
            Some(d) => {
                if role != ColumnRole::Feature {
                    bail!("discretization only applies to features: '{entry}'");
                }
                parse_discretization(d.trim())
                    .with_context(|| format!("schema entry '{entry}'"))?
            }
        };
        match role {
            ColumnRole::Prediction => predictions += 1,
            ColumnRole::Label => labels += 1,
            _ => {}
        }
        columns.push(ColumnSpec {
            name: name.trim().to_string(),
            role,
            discretization,
        });
    }
    if predictions != 1 || labels != 1 {
        bail!("schema needs exactly one prediction and one label column (got {predictions} and {labels})");
    }
    Ok(columns)
}

fn parse_discretization(d: &str) -> Result<Discretization> {
    let (kind, k) = d
        .strip_suffix(')')
        .and_then(|s| s.split_once('('))
        .with_context(|| format!("discretization '{d}' is not quantile(k) or width(k)"))?;
    let k: usize = k.trim().parse().context("bucket count")?;
    if k < 1 {
        bail!("bucket count must be >= 1");
    }
    match kind.trim() {
        "quantile" => Ok(Discretization::Quantile(k)),
        "width" | "equal-width" => Ok(Discretization::EqualWidth(k)),
        other => bail!("unknown discretization '{other}'"),
    }
}

/// A feature column's frozen encoding.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureEncoding {
    /// Distinct training tokens in sorted order; unseen tokens map to the
    /// reserved index `tokens.len()`.
    Vocabulary { tokens: Vec<String> },
    /// Strictly increasing cut points; a value maps to the count of cuts at
    /// or below it, so out-of-range inputs clamp to the edge buckets.
    Boundaries { cuts: Vec<f64> },
}

impl FeatureEncoding {
    pub fn cardinality(&self) -> u32 {
        match self {
            FeatureEncoding::Vocabulary { tokens } => tokens.len() as u32 + 1,
            FeatureEncoding::Boundaries { cuts } => cuts.len() as u32 + 1,
        }
    }

    fn encode(&self, raw: &str, line: usize) -> Result<u32> {
        match self {
            FeatureEncoding::Vocabulary { tokens } => Ok(tokens
                .binary_search_by(|t| t.as_str().cmp(raw))
                .map_or(tokens.len() as u32, |i| i as u32)),
            FeatureEncoding::Boundaries { cuts } => {
                let v: f64 = raw
                    .trim()
                    .parse()
                    .with_context(|| format!("line {line}: '{raw}' is not numeric"))?;
                Ok(cuts.partition_point(|&c| c <= v) as u32)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedFeature {
    pub name: String,
    pub encoding: FeatureEncoding,
}

/// Everything needed to turn a delimited file into a dataset, frozen at
/// train time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedSchema {
    pub prediction_column: String,
    pub label_column: String,
    pub true_prob_column: Option<String>,
    pub features: Vec<FittedFeature>,
}

struct RawTable {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = reader
        .headers()
        .context("reading header")?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("line {}: malformed row", i + 2))?;
        if record.len() != header.len() {
            bail!(
                "line {}: {} fields, header has {}",
                i + 2,
                record.len(),
                header.len()
            );
        }
        rows.push(record);
    }
    if rows.is_empty() {
        bail!("{} has no data rows", path.display());
    }
    Ok(RawTable { header, rows })
}

fn column_index(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .with_context(|| format!("column '{name}' not found in header"))
}

/// Fits encodings from the training file and returns the dataset plus the
/// frozen schema.
pub fn ingest_fit(path: &Path, columns: &[ColumnSpec]) -> Result<(Dataset, FittedSchema)> {
    let table = read_table(path)?;
    let mut features = Vec::new();
    let mut prediction_column = None;
    let mut label_column = None;
    let mut true_prob_column = None;
    for spec in columns {
        let idx = column_index(&table.header, &spec.name)?;
        match spec.role {
            ColumnRole::Ignore => {}
            ColumnRole::Prediction => prediction_column = Some(spec.name.clone()),
            ColumnRole::Label => label_column = Some(spec.name.clone()),
            ColumnRole::TrueProb => true_prob_column = Some(spec.name.clone()),
            ColumnRole::Feature => {
                let encoding = fit_encoding(&table, idx, spec.discretization)
                    .with_context(|| format!("fitting feature '{}'", spec.name))?;
                features.push(FittedFeature {
                    name: spec.name.clone(),
                    encoding,
                });
            }
        }
    }
    let fitted = FittedSchema {
        prediction_column: prediction_column.context("schema has no prediction column")?,
        label_column: label_column.context("schema has no label column")?,
        true_prob_column,
        features,
    };
    let dataset = build_dataset(&table, &fitted)?;
    Ok((dataset, fitted))
}

/// Ingests a file under a frozen schema (labels required).
pub fn ingest_frozen(path: &Path, fitted: &FittedSchema) -> Result<Dataset> {
    let table = read_table(path)?;
    build_dataset(&table, fitted)
}

fn fit_encoding(table: &RawTable, idx: usize, disc: Discretization) -> Result<FeatureEncoding> {
    match disc {
        Discretization::None => {
            let mut tokens: Vec<String> = table
                .rows
                .iter()
                .map(|r| r.get(idx).unwrap_or("").to_string())
                .collect();
            tokens.sort_unstable();
            tokens.dedup();
            Ok(FeatureEncoding::Vocabulary { tokens })
        }
        Discretization::Quantile(k) => {
            let mut values = numeric_column(table, idx)?;
            values.sort_unstable_by(f64::total_cmp);
            let n = values.len();
            let mut cuts: Vec<f64> = (1..k).map(|j| values[j * n / k]).collect();
            cuts.dedup_by(|a, b| a == b);
            // a cut at or below the minimum separates nothing
            cuts.retain(|&c| c > values[0]);
            Ok(FeatureEncoding::Boundaries { cuts })
        }
        Discretization::EqualWidth(k) => {
            let values = numeric_column(table, idx)?;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &v in &values {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let cuts: Vec<f64> = if hi > lo {
                let width = (hi - lo) / k as f64;
                let mut cuts: Vec<f64> = (1..k).map(|j| lo + width * j as f64).collect();
                cuts.dedup_by(|a, b| a == b);
                cuts
            } else {
                Vec::new() // constant column collapses to one bucket
            };
            Ok(FeatureEncoding::Boundaries { cuts })
        }
    }
}

fn numeric_column(table: &RawTable, idx: usize) -> Result<Vec<f64>> {
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.get(idx)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .with_context(|| format!("line {}: not numeric", i + 2))
        })
        .collect()
}

fn build_dataset(table: &RawTable, fitted: &FittedSchema) -> Result<Dataset> {
    let pred_idx = column_index(&table.header, &fitted.prediction_column)?;
    let label_idx = column_index(&table.header, &fitted.label_column)?;
    let truth_idx = fitted
        .true_prob_column
        .as_deref()
        .map(|c| column_index(&table.header, c))
        .transpose()?;
    let feature_idx: Vec<usize> = fitted
        .features
        .iter()
        .map(|f| column_index(&table.header, &f.name))
        .collect::<Result<_>>()?;

    let mut samples = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        let line = i + 2;
        let prediction: f64 = row
            .get(pred_idx)
            .unwrap_or("")
            .trim()
            .parse()
            .with_context(|| format!("line {line}: prediction is not numeric"))?;
        if !(0.0..=1.0).contains(&prediction) {
            bail!("line {line}: prediction {prediction} outside [0, 1]");
        }
        let label = match row.get(label_idx).unwrap_or("").trim() {
            "0" => 0.0,
            "1" => 1.0,
            other => bail!("line {line}: label '{other}' is not 0 or 1"),
        };
        let mut sample = CalibrationSample::new(
            fitted
                .features
                .iter()
                .zip(&feature_idx)
                .map(|(f, &idx)| f.encoding.encode(row.get(idx).unwrap_or(""), line))
                .collect::<Result<_>>()?,
            prediction,
            label,
        );
        if let Some(t_idx) = truth_idx {
            let t: f64 = row
                .get(t_idx)
                .unwrap_or("")
                .trim()
                .parse()
                .with_context(|| format!("line {line}: true probability is not numeric"))?;
            sample = sample.with_true_prob(t);
        }
        samples.push(sample);
    }
    let names: Vec<String> = fitted.features.iter().map(|f| f.name.clone()).collect();
    let cards: Vec<u32> = fitted
        .features
        .iter()
        .map(|f| f.encoding.cardinality())
        .collect();
    Dataset::from_samples(names, cards, &samples).map_err(Into::into)
}

/// Encodes one raw row into feature identifiers under a frozen schema
/// (used when applying a model without labels).
pub fn encode_row(
    fitted: &FittedSchema,
    header: &[String],
    row: &csv::StringRecord,
    line: usize,
) -> Result<(f64, Vec<u32>)> {
    let pred_idx = column_index(header, &fitted.prediction_column)?;
    let prediction: f64 = row
        .get(pred_idx)
        .unwrap_or("")
        .trim()
        .parse()
        .with_context(|| format!("line {line}: prediction is not numeric"))?;
    let features = fitted
        .features
        .iter()
        .map(|f| {
            let idx = column_index(header, &f.name)?;
            f.encoding.encode(row.get(idx).unwrap_or(""), line)
        })
        .collect::<Result<Vec<u32>>>()?;
    Ok((prediction, features))
}

/// Lookup table from header names to indices, validating presence of the
/// schema's columns (prediction and features; label may be absent).
pub fn check_apply_columns(fitted: &FittedSchema, header: &[String]) -> Result<()> {
    column_index(header, &fitted.prediction_column)?;
    for f in &fitted.features {
        column_index(header, &f.name)?;
    }
    Ok(())
}
