//! Rule-set export: every root-to-leaf path flattened into a conjunction of
//! feature-value conditions, for serving the model from a plain lookup.
//!
//! A rule carries the scaler of every node along its path, so partial
//! matches (a feature value unseen at some split during training) resolve
//! to the scaler of the deepest matched node — exactly what tree routing
//! does, making rule application reproduce [`MbctModel::apply`] bit for
//! bit.

use serde::{Deserialize, Serialize};

use super::{bucket_value, MbctModel, TreeNode, PRED_BUCKET_FEATURE};
use crate::{Error, Result};

/// One equality condition on a feature column. `feature` indexes the base
/// schema; a value of `n_base_features` refers to the derived
/// prediction-bucket feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCondition {
    pub feature: usize,
    pub value: u32,
}

/// One root-to-leaf path of one tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub tree: usize,
    pub conditions: Vec<RuleCondition>,
    /// Node scalers along the path; `multipliers[d]` applies after `d`
    /// matched conditions, the last entry being the leaf scaler.
    pub multipliers: Vec<f64>,
}

/// The flattened model: rules plus the schema facts needed to apply them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub n_base_features: usize,
    pub prediction_buckets: u32,
    pub n_trees: usize,
    pub feature_names: Vec<String>,
    pub rules: Vec<Rule>,
}

pub(super) fn export(model: &MbctModel) -> RuleSet {
    let mut rules = Vec::with_capacity(model.n_leaves());
    for (t, tree) in model.trees.iter().enumerate() {
        let mut conditions = Vec::new();
        let mut multipliers = vec![tree.root.scaler_k];
        collect(
            t,
            &tree.root,
            &mut conditions,
            &mut multipliers,
            &mut rules,
        );
    }
    RuleSet {
        n_base_features: model.n_base_features,
        prediction_buckets: model.config.prediction_buckets,
        n_trees: model.trees.len(),
        feature_names: model.feature_names.clone(),
        rules,
    }
}

fn collect(
    tree: usize,
    node: &TreeNode,
    conditions: &mut Vec<RuleCondition>,
    multipliers: &mut Vec<f64>,
    out: &mut Vec<Rule>,
) {
    match node.split_feature {
        None => out.push(Rule {
            tree,
            conditions: conditions.clone(),
            multipliers: multipliers.clone(),
        }),
        Some(f) => {
            for &(value, ref child) in &node.children {
                conditions.push(RuleCondition { feature: f, value });
                multipliers.push(child.scaler_k);
                collect(tree, child, conditions, multipliers, out);
                conditions.pop();
                multipliers.pop();
            }
        }
    }
}

impl RuleSet {
    /// Applies the rule set to one sample: per tree, the rule with the
    /// longest matching condition prefix supplies the multiplier at its
    /// matched depth.
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
        for tree in 0..self.n_trees {
            let bucket = bucket_value(current, self.prediction_buckets);
            let mut best_depth = 0usize;
            let mut best_k = f64::NAN;
            for rule in self.rules.iter().filter(|r| r.tree == tree) {
                let d = self.matched_depth(rule, features, bucket);
                if best_k.is_nan() || d > best_depth {
                    best_depth = d;
                    best_k = rule.multipliers[d];
                }
            }
            if !best_k.is_nan() {
                current = (current * best_k).clamp(0.0, 1.0);
            }
        }
        Ok(current)
    }

    fn matched_depth(&self, rule: &Rule, features: &[u32], bucket: Option<u32>) -> usize {
        for (d, cond) in rule.conditions.iter().enumerate() {
            let value = if cond.feature < self.n_base_features {
                features[cond.feature]
            } else {
                match bucket {
                    Some(b) => b,
                    None => return d,
                }
            };
            if value != cond.value {
                return d;
            }
        }
        rule.conditions.len()
    }

    /// Human-readable listing, one rule per line.
    pub fn render_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let name = |f: usize| -> &str {
            self.feature_names
                .get(f)
                .map(String::as_str)
                .unwrap_or(if f == self.n_base_features {
                    PRED_BUCKET_FEATURE
                } else {
                    "?"
                })
        };
        for rule in &self.rules {
            let _ = write!(s, "tree={} IF ", rule.tree);
            if rule.conditions.is_empty() {
                s.push_str("TRUE");
            } else {
                for (i, c) in rule.conditions.iter().enumerate() {
                    if i > 0 {
                        s.push_str(" AND ");
                    }
                    let _ = write!(s, "{}={}", name(c.feature), c.value);
                }
            }
            let _ = writeln!(
                s,
                " THEN k={:.9} (path {})",
                rule.multipliers.last().unwrap(),
                rule.multipliers
                    .iter()
                    .map(|k| format!("{k:.6}"))
                    .collect::<Vec<_>>()
                    .join(" -> ")
            );
        }
        s
    }
}
