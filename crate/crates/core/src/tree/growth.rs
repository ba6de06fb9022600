//! Greedy tree growth and the boosting loop.
//!
//! One tree grows root-down. A node is split when three conditions hold:
//! the depth cap is not reached, every child of the best candidate feature
//! keeps at least the minimum bin mass, and the node's local multi-view
//! loss strictly decreases after splitting and calibrating the children.
//! Candidate features are scored against the same division draws, so the
//! search is reproducible and parallelizes without changing the outcome.
//!
//! Boosting stacks trees multiplicatively. Before each tree the derived
//! prediction-bucket feature is recomputed from the current boosted output,
//! the tree is grown against those outputs, and it is accepted only when
//! the global multi-view loss (training or holdout, per config) strictly
//! decreases; the first rejected tree stops the loop.

use super::{bucket_value, CalibrationTree, MbctConfig, MbctModel, TreeNode, PRED_BUCKET_FEATURE};

/// Headroom factor of the split-acceptance margin over the analytic
/// overfit scale; see the acceptance check in `build_node`.
const SPLIT_GAIN_SAFETY: f64 = 2.0;
use crate::data::{compute_bin_stats, Dataset};
use crate::division::canonical_runs;
use crate::exec::map_indexed;
use crate::metrics::mvce_with_runs;
use crate::rng::{mix, DetRng};
use crate::{Error, Result};

/// Multiplicative scaler of one bin: the ratio of the bin's weighted mean
/// label to its weighted mean current prediction, clamped so no training
/// prediction leaves `[0, 1]`. A zero mean prediction falls back to 1.
pub fn fit_node_scaler(dataset: &Dataset, indices: &[usize], current: &[f64]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::EmptyBin);
    }
    let weights = dataset.weights();
    let labels = dataset.labels();
    let mut y_sum = 0.0;
    let mut p_sum = 0.0;
    let mut x_max = 0.0f64;
    for &i in indices {
        let w = weights[i];
        y_sum += w * labels[i];
        p_sum += w * current[i];
        x_max = x_max.max(current[i]);
    }
    if p_sum <= 0.0 {
        return Ok(1.0);
    }
    let k = y_sum / p_sum;
    if x_max > 0.0 && k * x_max > 1.0 {
        Ok(1.0 / x_max)
    } else {
        Ok(k)
    }
}

/// Best split of a node: the feature whose tentative split plus per-child
/// calibration minimizes the node's local multi-view loss.
///
/// Candidates must partition the node into at least two value groups, each
/// holding at least `min_child_weight` mass. Ties break toward the lowest
/// feature index. `None` when no feature qualifies.
pub fn select_split_feature(
    dataset: &Dataset,
    indices: &[usize],
    config: &MbctConfig,
    loss_bin_size: usize,
    min_child_weight: f64,
    rng: &DetRng,
) -> Result<Option<(usize, f64)>> {
    let node_weight: f64 = indices.iter().map(|&i| dataset.weights()[i]).sum();
    if node_weight < 2.0 * loss_bin_size as f64 {
        return Ok(None);
    }
    let runs = canonical_runs(dataset, indices);
    Ok(
        evaluate_candidates(
            dataset,
            indices,
            &runs,
            node_weight,
            config,
            loss_bin_size,
            min_child_weight,
            rng,
        )?
        .map(|c| (c.feature, c.loss)),
    )
}

struct SplitCandidate {
    feature: usize,
    loss: f64,
    /// (feature value, member indices, child scaler), ordered by value.
    groups: Vec<(u32, Vec<usize>, f64)>,
}

#[allow(clippy::too_many_arguments)]
fn evaluate_candidates(
    dataset: &Dataset,
    indices: &[usize],
    runs: &crate::division::CanonicalRuns,
    node_weight: f64,
    config: &MbctConfig,
    loss_bin_size: usize,
    min_child_weight: f64,
    rng: &DetRng,
) -> Result<Option<SplitCandidate>> {
    let current = dataset.predictions();
    let weights = dataset.weights();
    let candidates = map_indexed(dataset.n_features(), |f| -> Result<Option<SplitCandidate>> {
        let col = dataset.feature_column(f);
        let card = dataset.feature_cardinalities()[f] as usize;
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); card];
        for &i in indices {
            buckets[col[i] as usize].push(i);
        }
        let mut groups: Vec<(u32, Vec<usize>, f64)> = Vec::new();
        for (value, members) in buckets.into_iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let gw: f64 = members.iter().map(|&i| weights[i]).sum();
            if gw < min_child_weight {
                return Ok(None); // an undersized child vetoes the feature
            }
            groups.push((value as u32, members, 0.0));
        }
        if groups.len() < 2 {
            return Ok(None);
        }
        // tentative per-child calibration, then the node's loss under it
        let mut calibrated = vec![0.0f64; dataset.len()];
        for (_, members, k) in &mut groups {
            *k = fit_node_scaler(dataset, members, current)?;
            for &i in members.iter() {
                calibrated[i] = (*k * current[i]).min(1.0);
            }
        }
        let (loss, _) = mvce_with_runs(
            dataset,
            runs,
            node_weight,
            &calibrated,
            loss_bin_size,
            config.r,
            config.p,
            rng,
        )?;
        Ok(Some(SplitCandidate {
            feature: f,
            loss,
            groups,
        }))
    });

    let mut best: Option<SplitCandidate> = None;
    for c in candidates {
        if let Some(c) = c? {
            // strict comparison keeps the lowest feature index on ties
            if best.as_ref().is_none_or(|b| c.loss < b.loss) {
                best = Some(c);
            }
        }
    }
    Ok(best)
}

struct GrowthCtx<'a> {
    dataset: &'a Dataset,
    config: &'a MbctConfig,
    min_child_weight: f64,
    loss_bin_size: usize,
    tree_rng: DetRng,
}

/// Grows one tree over `indices`, calibrating against the dataset's current
/// predictions.
pub fn grow_tree(
    dataset: &Dataset,
    indices: &[usize],
    config: &MbctConfig,
    beta: usize,
    rng: &DetRng,
) -> Result<CalibrationTree> {
    let ctx = GrowthCtx {
        dataset,
        config,
        min_child_weight: beta as f64,
        loss_bin_size: (beta / 2).max(2),
        tree_rng: rng.clone(),
    };
    let root = build_node(&ctx, indices.to_vec(), 0, 0)?;
    let depth = root.depth();
    Ok(CalibrationTree { root, depth })
}

fn build_node(
    ctx: &GrowthCtx<'_>,
    indices: Vec<usize>,
    depth: usize,
    path_tag: u64,
) -> Result<TreeNode> {
    let dataset = ctx.dataset;
    let node_stats = compute_bin_stats(dataset, &indices, None)?;
    let scaler_k = fit_node_scaler(dataset, &indices, dataset.predictions())?;
    let mut node = TreeNode {
        split_feature: None,
        children: Default::default(),
        scaler_k,
        node_stats,
        local_mvce_before: None,
        local_mvce_after: None,
    };
    if depth >= ctx.config.max_depth
        || node_stats.count < 2.0 * ctx.loss_bin_size as f64
        || node_stats.count < 2.0 * ctx.min_child_weight
    {
        return Ok(node);
    }

    let node_rng = ctx.tree_rng.derive(&[path_tag]);
    let runs = canonical_runs(dataset, &indices);
    let calibrated_self: Vec<f64> = {
        let mut v = vec![0.0f64; dataset.len()];
        for &i in &indices {
            v[i] = (scaler_k * dataset.predictions()[i]).min(1.0);
        }
        v
    };
    let (before, _) = mvce_with_runs(
        dataset,
        &runs,
        node_stats.count,
        &calibrated_self,
        ctx.loss_bin_size,
        ctx.config.r,
        ctx.config.p,
        &node_rng,
    )?;
    node.local_mvce_before = Some(before);

    let best = evaluate_candidates(
        dataset,
        &indices,
        &runs,
        node_stats.count,
        ctx.config,
        ctx.loss_bin_size,
        ctx.min_child_weight,
        &node_rng,
    )?;
    let Some(best) = best else {
        return Ok(node);
    };
    // In-sample scoring flatters a split: fitting one scaler per child
    // chases label noise and shaves roughly (children - 1) * bin_size /
    // (2 * mass) off the relative loss even when the feature carries no
    // signal. The split must clear that artifact with headroom, not just
    // tie it.
    let overfit_margin = SPLIT_GAIN_SAFETY
        * ((best.groups.len() - 1) as f64 * ctx.loss_bin_size as f64 / node_stats.count).min(0.25);
    if best.loss >= before * (1.0 - overfit_margin) {
        return Ok(node);
    }

    node.split_feature = Some(best.feature);
    node.local_mvce_after = Some(best.loss);
    for (value, members, _) in best.groups {
        let child_tag = mix(mix(path_tag ^ mix(best.feature as u64)) ^ u64::from(value));
        let child = build_node(ctx, members, depth + 1, child_tag)?;
        node.children.push((value, child));
    }
    Ok(node)
}

/// Per-sample multiplier of one tree over a stage dataset (which carries
/// the derived bucket feature as a real column).
fn tree_multipliers(tree: &CalibrationTree, stage: &Dataset) -> Vec<f64> {
    let mut features = vec![0u32; stage.n_features()];
    (0..stage.len())
        .map(|i| {
            for (f, slot) in features.iter_mut().enumerate() {
                *slot = stage.feature_column(f)[i];
            }
            tree.multiplier(&features, None)
        })
        .collect()
}

pub(super) fn fit(dataset: &Dataset, config: &MbctConfig) -> Result<MbctModel> {
    let beta = match config.min_bin_size_override {
        Some(b) => {
            if b < 2 {
                return Err(Error::InvalidConfig("min bin size must be >= 2".into()));
            }
            b
        }
        None => super::solve_min_bin_size(dataset, config.alpha, config.e)?,
    };
    let total = dataset.total_weight();
    if total < 2.0 * beta as f64 {
        return Err(Error::InvalidDataset(format!(
            "dataset mass {total} below two bins of {beta}"
        )));
    }

    let root_rng = DetRng::new(config.seed);
    let n = dataset.len();
    let all: Vec<usize> = (0..n).collect();
    let (train_idx, eval_idx) = match config.holdout_fraction {
        None => (all.clone(), all),
        Some(f) => {
            let mut order = all;
            let mut split_rng = root_rng.derive(&[0x401d]);
            use rand::Rng;
            for i in (1..order.len()).rev() {
                let j = split_rng.random_range(0..=i);
                order.swap(i, j);
            }
            let cut = ((n as f64) * (1.0 - f)).round().max(1.0) as usize;
            let (train, holdout) = order.split_at(cut.min(n - 1));
            let mut train = train.to_vec();
            let mut holdout = holdout.to_vec();
            train.sort_unstable();
            holdout.sort_unstable();
            (train, holdout)
        }
    };

    // a fixed division source scores every candidate ensemble, so the
    // acceptance comparison is apples to apples
    let global_rng = root_rng.derive(&[0x910b]);
    let eval_runs = canonical_runs(dataset, &eval_idx);
    let eval_weight: f64 = eval_idx.iter().map(|&i| dataset.weights()[i]).sum();
    let global_loss = |calibrated: &[f64]| -> Result<f64> {
        Ok(mvce_with_runs(
            dataset,
            &eval_runs,
            eval_weight,
            calibrated,
            beta,
            config.r,
            config.p,
            &global_rng,
        )?
        .0)
    };

    let mut current: Vec<f64> = dataset.predictions().to_vec();
    let mut global_mvce_per_tree = vec![global_loss(&current)?];
    let mut trees = Vec::new();

    for t in 0..config.max_trees {
        let stage = stage_dataset(dataset, &current, config.prediction_buckets)?;
        let tree = grow_tree(
            &stage,
            &train_idx,
            config,
            beta,
            &root_rng.derive(&[0x7ee5, t as u64]),
        )?;
        let multipliers = tree_multipliers(&tree, &stage);
        let candidate: Vec<f64> = current
            .iter()
            .zip(&multipliers)
            .map(|(&c, &m)| (c * m).clamp(0.0, 1.0))
            .collect();
        let loss = global_loss(&candidate)?;
        if loss < *global_mvce_per_tree.last().unwrap() {
            trees.push(tree);
            current = candidate;
            global_mvce_per_tree.push(loss);
        } else {
            break;
        }
    }

    let mut feature_names = dataset.feature_names().to_vec();
    if config.prediction_buckets > 0 {
        feature_names.push(PRED_BUCKET_FEATURE.to_string());
    }
    Ok(MbctModel {
        trees,
        config: config.clone(),
        min_bin_size: beta,
        global_mvce_per_tree,
        n_base_features: dataset.n_features(),
        feature_names,
    })
}

/// The dataset one boosting stage sees: current boosted outputs as the
/// prediction column plus the recomputed bucket feature.
fn stage_dataset(dataset: &Dataset, current: &[f64], buckets: u32) -> Result<Dataset> {
    let extra = (buckets > 0).then(|| {
        let col: Vec<u32> = current
            .iter()
            .map(|&c| bucket_value(c, buckets).expect("buckets > 0"))
            .collect();
        (PRED_BUCKET_FEATURE.to_string(), buckets, col)
    });
    dataset.stage_view(current.to_vec(), extra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CalibrationSample;
    use crate::sim::FeatureBiasFixture;

    fn biased_two_group(n: usize, seed: u64) -> Dataset {
        FeatureBiasFixture::two_group()
            .sample(n, &mut DetRng::new(seed))
            .unwrap()
    }

    #[test]
    fn scaler_is_mean_ratio() {
        // labels mean 0.06, predictions mean 0.05 -> k = 1.2
        let samples = vec![
            CalibrationSample::new(vec![], 0.05, 0.0).with_weight(94.0),
            CalibrationSample::new(vec![], 0.05, 1.0).with_weight(6.0),
        ];
        let ds = Dataset::from_samples(vec![], vec![], &samples).unwrap();
        let k = fit_node_scaler(&ds, &[0, 1], ds.predictions()).unwrap();
        assert!((k - 1.2).abs() < 1e-12);
    }

    #[test]
    fn scaler_clamps_to_probability_range() {
        let samples = vec![
            CalibrationSample::new(vec![], 0.9, 1.0),
            CalibrationSample::new(vec![], 0.5, 1.0),
            CalibrationSample::new(vec![], 0.7, 1.0),
            CalibrationSample::new(vec![], 0.9, 0.0),
        ];
        // raw k = mean_label / mean_pred = 0.75 / 0.75 = 1.0; bump labels
        let samples: Vec<_> = samples
            .into_iter()
            .map(|mut s| {
                s.label = 1.0;
                s
            })
            .collect();
        let ds = Dataset::from_samples(vec![], vec![], &samples).unwrap();
        // raw k = 1 / 0.75 = 1.333; max prediction 0.9 -> clamp to 1/0.9
        let k = fit_node_scaler(&ds, &[0, 1, 2, 3], ds.predictions()).unwrap();
        assert!((k - 1.0 / 0.9).abs() < 1e-12);
    }

    #[test]
    fn scaler_identity_when_calibrated() {
        let samples = vec![
            CalibrationSample::new(vec![], 0.5, 1.0),
            CalibrationSample::new(vec![], 0.5, 0.0),
        ];
        let ds = Dataset::from_samples(vec![], vec![], &samples).unwrap();
        let k = fit_node_scaler(&ds, &[0, 1], ds.predictions()).unwrap();
        assert!((k - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_mean_prediction_falls_back_to_identity() {
        let samples = vec![
            CalibrationSample::new(vec![], 0.0, 0.0),
            CalibrationSample::new(vec![], 0.0, 1.0),
        ];
        let ds = Dataset::from_samples(vec![], vec![], &samples).unwrap();
        let k = fit_node_scaler(&ds, &[0, 1], ds.predictions()).unwrap();
        assert_eq!(k, 1.0);
    }

    #[test]
    fn bias_feature_selected_over_noise() {
        let ds = biased_two_group(20_000, 31);
        let config = MbctConfig {
            r: 30,
            seed: 5,
            ..Default::default()
        };
        let idx: Vec<usize> = (0..ds.len()).collect();
        let rng = DetRng::new(9);
        let (feature, _) = select_split_feature(&ds, &idx, &config, 250, 500.0, &rng)
            .unwrap()
            .expect("a split must qualify");
        assert_eq!(feature, 0, "the bias group feature must win");
    }

    #[test]
    fn constant_features_yield_no_split() {
        let samples: Vec<_> = (0..100)
            .map(|i| {
                CalibrationSample::new(vec![1], 0.3 + 0.001 * (i % 7) as f64, f64::from(u8::from(i % 3 == 0)))
            })
            .collect();
        let ds = Dataset::from_samples(vec!["c".into()], vec![3], &samples).unwrap();
        let config = MbctConfig {
            r: 10,
            ..Default::default()
        };
        let idx: Vec<usize> = (0..ds.len()).collect();
        let rng = DetRng::new(1);
        assert!(select_split_feature(&ds, &idx, &config, 10, 2.0, &rng)
            .unwrap()
            .is_none());
    }

    #[test]
    fn duplicated_feature_ties_break_low_index() {
        // identical columns at index 0 and 1
        let mut rng = DetRng::new(77);
        use rand::Rng;
        let samples: Vec<_> = (0..4000)
            .map(|_| {
                let g = rng.random_range(0..2u32);
                let p = 0.3 + 0.2 * rng.random::<f64>();
                let mult = if g == 0 { 1.25 } else { 0.8 };
                let y = f64::from(u8::from(rng.random::<f64>() < p / mult));
                CalibrationSample::new(vec![g, g], p, y)
            })
            .collect();
        let ds = Dataset::from_samples(
            vec!["a".into(), "b".into()],
            vec![2, 2],
            &samples,
        )
        .unwrap();
        let config = MbctConfig {
            r: 20,
            ..Default::default()
        };
        let idx: Vec<usize> = (0..ds.len()).collect();
        let rng = DetRng::new(2);
        let (feature, _) = select_split_feature(&ds, &idx, &config, 100, 200.0, &rng)
            .unwrap()
            .expect("split expected");
        assert_eq!(feature, 0);
    }

    #[test]
    fn homogeneous_data_grows_root_only() {
        // no feature-dependent bias: splits should not pass the local test
        let mut root_only = 0;
        for seed in 0..20 {
            let fx = FeatureBiasFixture {
                group_multipliers: vec![1.0, 1.0],
                ..FeatureBiasFixture::two_group()
            };
            let ds = fx.sample(4_000, &mut DetRng::new(1000 + seed)).unwrap();
            let config = MbctConfig {
                r: 20,
                seed,
                max_trees: 1,
                min_bin_size_override: Some(200),
                ..Default::default()
            };
            let model = MbctModel::fit(&ds, &config).unwrap();
            let depth = model.trees.first().map_or(0, |t| t.depth);
            if depth == 0 {
                root_only += 1;
            }
            assert!(depth <= 1, "seed {seed}: depth {depth}");
        }
        assert!(root_only >= 16, "only {root_only}/20 runs stayed root-only");
    }

    #[test]
    fn two_group_fixture_recovers_multipliers() {
        let ds = biased_two_group(40_000, 8);
        let config = MbctConfig {
            r: 40,
            seed: 3,
            max_trees: 2,
            min_bin_size_override: Some(2_000),
            ..Default::default()
        };
        let model = MbctModel::fit(&ds, &config).unwrap();
        assert!(!model.trees.is_empty());
        let first = &model.trees[0];
        assert_eq!(first.root.split_feature, Some(0));
        let k0 = first.root.child(0).unwrap().scaler_k;
        let k1 = first.root.child(1).unwrap().scaler_k;
        assert!((k0 - 1.0 / 1.3).abs() < 0.03, "k0 = {k0}");
        assert!((k1 - 1.0 / 0.7).abs() < 0.03, "k1 = {k1}");
    }

    #[test]
    fn global_loss_strictly_decreases() {
        let ds = biased_two_group(30_000, 12);
        let config = MbctConfig {
            r: 30,
            seed: 4,
            min_bin_size_override: Some(1_500),
            ..Default::default()
        };
        let model = MbctModel::fit(&ds, &config).unwrap();
        for w in model.global_mvce_per_tree.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(model.trees.len() <= config.max_trees);
    }

    #[test]
    fn fit_is_deterministic() {
        let ds = biased_two_group(10_000, 15);
        let config = MbctConfig {
            r: 20,
            seed: 11,
            min_bin_size_override: Some(600),
            ..Default::default()
        };
        let a = MbctModel::fit(&ds, &config).unwrap();
        let b = MbctModel::fit(&ds, &config).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn split_diagnostics_record_improvement() {
        let ds = biased_two_group(20_000, 19);
        let config = MbctConfig {
            r: 20,
            seed: 2,
            min_bin_size_override: Some(1_000),
            ..Default::default()
        };
        let model = MbctModel::fit(&ds, &config).unwrap();
        fn walk(node: &TreeNode, mut check: impl FnMut(&TreeNode) + Copy) {
            check(node);
            for (_, c) in &node.children {
                walk(c, check);
            }
        }
        for tree in &model.trees {
            walk(&tree.root, |n| {
                if n.split_feature.is_some() {
                    let before = n.local_mvce_before.unwrap();
                    let after = n.local_mvce_after.unwrap();
                    assert!(after < before);
                }
            });
        }
    }

    #[test]
    fn apply_routes_and_multiplies() {
        let ds = biased_two_group(20_000, 23);
        let config = MbctConfig {
            r: 20,
            seed: 6,
            max_trees: 1,
            min_bin_size_override: Some(1_000),
            prediction_buckets: 0,
            ..Default::default()
        };
        let model = MbctModel::fit(&ds, &config).unwrap();
        let tree = &model.trees[0];
        assert_eq!(tree.root.split_feature, Some(0));
        let k0 = tree.root.child(0).unwrap().scaler_k;
        let got = model.apply(0.6, &[0, 2]).unwrap();
        assert!((got - (0.6 * k0).clamp(0.0, 1.0)).abs() < 1e-12);
        // schema mismatch
        assert!(model.apply(0.6, &[0]).is_err());
    }

    #[test]
    fn unseen_value_stops_at_parent() {
        let ds = biased_two_group(20_000, 27);
        let config = MbctConfig {
            r: 20,
            seed: 7,
            max_trees: 1,
            min_bin_size_override: Some(1_000),
            prediction_buckets: 0,
            ..Default::default()
        };
        let model = MbctModel::fit(&ds, &config).unwrap();
        let tree = &model.trees[0];
        // noise feature has cardinality 4; fabricate a model whose root
        // splits on it and probe a value absent from the children map
        let missing: u32 = 3;
        let root_k = tree.root.scaler_k;
        if tree.root.child(missing).is_some() {
            return; // fixture covered every value at the root split
        }
        // feature 0 value `missing` is out of the training range only if
        // cardinality allowed it; group feature has cardinality 2, so this
        // exercises the fallback path through the routing helper directly
        let k = tree.multiplier(&[missing, 0], None);
        assert_eq!(k, root_k);
    }
}
