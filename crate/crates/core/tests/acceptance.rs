//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured evidence.
//!
//! Run with `cargo test -p mbct-core --test acceptance -- --nocapture`.

use std::time::Instant;

use mbct_core::calibrators::{
    BetaParams, BinTable, Calibrator, IsotonicFit, PlattParams, ScalingBinning,
};
use mbct_core::data::{aggregate_dataset, CalibrationSample, Dataset};
use mbct_core::metrics::{
    auc, classify_monotonicity, ece_n, mvce, pce, pud_subgroups, tce, MetricConfig, Monotonicity,
    SubgroupKey,
};
use mbct_core::model::CalibratorModel;
use mbct_core::rng::DetRng;
use mbct_core::sim::{sample_scenario, FeatureBiasFixture, SimMetric, SimScenario};
use mbct_core::tree::{
    solve_min_bin_size_from_stats, MbctConfig, MbctModel,
};
use rand::Rng;

/// Criterion 6 improvement threshold, frozen after calibrating against the
/// brute-force per-group oracle calibrator: the oracle itself achieves an
/// 8.6-10.7% multi-view error reduction over histogram binning on this
/// fixture across seeds (Bernoulli label noise bounds what any calibrator
/// can show), and the tree model matches the oracle. 5% keeps two sigma of
/// headroom under that measured floor.
const FIXTURE_MVCE_IMPROVEMENT: f64 = 0.05;

fn fixture_split(fx: &FeatureBiasFixture, n: usize, seed: u64) -> (Dataset, Dataset) {
    let train = fx.sample(n, &mut DetRng::new(seed)).unwrap();
    let test = fx.sample(n, &mut DetRng::new(seed ^ 0xabcd_1234)).unwrap();
    (train, test)
}

/// Groups test indices by the tree-0 bin they route to.
fn leaf_groups(model: &MbctModel, ds: &Dataset) -> Vec<Vec<usize>> {
    use std::collections::BTreeMap;
    let tree = &model.trees[0];
    let mut groups: BTreeMap<Vec<(usize, u32)>, Vec<usize>> = BTreeMap::new();
    let mut features = vec![0u32; model.n_base_features];
    for i in 0..ds.len() {
        for (f, slot) in features.iter_mut().enumerate() {
            *slot = ds.feature_column(f)[i];
        }
        let bucket = model.bucket_of(ds.predictions()[i]);
        groups
            .entry(tree.route_path(&features, bucket))
            .or_default()
            .push(i);
    }
    groups.into_values().collect()
}

#[test]
fn criterion_01_metric_bias_ordering() {
    let start = Instant::now();
    let m = 200;
    // the multi-view metric needs enough division draws to be stable but
    // the study never pins their number; 25 keeps the cell budget sane
    let r = 25;
    let n_bins = 32;
    let reps = 10;

    let scenario = SimScenario::primary();
    let metrics = [SimMetric::Mvce, SimMetric::EceSweep, SimMetric::EceN];
    let mut full_ordering = 0;
    for rep in 0..reps {
        let mut ok = true;
        for &n in &[10_000usize, 30_000, 100_000] {
            // all three metrics score identical dataset draws
            let cell = DetRng::new(0xc1_000 + rep).derive(&[n as u64]);
            let res =
                mbct_core::sim::estimate_e_bias_multi(&scenario, &metrics, n, n_bins, m, r, &cell)
                    .unwrap();
            let (e_mvce, e_sweep, e_ece) =
                (res[0].e_bias_hat, res[1].e_bias_hat, res[2].e_bias_hat);
            if !(e_mvce < e_sweep && e_sweep < e_ece) {
                ok = false;
                println!(
                    "  rep {rep} n={n}: mvce {e_mvce:.5} sweep {e_sweep:.5} ece {e_ece:.5} (ordering broken)"
                );
            }
        }
        full_ordering += usize::from(ok);
    }
    assert!(
        full_ordering >= 9,
        "full ordering held in only {full_ordering}/{reps} repetitions"
    );

    // supplementary scenarios: the multi-view metric stays less biased than
    // the fixed-bin error
    for (name, scenario) in [
        ("Beta(0.4,0.7) q=2", SimScenario::supplementary_a()),
        ("Beta(0.6,0.7) q=3", SimScenario::supplementary_b()),
    ] {
        let mut wins = 0;
        for rep in 0..reps {
            let cell = DetRng::new(0xc1_700 + rep).derive(&[1]);
            let res = mbct_core::sim::estimate_e_bias_multi(
                &scenario,
                &[SimMetric::Mvce, SimMetric::EceN],
                10_000,
                n_bins,
                100,
                r,
                &cell,
            )
            .unwrap();
            wins += usize::from(res[0].e_bias_hat < res[1].e_bias_hat);
        }
        assert!(wins >= 9, "{name}: mvce < ece in only {wins}/{reps} reps");
    }

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() <= 300,
        "criterion 1 took {elapsed:?}, budget is 5 minutes"
    );
    println!(
        "criterion 1 PASS: e-bias ordering mvce < ece-sweep < ece in {full_ordering}/{reps} reps \
         at n in {{1e4, 3e4, 1e5}}; supplementary scenarios mvce < ece; elapsed {elapsed:.1?}"
    );
}

#[test]
fn criterion_02_tce_oracle() {
    let n = 1_000_000;
    for (name, scenario) in [
        ("Beta(0.2,0.7) q=2", SimScenario::primary()),
        ("Beta(0.4,0.7) q=2", SimScenario::supplementary_a()),
        ("Beta(0.6,0.7) q=3", SimScenario::supplementary_b()),
    ] {
        let mut rng = DetRng::new(0xc2);
        let ds = sample_scenario(&scenario, n, &mut rng).unwrap();
        for p in [1.0, 2.0] {
            let monte_carlo = tce(&ds, ds.predictions(), p).unwrap();
            let analytic = scenario.analytic_tce(p);
            assert!(
                (monte_carlo - analytic).abs() < 1e-3,
                "{name} p={p}: monte carlo {monte_carlo} vs analytic {analytic}"
            );
        }
    }
    let primary = SimScenario::primary();
    println!(
        "criterion 2 PASS: monte-carlo tce at n=1e6 within 1e-3 of analytic for all three \
         scenarios; primary analytic l2 {:.5} / l1 {:.5}, previously reported {} (recorded, not asserted)",
        primary.analytic_tce(2.0),
        primary.analytic_tce(1.0),
        mbct_core::sim::PRIMARY_SCENARIO_REPORTED_TCE,
    );
}

#[test]
fn criterion_03_binning_guarantee() {
    // histogram: per fitted bin, output equals the weighted mean label
    let fx = FeatureBiasFixture::two_group();
    let (train, _) = fixture_split(&fx, 20_000, 0xc3);
    let (table, division) = BinTable::fit_detailed(&train, 20).unwrap();
    let calibrated: Vec<f64> = train
        .predictions()
        .iter()
        .map(|&p| table.lookup(p))
        .collect();
    for bin in &division.bins {
        let v = pce(&train, bin, &calibrated).unwrap();
        assert!(v < 1e-9, "histogram bin pce {v}");
    }

    // tree model: every node's scaler zeroes its bin's training error at
    // its boosting stage; recomputed here from raw predictions and routing
    let config = MbctConfig {
        seed: 3,
        min_bin_size_override: Some(800),
        ..Default::default()
    };
    let model = MbctModel::fit(&train, &config).unwrap();
    assert!(
        model.trees.iter().any(|t| t.depth >= 1),
        "fixture must produce at least one split tree"
    );
    let mut current: Vec<f64> = train.predictions().to_vec();
    let mut checked = 0;
    for tree in &model.trees {
        use std::collections::BTreeMap;
        let mut bins: BTreeMap<Vec<(usize, u32)>, Vec<usize>> = BTreeMap::new();
        let mut features = vec![0u32; model.n_base_features];
        for (i, &cur) in current.iter().enumerate() {
            for (f, slot) in features.iter_mut().enumerate() {
                *slot = train.feature_column(f)[i];
            }
            let bucket = model.bucket_of(cur);
            bins.entry(tree.route_path(&features, bucket))
                .or_default()
                .push(i);
        }
        for (path, members) in &bins {
            // k of the routed node, recovered through the public router
            let mut feats = vec![0u32; model.n_base_features];
            let i0 = members[0];
            for (f, slot) in feats.iter_mut().enumerate() {
                *slot = train.feature_column(f)[i0];
            }
            let k = tree.multiplier(&feats, model.bucket_of(current[i0]));
            let mut w = 0.0;
            let mut wy = 0.0;
            let mut wp = 0.0;
            for &i in members {
                let wi = train.weights()[i];
                w += wi;
                wy += wi * train.labels()[i];
                wp += wi * (k * current[i]);
            }
            let bin_pce = (wp / w - wy / w).abs();
            assert!(bin_pce < 1e-9, "tree bin {path:?} pce {bin_pce}");
            checked += 1;
        }
        // advance the boosting stage
        let mut feats = vec![0u32; model.n_base_features];
        for (i, slot_pred) in current.iter_mut().enumerate() {
            for (f, slot) in feats.iter_mut().enumerate() {
                *slot = train.feature_column(f)[i];
            }
            let k = tree.multiplier(&feats, model.bucket_of(*slot_pred));
            *slot_pred = (*slot_pred * k).clamp(0.0, 1.0);
        }
    }
    println!(
        "criterion 3 PASS: training pce zero within 1e-9 for {} histogram bins and {checked} tree bins",
        division.bins.len()
    );
}

#[test]
fn criterion_04_isotonic_optimality() {
    let mut rng = DetRng::new(0xc4);
    let mut checked = 0;
    for _ in 0..1000 {
        let n = 2 + (rng.next_below(7) as usize);
        let labels: Vec<f64> = (0..n)
            .map(|_| f64::from(u8::from(rng.random::<f64>() < 0.5)))
            .collect();
        let mut preds: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        preds.sort_unstable_by(f64::total_cmp);
        preds.dedup();
        if preds.len() < n {
            continue; // duplicate predictions pre-pool; keep the oracle simple
        }
        let weights: Vec<f64> = (0..n).map(|_| 0.25 + 3.75 * rng.random::<f64>()).collect();
        let samples: Vec<_> = (0..n)
            .map(|i| {
                CalibrationSample::new(vec![], preds[i], labels[i]).with_weight(weights[i])
            })
            .collect();
        let ds = Dataset::from_samples(vec![], vec![], &samples).unwrap();
        let fit = IsotonicFit::fit(&ds).unwrap();
        let fitted: Vec<f64> = preds.iter().map(|&x| fit.apply(x, &[])).collect();

        // exhaustive search over consecutive-block partitions
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0..(1u32 << (n - 1)) {
            let mut cand = vec![0.0; n];
            let mut lo = 0;
            let mut means: Vec<f64> = Vec::new();
            for hi in 0..n {
                if hi == n - 1 || mask & (1 << hi) != 0 {
                    let wy: f64 = (lo..=hi).map(|i| weights[i] * labels[i]).sum();
                    let w: f64 = (lo..=hi).map(|i| weights[i]).sum();
                    let m = wy / w;
                    means.push(m);
                    for v in cand.iter_mut().take(hi + 1).skip(lo) {
                        *v = m;
                    }
                    lo = hi + 1;
                }
            }
            if means.windows(2).any(|w| w[0] > w[1]) {
                continue;
            }
            let sse: f64 = (0..n)
                .map(|i| weights[i] * (labels[i] - cand[i]).powi(2))
                .sum();
            if best.as_ref().is_none_or(|(b, _)| sse < *b) {
                best = Some((sse, cand));
            }
        }
        let (_, oracle) = best.unwrap();
        for (a, b) in fitted.iter().zip(&oracle) {
            assert!(
                (a - b).abs() < 1e-9,
                "instance {checked}: pav {fitted:?} vs oracle {oracle:?}"
            );
        }
        checked += 1;
    }
    assert!(checked >= 900);
    println!("criterion 4 PASS: pav equals the brute-force monotone optimum on {checked} instances");
}

#[test]
fn criterion_05_auc_oracle() {
    let mut rng = DetRng::new(0xc5);
    for case in 0..100 {
        let n = 10 + rng.next_below(991) as usize;
        let labels: Vec<f64> = (0..n)
            .map(|_| f64::from(u8::from(rng.random::<f64>() < 0.35)))
            .collect();
        if labels.iter().all(|&l| l == labels[0]) {
            continue;
        }
        // quantized scores guarantee ties
        let levels = 2.0 + rng.next_below(30) as f64;
        let scores: Vec<f64> = (0..n)
            .map(|_| (rng.random::<f64>() * levels).floor() / levels)
            .collect();
        let fast = auc(&labels, &scores).unwrap();
        let (mut wins, mut ties, mut pairs) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..n {
            if labels[i] < 0.5 {
                continue;
            }
            for j in 0..n {
                if labels[j] >= 0.5 {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    ties += 1.0;
                }
            }
        }
        let oracle = (wins + 0.5 * ties) / pairs;
        assert_eq!(fast, oracle, "case {case}: {fast} vs {oracle}");
    }
    println!("criterion 5 PASS: rank auc equals the pairwise oracle exactly on 100 tied datasets");
}

#[test]
fn criterion_06_feature_bias_recovery() {
    let start = Instant::now();
    let fx = FeatureBiasFixture::two_group();
    let (train, test) = fixture_split(&fx, 100_000, 0xc6);

    let config = MbctConfig {
        seed: 6,
        ..Default::default()
    };
    let model = MbctModel::fit(&train, &config).unwrap();
    let beta = model.min_bin_size;
    let hist = BinTable::fit(&train, train.len() / beta).unwrap();

    let mbct_cal = model.apply_dataset(&test).unwrap();
    let hist_cal: Vec<f64> = test.predictions().iter().map(|&p| hist.lookup(p)).collect();
    let cfg = MetricConfig::new(beta).with_seed(61);
    let m_mbct = mvce(&test, &mbct_cal, &cfg).unwrap();
    let m_hist = mvce(&test, &hist_cal, &cfg).unwrap();
    let improvement = 1.0 - m_mbct / m_hist;
    assert!(
        improvement >= FIXTURE_MVCE_IMPROVEMENT,
        "tree mvce {m_mbct} vs histogram {m_hist}: improvement {improvement:.3} below threshold"
    );

    // every tree bin's sub-groups sit near 1; histogram hides groups that
    // are off by the planted factors
    let mut worst_tree = (1.0f64, 1.0f64);
    for leaf in leaf_groups(&model, &test) {
        if leaf.len() < 16 {
            continue;
        }
        let puds = pud_subgroups(&test, &leaf, &mbct_cal, 4, SubgroupKey::TrueSud).unwrap();
        for p in puds.into_iter().flatten() {
            assert!(
                (0.9..=1.1).contains(&p),
                "tree leaf sub-group pud {p} outside [0.9, 1.1]"
            );
            worst_tree = (worst_tree.0.min(p), worst_tree.1.max(p));
        }
    }
    // histogram bins: uniform-mass over predictions
    let order = {
        let mut idx: Vec<usize> = (0..test.len()).collect();
        idx.sort_unstable_by(|&a, &b| test.predictions()[a].total_cmp(&test.predictions()[b]));
        idx
    };
    let n_bins = train.len() / beta;
    let mut any_outside = false;
    for b in 0..n_bins {
        let bin: Vec<usize> =
            order[b * test.len() / n_bins..(b + 1) * test.len() / n_bins].to_vec();
        let puds = pud_subgroups(&test, &bin, &hist_cal, 4, SubgroupKey::TrueSud).unwrap();
        if puds
            .into_iter()
            .flatten()
            .any(|p| !(0.9..=1.1).contains(&p))
        {
            any_outside = true;
            break;
        }
    }
    assert!(
        any_outside,
        "histogram sub-groups unexpectedly all inside [0.9, 1.1]"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() <= 120, "criterion 6 took {elapsed:?}");
    println!(
        "criterion 6 PASS: tree mvce {m_mbct:.6} beats histogram {m_hist:.6} by {:.1}% \
         (threshold {:.0}%, calibrated against the per-group oracle); tree sub-group puds in \
         [{:.3}, {:.3}]; histogram has sub-groups outside [0.9, 1.1]; elapsed {elapsed:.1?}",
        100.0 * improvement,
        100.0 * FIXTURE_MVCE_IMPROVEMENT,
        worst_tree.0,
        worst_tree.1
    );
}

#[test]
fn criterion_07_individuality_and_monotonicity() {
    let fx = FeatureBiasFixture::two_group();
    let (train, test) = fixture_split(&fx, 60_000, 0xc7);

    let config = MbctConfig {
        seed: 7,
        ..Default::default()
    };
    let model = MbctModel::fit(&train, &config).unwrap();
    let mbct_cal = model.apply_dataset(&test).unwrap();
    assert_eq!(
        classify_monotonicity(test.predictions(), &mbct_cal),
        Monotonicity::NonMonotonic,
        "the planted crossing factors must reorder predictions"
    );

    // individual: distinct predictions inside one bin map to distinct outputs
    let mut leaf_checked = 0;
    for leaf in leaf_groups(&model, &test) {
        let mut seen: Vec<(u64, u64)> = leaf
            .iter()
            .map(|&i| (test.predictions()[i].to_bits(), mbct_cal[i].to_bits()))
            .collect();
        seen.sort_unstable();
        for w in seen.windows(2) {
            if w[0].0 != w[1].0 {
                assert_ne!(
                    w[0].1, w[1].1,
                    "distinct predictions collided inside one bin"
                );
                leaf_checked += 1;
            }
        }
    }
    assert!(leaf_checked > 1000);

    // scaling family preserves the ranking exactly
    let platt = PlattParams::fit(&train).unwrap();
    let beta = BetaParams::fit(&train).unwrap();
    let raw_auc = auc(test.labels(), test.predictions()).unwrap();
    for (name, cal) in [
        ("platt", platt.apply_dataset(&test)),
        ("beta", beta.apply_dataset(&test)),
    ] {
        let a = auc(test.labels(), &cal).unwrap();
        assert_eq!(a, raw_auc, "{name} changed auc");
    }

    // binning family is non-strictly monotonic. Scaling-binning is
    // structurally order-preserving; histogram bin means follow the truth
    // slope only when bins are wide enough to dominate label noise, so the
    // check uses coarse bins.
    let hist = BinTable::fit(&train, 8).unwrap();
    let sb = ScalingBinning::fit(&train, 50).unwrap();
    for (name, cal) in [
        ("histogram", hist.apply_dataset(&test)),
        ("scaling-binning", sb.apply_dataset(&test)),
    ] {
        assert_eq!(
            classify_monotonicity(test.predictions(), &cal),
            Monotonicity::NonStrictlyMonotonic,
            "{name}"
        );
    }
    println!(
        "criterion 7 PASS: tree output non-monotonic and individual ({leaf_checked} within-bin pairs \
         distinct); platt/beta auc exactly unchanged at {raw_auc:.6}; binning family non-strictly monotonic"
    );
}

#[test]
fn criterion_08_boosting_ablation() {
    let fx = FeatureBiasFixture::with_secondary();
    let (train, test) = fixture_split(&fx, 100_000, 0xc8);
    let config = MbctConfig {
        seed: 8,
        max_depth: 1,
        max_trees: 4,
        min_bin_size_override: Some(600),
        ..Default::default()
    };
    let full = MbctModel::fit(&train, &config).unwrap();
    let single = MbctModel::fit(
        &train,
        &MbctConfig {
            max_trees: 1,
            ..config.clone()
        },
    )
    .unwrap();
    assert!(full.trees.len() >= 2, "boosting accepted only one tree");

    for w in full.global_mvce_per_tree.windows(2) {
        assert!(w[1] < w[0], "global training loss not strictly decreasing");
    }

    let cfg = MetricConfig::new(600).with_seed(81);
    let m_full = mvce(&test, &full.apply_dataset(&test).unwrap(), &cfg).unwrap();
    let m_single = mvce(&test, &single.apply_dataset(&test).unwrap(), &cfg).unwrap();
    assert!(
        m_full <= m_single,
        "full model mvce {m_full} above single-tree {m_single}"
    );
    println!(
        "criterion 8 PASS: full model test mvce {m_full:.6} <= single-tree {m_single:.6}; \
         global training mvce strictly decreasing over {} accepted trees (splits {:?})",
        full.trees.len(),
        full.trees
            .iter()
            .map(|t| t.root.split_feature)
            .collect::<Vec<_>>()
    );
}

#[test]
fn criterion_09_stopping_rule_solver() {
    let mut rng = DetRng::new(0xc9);
    for case in 0..50 {
        let mean = 0.01 + 0.6 * rng.random::<f64>();
        let var = (mean * (1.0 - mean)).max(1e-6);
        let total = 500.0 + (rng.random::<f64>() * 500_000.0).floor();
        let alpha = 0.01 + 0.3 * rng.random::<f64>();
        let e = 0.02 + 0.6 * rng.random::<f64>();
        let got = solve_min_bin_size_from_stats(mean, var, total, alpha, e).unwrap();
        // independent exhaustive scan of the same inequality
        let cap = (total / 2.0).floor() as usize;
        let bound = |c: usize| -> f64 {
            let c = c as f64;
            let bins = total / c;
            let log_term = (3.0 * bins * total / (c * alpha)).ln();
            (2.0 * var * log_term / c).sqrt() + 3.0 * log_term / c
        };
        let mut expect = 2;
        for c in 2..=cap {
            if bound(c) >= e * mean {
                expect = c;
            } else {
                break;
            }
        }
        assert_eq!(got, expect, "case {case}: mean={mean} n={total} e={e}");
    }
    // monotone in the permissible error
    let mut prev = usize::MAX;
    for &e in &[0.02, 0.04, 0.08, 0.16, 0.32, 0.64] {
        let c = solve_min_bin_size_from_stats(0.12, 0.1056, 250_000.0, 0.05, e).unwrap();
        assert!(c <= prev);
        prev = c;
    }
    println!("criterion 9 PASS: solver matches the scan oracle on 50 random configurations and is monotone in e");
}

#[test]
fn criterion_10_determinism_and_roundtrips() {
    // fixed-seed refits are bit-identical
    let fx = FeatureBiasFixture::two_group();
    let (train, test) = fixture_split(&fx, 20_000, 0xca);
    let config = MbctConfig {
        seed: 10,
        r: 30,
        min_bin_size_override: Some(1_000),
        ..Default::default()
    };
    let a = MbctModel::fit(&train, &config).unwrap();
    let b = MbctModel::fit(&train, &config).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap(),
        "refit with the same seed diverged"
    );

    // every calibrator kind reloads apply-bit-identically
    let models = vec![
        CalibratorModel::Platt(PlattParams::fit(&train).unwrap()),
        CalibratorModel::Beta(BetaParams::fit(&train).unwrap()),
        CalibratorModel::Histogram(BinTable::fit(&train, 20).unwrap()),
        CalibratorModel::Isotonic(IsotonicFit::fit(&train).unwrap()),
        CalibratorModel::ScalingBinning(ScalingBinning::fit(&train, 20).unwrap()),
        CalibratorModel::Mbct(a.clone()),
    ];
    let mut rng = DetRng::new(3);
    for model in &models {
        let back: CalibratorModel =
            serde_json::from_str(&serde_json::to_string(model).unwrap()).unwrap();
        for _ in 0..2000 {
            let x: f64 = rng.random::<f64>();
            let f = [rng.next_below(2) as u32, rng.next_below(4) as u32];
            assert_eq!(
                model.as_calibrator().apply(x, &f).to_bits(),
                back.as_calibrator().apply(x, &f).to_bits(),
                "{} reload diverged",
                model.name()
            );
        }
    }

    // rule set reproduces the tree model exactly, reloaded or not
    let rules = a.export_rules();
    let rules_back: mbct_core::tree::RuleSet =
        serde_json::from_str(&serde_json::to_string(&rules).unwrap()).unwrap();
    assert_eq!(rules.rules.len(), a.n_leaves());
    for _ in 0..5000 {
        let x: f64 = rng.random::<f64>();
        let f = [rng.next_below(2) as u32, rng.next_below(4) as u32];
        let direct = a.apply(x, &f).unwrap();
        assert_eq!(direct.to_bits(), rules.apply(x, &f).unwrap().to_bits());
        assert_eq!(direct.to_bits(), rules_back.apply(x, &f).unwrap().to_bits());
    }

    // aggregated and raw data agree on the metric suite within 1e-9:
    // grid predictions make groups exact, uniform group size keeps bin
    // boundaries on group edges
    let mut rows = Vec::new();
    let mut grid_rng = DetRng::new(0xcb);
    for g in 0..40u32 {
        let p = 0.40 + 0.005 * f64::from(g);
        let feat = g % 4;
        for _ in 0..5 {
            let y = f64::from(u8::from(grid_rng.random::<f64>() < p * 0.9));
            rows.push(CalibrationSample::new(vec![feat], p, y));
        }
    }
    let raw = Dataset::from_samples(vec!["g".into()], vec![4], &rows).unwrap();
    let agg = aggregate_dataset(&raw);
    assert!(agg.len() < raw.len());
    let raw_cal = raw.predictions().to_vec();
    let agg_cal = agg.predictions().to_vec();
    let all_raw: Vec<usize> = (0..raw.len()).collect();
    let all_agg: Vec<usize> = (0..agg.len()).collect();
    let p_raw = pce(&raw, &all_raw, &raw_cal).unwrap();
    let p_agg = pce(&agg, &all_agg, &agg_cal).unwrap();
    assert!((p_raw - p_agg).abs() < 1e-9);
    let cfg = MetricConfig {
        p: 2.0,
        r: 25,
        bin_size: 50,
        n_bins: 0,
        seed: 5,
    };
    let m_raw = mvce(&raw, &raw_cal, &cfg).unwrap();
    let m_agg = mvce(&agg, &agg_cal, &cfg).unwrap();
    assert!(
        (m_raw - m_agg).abs() < 1e-9,
        "mvce raw {m_raw} vs aggregated {m_agg}"
    );
    let e_raw = ece_n(&raw, &raw_cal, 4, 2.0).unwrap();
    let e_agg = ece_n(&agg, &agg_cal, 4, 2.0).unwrap();
    assert!(
        (e_raw - e_agg).abs() < 1e-9,
        "ece raw {e_raw} vs aggregated {e_agg}"
    );

    // seeded metric evaluation reruns bit-identically
    let v1 = mvce(&test, &a.apply_dataset(&test).unwrap(), &cfg).unwrap();
    let v2 = mvce(&test, &a.apply_dataset(&test).unwrap(), &cfg).unwrap();
    assert_eq!(v1.to_bits(), v2.to_bits());

    println!(
        "criterion 10 PASS: seeded refits bit-identical; all six calibrator kinds and the rule \
         set reload apply-bit-identically; raw vs aggregated pce/mvce/ece agree within 1e-9"
    );
}
