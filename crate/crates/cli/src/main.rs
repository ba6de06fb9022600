//! Batch front end: train calibrators, apply them to files, evaluate
//! metrics, run the metric-bias simulation, and export tree rule sets.

mod modelfile;
mod schema;

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use mbct_core::calibrators::{BetaParams, BinTable, IsotonicFit, PlattParams, ScalingBinning};
use mbct_core::data::Dataset;
use mbct_core::metrics::{
    auc, mvce, pud_subgroups, MetricConfig, MetricReport, SubgroupKey,
};
use mbct_core::model::CalibratorModel;
use mbct_core::rng::DetRng;
use mbct_core::sim::{estimate_e_bias_multi, SimMetric, SimResult, SimScenario};
use mbct_core::tree::{solve_min_bin_size, MbctConfig, MbctModel};

use modelfile::ModelFile;
use schema::{ingest_fit, ingest_frozen, parse_schema};

#[derive(Parser)]
#[command(
    name = "mbct",
    version,
    about = "Probability calibration toolkit: boosted binning trees, classical calibrators, metrics, and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a calibrator on a delimited file and write a model file.
    Train(TrainArgs),
    /// Apply a model to a file, appending a calibrated column.
    Calibrate(CalibrateArgs),
    /// Apply a model to a labeled file and report the metric suite.
    Evaluate(EvaluateArgs),
    /// Run the Monte-Carlo metric-bias study on synthetic scenarios.
    Simulate(SimulateArgs),
    /// Flatten a tree model into its serving rule set.
    ExportRules(ExportRulesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Platt,
    Beta,
    Histogram,
    Isotonic,
    ScalingBinning,
    Mbct,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Training file (comma-separated with a header row).
    #[arg(long)]
    data: PathBuf,
    /// Column roles, e.g. "click=label,pctr=prediction,site=feature,age=feature:quantile(8)".
    #[arg(long)]
    schema: String,
    #[arg(long, value_enum)]
    method: Method,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    /// Confidence level of the minimum-bin-size bound.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Permissible relative error of a bin mean.
    #[arg(long, default_value_t = 0.1)]
    e: f64,
    #[arg(long, default_value_t = 5)]
    max_depth: usize,
    #[arg(long, default_value_t = 8)]
    max_trees: usize,
    /// Random divisions per multi-view loss evaluation.
    #[arg(long, default_value_t = 100)]
    r: usize,
    /// Norm exponent.
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bin count for the binning-family baselines (default: rows divided by
    /// the solved minimum bin size, matching tree resolution).
    #[arg(long)]
    bins: Option<usize>,
    /// Overrides the solved minimum bin size of the tree model.
    #[arg(long)]
    min_bin_size: Option<usize>,
    /// Buckets of the derived prediction feature (0 disables it).
    #[arg(long, default_value_t = 100)]
    pred_buckets: u32,
    /// Hold out this fraction of training mass for tree acceptance.
    #[arg(long)]
    holdout: Option<f64>,
}

#[derive(clap::Args)]
struct CalibrateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output file: the input columns plus the calibrated column.
    #[arg(long)]
    out: PathBuf,
    /// Name of the appended column.
    #[arg(long, default_value = "calibrated")]
    column: String,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Labeled evaluation file under the model's schema.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100)]
    r: usize,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Per-bin mass of the multi-view metric (default: the tree model's
    /// minimum bin size, or rows/50 for other calibrators).
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Machine-readable report (one JSON record per line).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leaf bins sampled for the sub-group table.
    #[arg(long, default_value_t = 5)]
    pud_bins: usize,
    /// Sub-groups per sampled bin.
    #[arg(long, default_value_t = 4)]
    subgroups: usize,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 0.2)]
    beta_a: f64,
    #[arg(long, default_value_t = 0.7)]
    beta_b: f64,
    /// Bias exponent: true probability is prediction^q.
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    /// Norm exponent of the metrics under study.
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Metric to study.
    #[arg(long, default_value = "all")]
    metric: String,
    /// Sample counts, comma-separated.
    #[arg(long, default_value = "10000,30000,100000")]
    n: String,
    /// Bin counts, comma-separated.
    #[arg(long, default_value = "32")]
    bins: String,
    /// Experiments per cell.
    #[arg(long, default_value_t = 200)]
    m: usize,
    /// Divisions per multi-view evaluation.
    #[arg(long, default_value_t = 100)]
    r: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ExportRulesArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output rule-set file (JSON).
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::ExportRules(args) => cmd_export_rules(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let columns = parse_schema(&args.schema)?;
    let (dataset, fitted) = ingest_fit(&args.data, &columns)?;
    println!(
        "ingested {} rows, {} features from {}",
        dataset.len(),
        dataset.n_features(),
        args.data.display()
    );

    let baseline_bins = || -> Result<usize> {
        if let Some(b) = args.bins {
            return Ok(b);
        }
        let beta = solve_min_bin_size(&dataset, args.alpha, args.e)?;
        Ok((dataset.len() / beta).max(1))
    };

    let model = match args.method {
        Method::Platt => CalibratorModel::Platt(PlattParams::fit(&dataset)?),
        Method::Beta => CalibratorModel::Beta(BetaParams::fit(&dataset)?),
        Method::Isotonic => CalibratorModel::Isotonic(IsotonicFit::fit(&dataset)?),
        Method::Histogram => {
            let bins = baseline_bins()?;
            println!("histogram bins: {bins}");
            CalibratorModel::Histogram(BinTable::fit(&dataset, bins)?)
        }
        Method::ScalingBinning => {
            let bins = baseline_bins()?;
            println!("scaling-binning bins: {bins}");
            CalibratorModel::ScalingBinning(ScalingBinning::fit(&dataset, bins)?)
        }
        Method::Mbct => {
            let config = MbctConfig {
                alpha: args.alpha,
                e: args.e,
                max_depth: args.max_depth,
                max_trees: args.max_trees,
                r: args.r,
                p: args.p,
                seed: args.seed,
                min_bin_size_override: args.min_bin_size,
                prediction_buckets: args.pred_buckets,
                holdout_fraction: args.holdout,
            };
            let fitted_model = MbctModel::fit(&dataset, &config)?;
            println!("minimum bin size: {}", fitted_model.min_bin_size);
            println!(
                "trees accepted: {} (depths {:?}, {} leaves)",
                fitted_model.trees.len(),
                fitted_model
                    .trees
                    .iter()
                    .map(|t| t.depth)
                    .collect::<Vec<_>>(),
                fitted_model.n_leaves()
            );
            println!(
                "global mvce per tree: {}",
                fitted_model
                    .global_mvce_per_tree
                    .iter()
                    .map(|v| format!("{v:.6}"))
                    .collect::<Vec<_>>()
                    .join(" -> ")
            );
            CalibratorModel::Mbct(fitted_model)
        }
    };

    ModelFile::new(fitted, model).save(&args.out)?;
    println!("model written to {}", args.out.display());
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let file = ModelFile::load(&args.model)?;
    let calibrator = file.model.as_calibrator();

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&args.data)
        .with_context(|| format!("opening {}", args.data.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    schema::check_apply_columns(&file.schema, &header)?;

    let mut writer = csv::Writer::from_path(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let mut out_header = header.clone();
    out_header.push(args.column.clone());
    writer.write_record(&out_header)?;

    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("line {}: malformed row", i + 2))?;
        let (prediction, features) = schema::encode_row(&file.schema, &header, &record, i + 2)?;
        if !(0.0..=1.0).contains(&prediction) {
            bail!("line {}: prediction {prediction} outside [0, 1]", i + 2);
        }
        let calibrated = calibrator.apply(prediction, &features);
        let mut out: Vec<String> = record.iter().map(str::to_string).collect();
        out.push(format!("{calibrated}"));
        writer.write_record(&out)?;
        rows += 1;
    }
    writer.flush()?;
    println!("calibrated {rows} rows into {}", args.out.display());
    Ok(())
}

fn default_bin_size(model: &CalibratorModel, n: usize) -> usize {
    match model.as_mbct() {
        Some(m) => m.min_bin_size,
        None => (n / 50).max(2),
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let file = ModelFile::load(&args.model)?;
    let dataset = ingest_frozen(&args.data, &file.schema)?;
    let calibrator = file.model.as_calibrator();
    let calibrated = calibrator.apply_dataset(&dataset);

    let bin_size = args.bins.unwrap_or_else(|| default_bin_size(&file.model, dataset.len()));
    let config = MetricConfig {
        p: args.p,
        r: args.r,
        bin_size,
        n_bins: 0,
        seed: args.seed,
    };
    let report = MetricReport::compute(&dataset, &calibrated, &config)?;
    let raw_auc = auc(dataset.labels(), dataset.predictions())?;

    println!("model: {}   rows: {}   mvce bin size: {bin_size}", file.model.name(), dataset.len());
    println!("  mvce       {:.6}", report.mvce);
    println!("  ece        {:.6}", report.ece);
    println!(
        "  ece-sweep  {:.6}  (chose {} bins)",
        report.ece_sweep, report.ece_sweep_bins
    );
    println!("  auc        {:.6}  (uncalibrated {:.6})", report.auc, raw_auc);
    if let Some(t) = report.tce {
        println!("  tce        {:.6}  (ground truth present)", t);
    }
    println!("  monotonicity: {:?}", report.monotonicity);

    let mut records: Vec<serde_json::Value> = vec![serde_json::json!({
        "record": "metrics",
        "model": file.model.name(),
        "rows": dataset.len(),
        "bin_size": bin_size,
        "mvce": report.mvce,
        "ece": report.ece,
        "ece_sweep": report.ece_sweep,
        "ece_sweep_bins": report.ece_sweep_bins,
        "auc": report.auc,
        "auc_uncalibrated": raw_auc,
        "tce": report.tce,
        "monotonicity": format!("{:?}", report.monotonicity),
    })];

    // multi-view error across bin sizes
    println!("  mvce by bin size:");
    for mult in [1usize, 2, 4, 8, 16] {
        let size = bin_size * mult / 2;
        if size < 2 || dataset.len() < 2 * size {
            continue;
        }
        let cfg = MetricConfig {
            bin_size: size,
            ..config.clone()
        };
        let v = mvce(&dataset, &calibrated, &cfg)?;
        println!("    {size:>8}  {v:.6}");
        records.push(serde_json::json!({
            "record": "mvce_curve",
            "bin_size": size,
            "mvce": v,
        }));
    }

    if let Some(tree_model) = file.model.as_mbct() {
        records.extend(pud_table(
            tree_model,
            &dataset,
            &calibrated,
            args.pud_bins,
            args.subgroups,
            args.seed,
        )?);
    }

    if let Some(path) = &args.out {
        let mut out = std::fs::File::create(path)
            .with_context(|| format!("writing {}", path.display()))?;
        for r in &records {
            writeln!(out, "{r}")?;
        }
        println!("report written to {}", path.display());
    }
    Ok(())
}

/// Sub-group PUD table over sampled leaf bins of the first tree.
fn pud_table(
    model: &MbctModel,
    dataset: &Dataset,
    calibrated: &[f64],
    max_bins: usize,
    subgroups: usize,
    seed: u64,
) -> Result<Vec<serde_json::Value>> {
    use std::collections::BTreeMap;
    let Some(tree) = model.trees.first() else {
        return Ok(Vec::new());
    };
    // group evaluation samples by the leaf they route to
    let mut leaves: BTreeMap<Vec<(usize, u32)>, Vec<usize>> = BTreeMap::new();
    let mut features = vec![0u32; model.n_base_features];
    for i in 0..dataset.len() {
        for (f, slot) in features.iter_mut().enumerate() {
            *slot = dataset.feature_column(f)[i];
        }
        let bucket = model.bucket_of(dataset.predictions()[i]);
        leaves
            .entry(tree.route_path(&features, bucket))
            .or_default()
            .push(i);
    }
    type LeafBin = (Vec<(usize, u32)>, Vec<usize>);
    let mut bins: Vec<LeafBin> = leaves
        .into_iter()
        .filter(|(_, idx)| idx.len() >= subgroups.max(20))
        .collect();
    // seeded sample of the requested number of bins
    let mut rng = DetRng::new(seed ^ 0x90d);
    while bins.len() > max_bins {
        let drop = rng.next_below(bins.len() as u64) as usize;
        bins.remove(drop);
    }
    let key = if dataset.true_probs().is_some() {
        SubgroupKey::TrueSud
    } else {
        SubgroupKey::Prediction
    };
    let mut records = Vec::new();
    println!("  leaf sub-group PUD ({subgroups} groups by {key:?}):");
    for (path, idx) in &bins {
        let puds = pud_subgroups(dataset, idx, calibrated, subgroups, key)?;
        let rendered: Vec<String> = puds
            .iter()
            .map(|p| p.map_or("-".into(), |v| format!("{v:.3}")))
            .collect();
        let path_str = if path.is_empty() {
            "root".to_string()
        } else {
            path.iter()
                .map(|(f, v)| format!("{}={v}", model.feature_names.get(*f).map(String::as_str).unwrap_or("?")))
                .collect::<Vec<_>>()
                .join(",")
        };
        println!("    [{}] n={} pud={}", path_str, idx.len(), rendered.join(" "));
        records.push(serde_json::json!({
            "record": "pud_subgroups",
            "leaf": path_str,
            "n": idx.len(),
            "pud": puds,
        }));
    }
    Ok(records)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let scenario = SimScenario {
        beta_a: args.beta_a,
        beta_b: args.beta_b,
        truth_exponent: args.q,
        p: args.p,
    };
    let metrics: Vec<SimMetric> = match args.metric.as_str() {
        "all" => vec![SimMetric::Mvce, SimMetric::EceSweep, SimMetric::EceN],
        "mvce" => vec![SimMetric::Mvce],
        "ece" => vec![SimMetric::EceN],
        "ece-sweep" => vec![SimMetric::EceSweep],
        other => bail!("unknown metric '{other}' (use all, mvce, ece, ece-sweep)"),
    };
    let ns = parse_list(&args.n)?;
    let bins = parse_list(&args.bins)?;

    println!(
        "scenario Beta({}, {}), truth exponent {}, l{} metrics, m = {}",
        args.beta_a, args.beta_b, args.q, args.p, args.m
    );
    println!(
        "reference tce (l1) = {:.6}; scenario-norm tce = {:.6}{}",
        scenario.reference_tce(),
        scenario.analytic_tce(scenario.p),
        match SimScenario::primary() {
            prim if prim.beta_a == scenario.beta_a
                && prim.beta_b == scenario.beta_b
                && prim.truth_exponent == scenario.truth_exponent =>
                format!("; reported {}", mbct_core::sim::PRIMARY_SCENARIO_REPORTED_TCE),
            _ => String::new(),
        }
    );
    println!(
        "{:<10} {:>8} {:>6} {:>12} {:>12}",
        "metric", "n", "bins", "e_bias", "mean"
    );

    let rng = DetRng::new(args.seed);
    let mut results: Vec<SimResult> = Vec::new();
    for &n_bins in &bins {
        for &n in &ns {
            // one dataset stream per cell, shared by all requested metrics
            let cell_rng = rng.derive(&[n_bins as u64, n as u64]);
            for r in estimate_e_bias_multi(&scenario, &metrics, n, n_bins, args.m, args.r, &cell_rng)? {
                println!(
                    "{:<10} {:>8} {:>6} {:>12.6} {:>12.6}",
                    r.metric.to_string(),
                    r.n,
                    r.n_bins,
                    r.e_bias_hat,
                    r.mean_metric
                );
                results.push(r);
            }
        }
    }

    if let Some(path) = &args.out {
        let mut out = std::fs::File::create(path)
            .with_context(|| format!("writing {}", path.display()))?;
        for r in &results {
            writeln!(out, "{}", serde_json::to_string(r)?)?;
        }
        println!("results written to {}", path.display());
    }
    Ok(())
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| v.trim().parse::<usize>().context("list of integers"))
        .collect()
}

fn cmd_export_rules(args: ExportRulesArgs) -> Result<()> {
    let file = ModelFile::load(&args.model)?;
    let Some(model) = file.model.as_mbct() else {
        bail!("export-rules requires a tree model, got '{}'", file.model.name());
    };
    let rules = model.export_rules();
    std::fs::write(&args.out, serde_json::to_string_pretty(&rules)?)
        .with_context(|| format!("writing {}", args.out.display()))?;
    print!("{}", rules.render_text());
    println!(
        "{} rules ({} trees) written to {}",
        rules.rules.len(),
        rules.n_trees,
        args.out.display()
    );
    Ok(())
}
