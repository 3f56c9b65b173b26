//! `mapeval` — checkpoint merging, Pass@k scoring, stability metrics, seeded
//! simulations, and cost estimates behind one command surface.
//!
//! Exit codes: 0 success, 1 domain error (diagnostics as `ERROR[code]: ...`
//! on stderr), 2 usage error. Data goes to stdout or files, never stderr.

mod report;
mod util;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use map_core::cost::{cost_curve, CostParams};
use map_core::error::{Error, Result};
use map_core::eval_log::{group, ingest_jsonl, EvalDataset, Mode};
use map_core::merge::{merge, plan_window, rolling_merge, CheckpointRef, WindowMode};
use map_core::noise_lab::{
    delta_accuracy_report, model_grid, simulate_run, validate_noise_reduction,
    validate_passk_unbiased, ParamNoiseConfig, SyntheticRunConfig,
};
use map_core::passk::passk_benchmark;
use map_core::stability::{kendall_tau_paper, prr_breakdown, RankEntry, RankTable, TrajectorySeries};
use map_core::tensor_store::TensorArchive;

use util::{
    csv_string, fmt_f64, parse_u64_list, read_csv_records, read_to_string, resolve_seed,
    write_file,
};

#[derive(Parser)]
#[command(name = "mapeval", version, about = "Stable measurement of training dynamics: checkpoint merging and Pass@k scoring with stability metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Average the N most recent checkpoints ending at an anchor step
    Merge(MergeArgs),
    /// Merge independently at each of several anchor steps
    RollingMerge(RollingMergeArgs),
    /// Pass@k per checkpoint from an eval log (CSV on stdout)
    Passk(PasskArgs),
    /// Kendall tau of a score trajectory from an eval log (CSV on stdout)
    Trajectory(TrajectoryArgs),
    /// Pairwise ranking reversal rate from a pre/post score table
    Prr(PrrArgs),
    /// Seeded validators and synthetic runs
    Simulate(SimulateArgs),
    /// Evaluation cost for sampling budgets (CSV on stdout)
    Cost(CostArgs),
    /// Consolidate metric outputs into one report (CSV + JSON)
    Report(report::ReportArgs),
}

#[derive(Args)]
struct MergeArgs {
    /// Window size N
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Anchor step T (must exist among the checkpoints)
    #[arg(long)]
    anchor: u64,
    /// Output archive path
    #[arg(long)]
    out: PathBuf,
    /// Merge fewer than N checkpoints when history is short
    #[arg(long)]
    partial: bool,
    /// Checkpoint archives; steps come from each archive's meta
    #[arg(required = true)]
    checkpoints: Vec<PathBuf>,
}

#[derive(Args)]
struct RollingMergeArgs {
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// Comma-separated anchor steps, e.g. `100,125,150`
    #[arg(long)]
    every: String,
    /// Directory for `merged-<step>.ckpt` outputs
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    partial: bool,
    #[arg(required = true)]
    checkpoints: Vec<PathBuf>,
}

#[derive(Args)]
struct PasskArgs {
    /// JSONL eval log
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    benchmark: String,
    /// Comma-separated k values
    #[arg(long, default_value = "1,2,4,8,16")]
    k: String,
    /// Restrict to one checkpoint id
    #[arg(long)]
    checkpoint: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Metric {
    Passk,
    Greedy,
}

#[derive(Args)]
struct TrajectoryArgs {
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    benchmark: String,
    #[arg(long, value_enum, default_value = "passk")]
    metric: Metric,
    /// k for the passk metric
    #[arg(long, required_if_eq("metric", "passk"))]
    k: Option<u64>,
}

#[derive(Args)]
struct PrrArgs {
    /// CSV with columns `model,score_pt,score_sft`
    #[arg(long)]
    table: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(subcommand)]
    what: SimulateCommand,
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// Empirical variance of window-averaged Gaussian noise vs sigma2/N
    NoiseReduction(NoiseReductionArgs),
    /// Enumerated estimator expectation vs 1-(1-p)^k over a grid
    Unbiased(UnbiasedArgs),
    /// Exact enumerated variance vs the Delta approximation over a grid
    Delta(DeltaArgs),
    /// Synthetic trajectory with raw/merged and greedy/Pass@k protocols
    Run(RunArgs),
}

#[derive(Args)]
struct NoiseReductionArgs {
    /// JSON config: {dim, sigma2, window, trials, seed}
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct UnbiasedArgs {
    /// JSON config: {ps, ns, ks}
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DeltaArgs {
    /// JSON config: {ps, ns, ks, tolerance}
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    tolerance: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config matching SyntheticRunConfig
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CostArgs {
    /// Comma-separated sample budgets, e.g. `1,2,4,8,16`
    #[arg(long)]
    n: String,
    /// JSON file overriding any of the cost parameters
    #[arg(long)]
    params: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("ERROR[{}]: {err}", err.code());
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Merge(args) => cmd_merge(args),
        Command::RollingMerge(args) => cmd_rolling_merge(args),
        Command::Passk(args) => cmd_passk(args),
        Command::Trajectory(args) => cmd_trajectory(args),
        Command::Prr(args) => cmd_prr(args),
        Command::Simulate(args) => match args.what {
            SimulateCommand::NoiseReduction(a) => cmd_noise_reduction(a),
            SimulateCommand::Unbiased(a) => cmd_unbiased(a),
            SimulateCommand::Delta(a) => cmd_delta(a),
            SimulateCommand::Run(a) => cmd_run(a),
        },
        Command::Cost(args) => cmd_cost(args),
        Command::Report(args) => report::cmd_report(args),
    }
}

/// Orders checkpoint files by the `step` recorded in each archive's meta.
fn load_series(paths: &[PathBuf]) -> Result<Vec<CheckpointRef>> {
    let mut series = Vec::with_capacity(paths.len());
    for path in paths {
        let archive = TensorArchive::open(path)?;
        let step = archive.meta().step.ok_or_else(|| {
            Error::Domain(format!(
                "{} carries no step in its meta; cannot order checkpoints",
                path.display()
            ))
        })?;
        series.push(CheckpointRef::new(path, step));
    }
    series.sort_by_key(|r| r.step);
    for pair in series.windows(2) {
        if pair[0].step == pair[1].step {
            return Err(Error::Domain(format!(
                "{} and {} both claim step {}",
                pair[0].path.display(),
                pair[1].path.display(),
                pair[0].step
            )));
        }
    }
    Ok(series)
}

fn window_mode(partial: bool) -> WindowMode {
    if partial {
        WindowMode::Partial
    } else {
        WindowMode::Strict
    }
}

fn cmd_merge(args: MergeArgs) -> Result<()> {
    let series = load_series(&args.checkpoints)?;
    let window = plan_window(&series, args.anchor, args.window, window_mode(args.partial))?;
    let merged = merge(&window)?;
    merged.archive.write(&args.out)?;
    eprintln!(
        "merged {} checkpoints (steps {:?}) -> {}",
        merged.provenance.window,
        merged.provenance.member_steps,
        args.out.display()
    );
    Ok(())
}

fn cmd_rolling_merge(args: RollingMergeArgs) -> Result<()> {
    let series = load_series(&args.checkpoints)?;
    let anchors = parse_u64_list(&args.every)?;
    let merged = rolling_merge(&series, args.window, &anchors, window_mode(args.partial))?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    for model in &merged {
        let anchor = *model.provenance.member_steps.last().expect("non-empty window");
        let path = args.out_dir.join(format!("merged-{anchor:08}.ckpt"));
        model.archive.write(&path)?;
        eprintln!(
            "anchor {anchor}: merged {} checkpoints -> {}",
            model.provenance.window,
            path.display()
        );
    }
    Ok(())
}

fn checkpoints_in_scope(
    dataset: &EvalDataset,
    benchmark: &str,
    only: Option<&str>,
) -> Result<Vec<(String, u64)>> {
    let mut checkpoints = dataset.checkpoints_for_benchmark(benchmark);
    if let Some(id) = only {
        checkpoints.retain(|(c, _)| c == id);
        if checkpoints.is_empty() {
            return Err(Error::NoMatchingRecords {
                checkpoint: id.to_string(),
                benchmark: benchmark.to_string(),
            });
        }
    }
    if checkpoints.is_empty() {
        return Err(Error::Domain(format!(
            "no records for benchmark {benchmark:?}"
        )));
    }
    Ok(checkpoints)
}

fn cmd_passk(args: PasskArgs) -> Result<()> {
    let ks = parse_u64_list(&args.k)?;
    let dataset = ingest_jsonl(&args.log)?;
    let checkpoints = checkpoints_in_scope(&dataset, &args.benchmark, args.checkpoint.as_deref())?;
    let mut rows = Vec::new();
    for (checkpoint, _) in &checkpoints {
        let (matrix, warnings) = group(&dataset, checkpoint, &args.benchmark)?;
        for warning in &warnings {
            eprintln!("warning ({checkpoint}): {warning}");
        }
        for &k in &ks {
            let estimate = passk_benchmark(&matrix, k)?;
            rows.push(vec![
                checkpoint.clone(),
                args.benchmark.clone(),
                k.to_string(),
                fmt_f64(estimate.benchmark_value),
                fmt_f64(estimate.variance_estimate),
            ]);
        }
    }
    print!(
        "{}",
        csv_string(&["checkpoint", "benchmark", "k", "value", "variance"], &rows)
    );
    Ok(())
}

fn cmd_trajectory(args: TrajectoryArgs) -> Result<()> {
    let dataset = ingest_jsonl(&args.log)?;
    let checkpoints = checkpoints_in_scope(&dataset, &args.benchmark, None)?;

    if args.metric == Metric::Greedy {
        let sampled = dataset
            .records()
            .iter()
            .find(|r| r.benchmark == args.benchmark && r.mode != Mode::Greedy);
        if let Some(r) = sampled {
            return Err(Error::Domain(format!(
                "benchmark {:?} has sampled records (e.g. checkpoint {:?}); the greedy metric needs an n=1 greedy log, use --metric passk instead",
                args.benchmark, r.checkpoint_id
            )));
        }
    }

    // The greedy score is the mean single-sample success rate, which is
    // exactly the k=1 estimate on an n=1 log.
    let k = match args.metric {
        Metric::Passk => args.k.expect("enforced by clap"),
        Metric::Greedy => 1,
    };
    let mut points = Vec::with_capacity(checkpoints.len());
    for (checkpoint, step) in &checkpoints {
        let (matrix, warnings) = group(&dataset, checkpoint, &args.benchmark)?;
        for warning in &warnings {
            eprintln!("warning ({checkpoint}): {warning}");
        }
        points.push((*step, passk_benchmark(&matrix, k)?.benchmark_value));
    }
    let series = TrajectorySeries::new(points)?;
    let tau = kendall_tau_paper(&series);
    let protocol = match args.metric {
        Metric::Passk => format!("pass@{k}"),
        Metric::Greedy => "greedy".to_string(),
    };
    print!(
        "{}",
        csv_string(
            &["benchmark", "protocol", "tau"],
            &[vec![args.benchmark.clone(), protocol, fmt_f64(tau)]],
        )
    );
    Ok(())
}

fn cmd_prr(args: PrrArgs) -> Result<()> {
    let rows = read_csv_records(&args.table, &["model", "score_pt", "score_sft"])?;
    let entries: Vec<RankEntry> = rows
        .iter()
        .map(|row| {
            Ok(RankEntry {
                model_id: row[0].clone(),
                score_pt: util::parse_f64_field(&args.table, &row[1])?,
                score_sft: util::parse_f64_field(&args.table, &row[2])?,
            })
        })
        .collect::<Result<_>>()?;
    let breakdown = prr_breakdown(&RankTable::new(entries)?);
    print!(
        "{}",
        csv_string(
            &["models", "pairs", "reversals", "prr"],
            &[vec![
                breakdown.models.to_string(),
                breakdown.pairs.to_string(),
                breakdown.reversals.to_string(),
                fmt_f64(breakdown.rate),
            ]],
        )
    );
    Ok(())
}

/// Parses an optional JSON config, also reporting whether it set a seed so
/// the flag > file > MAP_SEED > default precedence can be applied.
fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<(T, Option<u64>)> {
    match path {
        None => Ok((T::default(), None)),
        Some(p) => {
            let text = read_to_string(p)?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Error::Domain(format!("config {}: {e}", p.display())))?;
            let file_seed = value.get("seed").and_then(|v| v.as_u64());
            let config: T = serde_json::from_value(value)
                .map_err(|e| Error::Domain(format!("config {}: {e}", p.display())))?;
            Ok((config, file_seed))
        }
    }
}

fn cmd_noise_reduction(args: NoiseReductionArgs) -> Result<()> {
    let (mut config, file_seed) = load_config::<ParamNoiseConfig>(args.config.as_deref())?;
    config.seed = resolve_seed(args.seed, file_seed, config.seed)?;
    if let Some(dim) = args.dim {
        config.dim = dim;
    }
    if let Some(sigma2) = args.sigma2 {
        config.sigma2 = sigma2;
    }
    if let Some(window) = args.window {
        config.window = window;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    let report = validate_noise_reduction(&config)?;
    let csv = csv_string(
        &["dim", "sigma2", "window", "trials", "seed", "empirical_var", "predicted_var", "relative_error"],
        &[vec![
            config.dim.to_string(),
            fmt_f64(config.sigma2),
            config.window.to_string(),
            config.trials.to_string(),
            config.seed.to_string(),
            fmt_f64(report.empirical_var),
            fmt_f64(report.predicted_var),
            fmt_f64(report.relative_error),
        ]],
    );
    write_file(&args.out.join("noise_reduction.csv"), &csv)?;
    println!(
        "noise-reduction: N={} empirical={} predicted={} ({:+.2}%)",
        config.window,
        fmt_f64(report.empirical_var),
        fmt_f64(report.predicted_var),
        100.0 * report.relative_error
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(default)]
struct UnbiasedConfig {
    ps: Vec<f64>,
    ns: Vec<u64>,
    ks: Vec<u64>,
}

impl Default for UnbiasedConfig {
    fn default() -> Self {
        UnbiasedConfig {
            ps: vec![0.05, 0.1, 0.3, 0.5, 0.7, 0.95],
            ns: vec![4, 10, 50],
            ks: vec![1, 2, 4, 8],
        }
    }
}

fn cmd_unbiased(args: UnbiasedArgs) -> Result<()> {
    let (config, _) = load_config::<UnbiasedConfig>(args.config.as_deref())?;
    let grid = model_grid(&config.ps, &config.ns, &config.ks)?;
    let report = validate_passk_unbiased(&grid)?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.p),
                r.n.to_string(),
                r.k.to_string(),
                fmt_f64(r.expectation),
                fmt_f64(r.target),
                fmt_f64(r.deviation),
                (r.deviation <= report.tolerance).to_string(),
            ]
        })
        .collect();
    let csv = csv_string(&["p", "n", "k", "expectation", "target", "deviation", "pass"], &rows);
    write_file(&args.out.join("unbiasedness.csv"), &csv)?;
    println!(
        "unbiasedness: {} grid points, max deviation {} (tolerance {}): {}",
        report.rows.len(),
        fmt_f64(report.max_deviation),
        fmt_f64(report.tolerance),
        if report.pass { "PASS" } else { "FAIL" }
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(default)]
struct DeltaConfig {
    ps: Vec<f64>,
    ns: Vec<u64>,
    ks: Vec<u64>,
    tolerance: f64,
}

impl Default for DeltaConfig {
    fn default() -> Self {
        DeltaConfig {
            ps: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            ns: vec![200],
            ks: vec![1, 2, 4, 8],
            tolerance: 0.05,
        }
    }
}

fn cmd_delta(args: DeltaArgs) -> Result<()> {
    let (mut config, _) = load_config::<DeltaConfig>(args.config.as_deref())?;
    if let Some(tolerance) = args.tolerance {
        config.tolerance = tolerance;
    }
    let grid = model_grid(&config.ps, &config.ns, &config.ks)?;
    let rows = delta_accuracy_report(&grid, config.tolerance)?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                fmt_f64(r.p),
                r.k.to_string(),
                fmt_f64(r.exact_variance),
                fmt_f64(r.delta_variance),
                fmt_f64(r.relative_error),
                r.flagged.to_string(),
            ]
        })
        .collect();
    let csv = csv_string(
        &["n", "p", "k", "exact_variance", "delta_variance", "relative_error", "flagged"],
        &csv_rows,
    );
    write_file(&args.out.join("delta_accuracy.csv"), &csv)?;
    let flagged = rows.iter().filter(|r| r.flagged).count();
    println!(
        "delta accuracy: {} grid points, {} above tolerance {}",
        rows.len(),
        flagged,
        fmt_f64(config.tolerance)
    );
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let (mut config, file_seed) = load_config::<SyntheticRunConfig>(args.config.as_deref())?;
    config.seed = resolve_seed(args.seed, file_seed, config.seed)?;
    let run = simulate_run(&config)?;

    write_file(&args.out.join("eval_log.jsonl"), &run.to_jsonl())?;

    let mut series_rows = Vec::new();
    for series in &run.series {
        for &(step, score) in &series.points {
            series_rows.push(vec![
                series.protocol.clone(),
                step.to_string(),
                fmt_f64(score),
            ]);
        }
    }
    write_file(
        &args.out.join("series.csv"),
        &csv_string(&["protocol", "step", "score"], &series_rows),
    )?;

    let ckpt_rows: Vec<Vec<String>> = run
        .checkpoints
        .iter()
        .map(|c| {
            vec![
                c.step.to_string(),
                fmt_f64(c.latent),
                fmt_f64(c.p_raw),
                fmt_f64(c.p_merged),
            ]
        })
        .collect();
    write_file(
        &args.out.join("checkpoints.csv"),
        &csv_string(&["step", "latent", "p_raw", "p_merged"], &ckpt_rows),
    )?;

    let mut tau_rows = Vec::new();
    for series in &run.series {
        let tau = run.protocol_tau(&series.protocol)?;
        tau_rows.push(vec![
            config.seed.to_string(),
            series.protocol.clone(),
            fmt_f64(tau),
        ]);
        println!("{} tau={}", series.protocol, fmt_f64(tau));
    }
    write_file(
        &args.out.join("tau_summary.csv"),
        &csv_string(&["seed", "protocol", "tau"], &tau_rows),
    )?;
    Ok(())
}

fn cmd_cost(args: CostArgs) -> Result<()> {
    let ns = parse_u64_list(&args.n)?;
    let params = match &args.params {
        None => CostParams::default(),
        Some(path) => {
            let text = read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Domain(format!("params {}: {e}", path.display())))?
        }
    };
    let rows: Vec<Vec<String>> = cost_curve(&params, &ns)?
        .into_iter()
        .map(|(n, cost)| vec![n.to_string(), fmt_f64(cost)])
        .collect();
    print!("{}", csv_string(&["n", "cost"], &rows));
    Ok(())
}
