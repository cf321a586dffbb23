//! `aw`: adapted Wasserstein distances, adapted empirical estimators, and the
//! desk-scale experiment suite behind one command-line surface.
//!
//! Exit codes: 0 success, 1 failed verification (`--check`), 2 input or usage
//! error, 3 resource limit.

use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use aw_cli::formats::{self, IoError, MeasureFile, ModelSpec};
use aw_cli::runner::ThreadedRunner;
use aw_cli::fmt_sig;
use aw_core::adapted::{
    check_causality, markov_nested_distance, markov_tree_distance, nested_distance,
    nested_distance_value, CausalDirection,
};
use aw_core::experiments::{
    deviation_tails, rate_sweep, theoretical_rate_exponent, EstimatorKind,
};
use aw_core::grid::{derive_r, GridMode, GridSpec};
use aw_core::measures::ScenarioTree;
use aw_core::processes::{markov_expansion_nodes, sample, EXPANSION_LIMIT};
use aw_core::stopping::stopping_stability_demo;
use aw_core::transport::wasserstein1_paths;

#[derive(Parser)]
#[command(name = "aw", version, about = "Adapted Wasserstein distances and estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the plain and adapted Wasserstein distances between two measure
    /// files.
    Distance(DistanceArgs),
    /// Build the (adapted or Markov) empirical measure from a sample CSV.
    Estimate(EstimateArgs),
    /// Draw i.i.d. sample paths from a model specification.
    Sample(SampleArgs),
    /// Convergence-rate sweep of the estimators against a reference
    /// discretization.
    Rates(RatesArgs),
    /// Deviation tails of the adapted distance around its mean.
    Deviation(DeviationArgs),
    /// Optimal-stopping values under the empirical and adapted empirical
    /// trees.
    Stopping(StoppingArgs),
}

#[derive(Args)]
struct DistanceArgs {
    /// First measure file (path or Markov JSON).
    #[arg(long)]
    a: PathBuf,
    /// Second measure file.
    #[arg(long)]
    b: PathBuf,
    /// Dump the optimal bicausal plan as a path-pair coupling.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Verify bicausality of the returned plan; exits 1 on violation.
    #[arg(long)]
    check: bool,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EstimateArgs {
    /// Sample CSV with an `x{t}_{i}` header.
    #[arg(long)]
    samples: PathBuf,
    /// Output measure JSON.
    #[arg(long)]
    out: PathBuf,
    /// Estimate state-dependent Markov kernels instead of the general
    /// adapted empirical measure.
    #[arg(long)]
    markov: bool,
    /// Override the derived cells-per-dimension count (no rate theory is
    /// asserted for overrides).
    #[arg(long)]
    cells: Option<u64>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SampleArgs {
    /// Model specification JSON.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct RatesArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    ns: Vec<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// Reference cells per dimension.
    #[arg(long)]
    cells: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Markov estimator mode.
    #[arg(long)]
    markov: bool,
    /// Also evaluate the classical empirical measure on the same samples.
    #[arg(long)]
    with_empirical: bool,
    /// Reporting band around the theoretical slope; fits inside the band are
    /// flagged in the summary. Purely diagnostic.
    #[arg(long)]
    slope_band: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file mirroring these flags; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct DeviationArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    ns: Vec<u64>,
    /// Epsilon grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    cells: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct StoppingArgs {
    /// Model specification; defaults to independent uniforms, d = 1, T = 2.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    ns: Vec<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Reference cells for the true-value discretization.
    #[arg(long)]
    cells: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

impl From<aw_core::Error> for Failure {
    fn from(e: aw_core::Error) -> Self {
        let code = match e {
            aw_core::Error::IterationLimit
            | aw_core::Error::ExpansionTooLarge { .. }
            | aw_core::Error::OracleTooLarge { .. } => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Distance(args) => cmd_distance(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Rates(args) => cmd_rates(args),
        Command::Deviation(args) => cmd_deviation(args),
        Command::Stopping(args) => cmd_stopping(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn expand(m: &aw_core::measures::MarkovMeasure) -> Result<ScenarioTree, Failure> {
    let nodes = markov_expansion_nodes(m);
    if nodes > EXPANSION_LIMIT {
        return Err(Failure {
            code: 3,
            message: format!("tree expansion of {nodes} nodes exceeds the limit"),
        });
    }
    Ok(m.to_tree())
}

fn cmd_distance(args: DistanceArgs) -> Result<(), Failure> {
    let a = formats::read_measure(&args.a)?;
    let b = formats::read_measure(&args.b)?;
    if a.shape() != b.shape() {
        return Err(Failure::input("measure shapes differ"));
    }
    let need_plan = args.plan.is_some() || args.check;

    // The plain Wasserstein distance works on flattened path measures.
    let paths_a = match &a {
        MeasureFile::Paths(m) => m.clone(),
        MeasureFile::Markov(m) => expand(m)?.to_path_measure(),
    };
    let paths_b = match &b {
        MeasureFile::Paths(m) => m.clone(),
        MeasureFile::Markov(m) => expand(m)?.to_path_measure(),
    };
    let w = wasserstein1_paths(&paths_a, &paths_b)?.value();

    let (aw, coupling) = if need_plan {
        let sol = nested_distance(&paths_a.to_scenario_tree(), &paths_b.to_scenario_tree())?;
        (sol.value, Some(sol.coupling))
    } else {
        // Value-only paths exploit the Markov structure where present.
        let value = match (&a, &b) {
            (MeasureFile::Markov(ma), MeasureFile::Markov(mb)) => {
                markov_nested_distance(ma, mb)?.0
            }
            (MeasureFile::Markov(ma), MeasureFile::Paths(pb)) => {
                markov_tree_distance(ma, &pb.to_scenario_tree())?
            }
            (MeasureFile::Paths(pa), MeasureFile::Markov(mb)) => {
                markov_tree_distance(mb, &pa.to_scenario_tree())?
            }
            (MeasureFile::Paths(pa), MeasureFile::Paths(pb)) => {
                nested_distance_value(&pa.to_scenario_tree(), &pb.to_scenario_tree())?.0
            }
        };
        (value, None)
    };

    println!(
        "W={} AW={} gap={}",
        fmt_sig(w),
        fmt_sig(aw),
        fmt_sig(aw - w)
    );

    if let Some(coupling) = &coupling {
        if let Some(out) = &args.plan {
            formats::write_json(out, &formats::plan_dto(coupling, aw), args.force)?;
        }
        if args.check {
            let report = check_causality(coupling, CausalDirection::Bicausal);
            if !report.satisfied {
                return Err(Failure {
                    code: 1,
                    message: format!(
                        "plan violates causality: max factorization gap {}",
                        report.max_gap
                    ),
                });
            }
            println!("causality=ok max_gap={}", fmt_sig(report.max_gap));
        }
    }
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), Failure> {
    let samples = formats::read_samples(&args.samples)?;
    let shape = samples.shape();
    let n = samples.len() as u64;
    let mode = if args.markov {
        GridMode::Markov
    } else {
        GridMode::General
    };
    let grid = match args.cells {
        Some(cells) => GridSpec::with_cells(shape, cells)?,
        None => GridSpec::new(shape, n, mode)?,
    };
    let (_, r_den) = derive_r(shape, mode);
    let m = grid.cells_per_dim();
    let cells_total = m.pow(shape.d() as u32);
    if args.markov {
        let est = aw_core::estimators::markov_adapted_empirical_with_grid(&samples, &grid)?;
        formats::write_markov_measure(&args.out, &est, args.force)?;
    } else {
        let est = aw_core::estimators::adapted_empirical_with_grid(&samples, &grid)?;
        formats::write_path_measure(&args.out, &est, args.force)?;
    }
    println!("N={n} r=1/{r_den} m={m} cells={cells_total}");
    Ok(())
}

fn cmd_sample(args: SampleArgs) -> Result<(), Failure> {
    let model = formats::read_model(&args.model)?.to_model()?;
    let s = sample(&model, args.n, args.seed)?;
    formats::write_samples(&args.out, &s, args.force)?;
    println!("n={} d={} T={}", s.len(), s.shape().d(), s.shape().t());
    Ok(())
}

// ---------------------------------------------------------------------------
// Experiment commands: config files, manifests, reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RatesConfig {
    model: ModelSpec,
    ns: Vec<u64>,
    reps: usize,
    cells: u64,
    seed: u64,
    estimators: Vec<String>,
    #[serde(default = "default_slope_band")]
    slope_band: f64,
}

fn default_slope_band() -> f64 {
    0.15
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DeviationConfig {
    model: ModelSpec,
    ns: Vec<u64>,
    eps: Vec<f64>,
    reps: usize,
    cells: u64,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoppingConfig {
    model: ModelSpec,
    ns: Vec<u64>,
    seed: u64,
    cells: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest<C> {
    command: String,
    version: String,
    config: C,
}

/// Loads a config file, accepting both a bare config and a manifest wrapping
/// one under `"config"`.
fn load_config<C: serde::de::DeserializeOwned>(path: &FsPath) -> Result<C, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let inner = value.get("config").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write_manifest<C: Serialize>(
    dir: &FsPath,
    command: &str,
    config: &C,
    force: bool,
) -> Result<(), Failure> {
    let manifest = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config,
    };
    formats::write_json(&dir.join("manifest.json"), &manifest, force)?;
    Ok(())
}

fn prepare_out(dir: &Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = dir
        .clone()
        .ok_or_else(|| Failure::input("--out directory is required"))?;
    std::fs::create_dir_all(&dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn require_model(flag: &Option<PathBuf>, from_config: Option<ModelSpec>) -> Result<ModelSpec, Failure> {
    match flag {
        Some(path) => Ok(formats::read_model(path)?),
        None => from_config.ok_or_else(|| Failure::input("--model or --config is required")),
    }
}

fn cmd_rates(args: RatesArgs) -> Result<(), Failure> {
    let base: Option<RatesConfig> = match &args.config {
        Some(path) => Some(load_config(path)?),
        None => None,
    };
    let model_spec = require_model(&args.model, base.as_ref().map(|c| c.model.clone()))?;
    let mut estimators = if args.markov {
        vec!["markov".to_string()]
    } else if let Some(base) = base.as_ref().filter(|_| args.model.is_none()) {
        base.estimators.clone()
    } else {
        vec!["adapted".to_string()]
    };
    if args.with_empirical && !estimators.iter().any(|e| e == "empirical") {
        estimators.push("empirical".to_string());
    }
    let config = RatesConfig {
        model: model_spec,
        ns: pick_list(args.ns, base.as_ref().map(|c| c.ns.clone()), "--ns")?,
        reps: args.reps.or(base.as_ref().map(|c| c.reps)).unwrap_or(50),
        cells: args.cells.or(base.as_ref().map(|c| c.cells)).unwrap_or(512),
        seed: args
            .seed
            .or(base.as_ref().map(|c| c.seed))
            .ok_or_else(|| Failure::input("--seed is required for stochastic commands"))?,
        estimators,
        slope_band: args
            .slope_band
            .or(base.as_ref().map(|c| c.slope_band))
            .unwrap_or_else(default_slope_band),
    };
    let model = config.model.to_model()?;
    let kinds = formats::parse_estimators(&config.estimators)?;
    let mut runner = ThreadedRunner::new(args.threads.unwrap_or(0));
    let series = rate_sweep(
        &model,
        &kinds,
        &config.ns,
        config.reps,
        config.cells,
        config.seed,
        &mut runner,
    )?;

    let dir = prepare_out(&args.out)?;
    formats::write_rate_csv(&dir.join("rates.csv"), &series, args.force)?;
    let summary = serde_json::json!({
        "command": "rates",
        "version": env!("CARGO_PKG_VERSION"),
        "config": &config,
        "series": series.iter().map(formats::RateSeriesDto::from).collect::<Vec<_>>(),
        "theoretical_exponents": kinds.iter().zip(series.iter()).map(|(k, s)| {
            let exponent = match k {
                EstimatorKind::MarkovAdapted => Some(theoretical_rate_exponent(model.shape(), GridMode::Markov)),
                EstimatorKind::Adapted => Some(theoretical_rate_exponent(model.shape(), GridMode::General)),
                EstimatorKind::Empirical => None,
            };
            let within_band = match (exponent, s.fit) {
                (Some(e), Some(f)) => Some((f.slope - e).abs() <= config.slope_band),
                _ => None,
            };
            serde_json::json!({ "estimator": k.label(), "exponent": exponent, "within_band": within_band })
        }).collect::<Vec<_>>(),
        "tolerances": {
            "slope_band": config.slope_band,
            "budget_rule": "means are trusted for slope fits when budget <= mean / 10",
            "plan_certificate": 1e-9,
        },
    });
    formats::write_json(&dir.join("rates.json"), &summary, args.force)?;
    write_manifest(&dir, "rates", &config, args.force)?;
    for s in &series {
        let slope = s
            .fit
            .map(|f| fmt_sig(f.slope))
            .unwrap_or_else(|| "n/a".to_string());
        println!(
            "estimator={} slope={} budget={} reps={}",
            s.estimator.label(),
            slope,
            fmt_sig(s.budget),
            s.reps
        );
    }
    Ok(())
}

fn cmd_deviation(args: DeviationArgs) -> Result<(), Failure> {
    let base: Option<DeviationConfig> = match &args.config {
        Some(path) => Some(load_config(path)?),
        None => None,
    };
    let model_spec = require_model(&args.model, base.as_ref().map(|c| c.model.clone()))?;
    let config = DeviationConfig {
        model: model_spec,
        ns: pick_list(args.ns, base.as_ref().map(|c| c.ns.clone()), "--ns")?,
        eps: pick_list(args.eps, base.as_ref().map(|c| c.eps.clone()), "--eps")?,
        reps: args.reps.or(base.as_ref().map(|c| c.reps)).unwrap_or(300),
        cells: args.cells.or(base.as_ref().map(|c| c.cells)).unwrap_or(512),
        seed: args
            .seed
            .or(base.as_ref().map(|c| c.seed))
            .ok_or_else(|| Failure::input("--seed is required for stochastic commands"))?,
    };
    let model = config.model.to_model()?;
    let mut runner = ThreadedRunner::new(args.threads.unwrap_or(0));
    let report = deviation_tails(
        &model,
        &config.ns,
        &config.eps,
        config.reps,
        config.cells,
        config.seed,
        &mut runner,
    )?;
    let dir = prepare_out(&args.out)?;
    formats::write_deviation_csv(&dir.join("deviation.csv"), &report, args.force)?;
    let summary = serde_json::json!({
        "command": "deviation",
        "version": env!("CARGO_PKG_VERSION"),
        "config": &config,
        "c_hat": report.c_hat,
        "fit_points": report.fit_points,
        "budget": report.budget,
        "rows": report.rows.iter().map(|r| serde_json::json!({
            "n": r.n,
            "mean": r.mean,
            "frequencies": r.frequencies,
        })).collect::<Vec<_>>(),
    });
    formats::write_json(&dir.join("deviation.json"), &summary, args.force)?;
    write_manifest(&dir, "deviation", &config, args.force)?;
    match report.c_hat {
        Some(c) => println!("c_hat={} fit_points={}", fmt_sig(c), report.fit_points),
        None => println!("c_hat=n/a fit_points={}", report.fit_points),
    }
    Ok(())
}

fn cmd_stopping(args: StoppingArgs) -> Result<(), Failure> {
    let base: Option<StoppingConfig> = match &args.config {
        Some(path) => Some(load_config(path)?),
        None => None,
    };
    let model_spec = match (&args.model, base.as_ref()) {
        (Some(path), _) => formats::read_model(path)?,
        (None, Some(c)) => c.model.clone(),
        (None, None) => ModelSpec::LipschitzAr {
            d: 1,
            t: 2,
            rho: 0.0,
            initial: None,
        },
    };
    let config = StoppingConfig {
        model: model_spec,
        ns: if args.ns.is_empty() {
            base.as_ref()
                .map(|c| c.ns.clone())
                .unwrap_or_else(|| vec![16, 64, 256, 1024, 4096, 10_000])
        } else {
            args.ns
        },
        seed: args
            .seed
            .or(base.as_ref().map(|c| c.seed))
            .ok_or_else(|| Failure::input("--seed is required for stochastic commands"))?,
        cells: args.cells.or(base.as_ref().map(|c| c.cells)).unwrap_or(256),
    };
    let model = config.model.to_model()?;
    let ns: Vec<usize> = config.ns.iter().map(|&n| n as usize).collect();
    let report = stopping_stability_demo(&model, &ns, config.seed, config.cells)?;
    let dir = prepare_out(&args.out)?;
    formats::write_stopping_csv(&dir.join("stopping.csv"), &report, args.force)?;
    let summary = serde_json::json!({
        "command": "stopping",
        "version": env!("CARGO_PKG_VERSION"),
        "config": &config,
        "reference_value": report.reference_value,
        "reference_cells": report.reference_cells,
        "ns": report.ns,
        "empirical_values": report.empirical_values,
        "adapted_values": report.adapted_values,
    });
    formats::write_json(&dir.join("stopping.json"), &summary, args.force)?;
    write_manifest(&dir, "stopping", &config, args.force)?;
    let last = report.ns.len() - 1;
    println!(
        "reference={} empirical={} adapted={}",
        fmt_sig(report.reference_value),
        fmt_sig(report.empirical_values[last]),
        fmt_sig(report.adapted_values[last])
    );
    Ok(())
}

fn pick_list<T: Clone>(flag: Vec<T>, config: Option<Vec<T>>, name: &str) -> Result<Vec<T>, Failure> {
    if !flag.is_empty() {
        return Ok(flag);
    }
    match config {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Failure::input(format!("{name} must not be empty"))),
    }
}
