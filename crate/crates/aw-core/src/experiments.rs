//! Monte-Carlo harness for the convergence-rate, non-convergence and
//! deviation experiments: the empirical-measure rate function, log-log slope
//! fits, and seeded sweeps that measure the adapted distance between a
//! reference discretization and the estimators across sample sizes.
//!
//! Sweeps are expressed as independent jobs with their own derived seeds;
//! results are aggregated in job order, so any [`JobRunner`] (sequential or
//! thread-pooled) produces bit-identical reports.

use alloc::vec::Vec;

use crate::adapted::{markov_nested_distance, markov_tree_distance, nested_distance_value};
use crate::error::{Error, Result};
use crate::estimators::{adapted_empirical, empirical, markov_adapted_empirical};
use crate::grid::GridMode;
use crate::math;
use crate::measures::ProcessShape;
use crate::processes::{quantized_reference_law, sample, ProcessModel, QuantizedReference, ReferenceLaw};

/// The empirical-measure rate function `R(u)`: `u^{-1/2}` in dimension one,
/// `u^{-1/2} log(u + 3)` in dimension two, `u^{-1/d}` beyond. `R(0)` is
/// infinite, while `u R(u)` extends continuously by zero.
pub fn rate_fn(u: f64, d: usize) -> f64 {
    if u == 0.0 {
        return f64::INFINITY;
    }
    match d {
        1 => 1.0 / math::sqrt(u),
        2 => math::ln(u + 3.0) / math::sqrt(u),
        _ => math::powf(u, -1.0 / d as f64),
    }
}

/// `u * R(u)`, extended by zero at the origin; concave by the `log(u + 3)`
/// choice in dimension two.
pub fn scaled_rate(u: f64, d: usize) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    u * rate_fn(u, d)
}

/// Theoretical log-log slope of the mean adapted distance in `N` for the
/// chosen estimator mode. The `d = 2` cases carry an additional logarithmic
/// factor not visible in the exponent.
pub fn theoretical_rate_exponent(shape: ProcessShape, mode: GridMode) -> f64 {
    match mode {
        GridMode::General => {
            if shape.d() == 1 {
                -1.0 / (shape.t() as f64 + 1.0)
            } else {
                -1.0 / (shape.d() * shape.t()) as f64
            }
        }
        GridMode::Markov => {
            if shape.d() == 1 {
                -1.0 / 3.0
            } else {
                -1.0 / (2 * shape.d()) as f64
            }
        }
    }
}

/// Ordinary least squares on `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Two standard errors of the slope.
    pub half_width: f64,
}

pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<LogLogFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch(
            "x and y lengths differ in the log-log fit".into(),
        ));
    }
    if xs.len() < 3 {
        return Err(Error::FitTooFewPoints(3));
    }
    if xs.iter().chain(ys.iter()).any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::FitNonPositive);
    }
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|&x| math::ln(x)).collect();
    let ly: Vec<f64> = ys.iter().map(|&y| math::ln(y)).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(ly.iter()).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual: f64 = lx
        .iter()
        .zip(ly.iter())
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let half_width = if xs.len() > 2 {
        2.0 * math::sqrt(residual / (n - 2.0) / sxx)
    } else {
        f64::INFINITY
    };
    Ok(LogLogFit {
        slope,
        intercept,
        half_width,
    })
}

/// Which estimator a sweep evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// Classical empirical measure on raw paths.
    Empirical,
    /// Grid-quantized adapted empirical measure.
    Adapted,
    /// Markov estimator with state-dependent kernels.
    MarkovAdapted,
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Empirical => "empirical",
            EstimatorKind::Adapted => "adapted",
            EstimatorKind::MarkovAdapted => "markov",
        }
    }
}

/// Shared, immutable context of one sweep: the model, its reference
/// discretization, and the evaluation grid.
pub struct SweepContext {
    pub model: ProcessModel,
    pub reference: QuantizedReference,
    pub estimators: Vec<EstimatorKind>,
    pub ns: Vec<u64>,
    pub reps: usize,
    pub seed: u64,
}

/// One independent unit of work: one sample set, all estimators evaluated.
#[derive(Debug, Clone, Copy)]
pub struct EvalJob {
    pub n_index: usize,
    pub rep: usize,
    pub seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Builds the context and the ordered job list of a sweep.
pub fn plan_sweep(
    model: &ProcessModel,
    estimators: &[EstimatorKind],
    ns: &[u64],
    reps: usize,
    cells: u64,
    seed: u64,
) -> Result<(SweepContext, Vec<EvalJob>)> {
    if ns.is_empty() {
        return Err(Error::InvalidParameter("at least one sample size is required".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidParameter("at least one repetition is required".into()));
    }
    if estimators.is_empty() {
        return Err(Error::InvalidParameter("at least one estimator is required".into()));
    }
    let reference = quantized_reference_law(model, cells)?;
    let mut jobs = Vec::with_capacity(ns.len() * reps);
    for n_index in 0..ns.len() {
        for rep in 0..reps {
            jobs.push(EvalJob {
                n_index,
                rep,
                seed: splitmix64(
                    seed ^ splitmix64((n_index as u64) << 32 | rep as u64),
                ),
            });
        }
    }
    Ok((
        SweepContext {
            model: model.clone(),
            reference,
            estimators: estimators.to_vec(),
            ns: ns.to_vec(),
            reps,
            seed,
        },
        jobs,
    ))
}

/// Runs one job: draws the sample set and returns one adapted distance per
/// estimator in context order. Pure; safe to call from any thread.
pub fn eval_job(ctx: &SweepContext, job: &EvalJob) -> Result<Vec<f64>> {
    let n = ctx.ns[job.n_index] as usize;
    let s = sample(&ctx.model, n, job.seed)?;
    let mut out = Vec::with_capacity(ctx.estimators.len());
    for kind in &ctx.estimators {
        let value = match kind {
            EstimatorKind::Empirical => {
                distance_to_reference_tree(&ctx.reference, &empirical(&s)?.to_scenario_tree())?
            }
            EstimatorKind::Adapted => distance_to_reference_tree(
                &ctx.reference,
                &adapted_empirical(&s)?.to_scenario_tree(),
            )?,
            EstimatorKind::MarkovAdapted => {
                let est = markov_adapted_empirical(&s)?;
                match &ctx.reference.law {
                    ReferenceLaw::Markov(m) => markov_nested_distance(m, &est)?.0,
                    ReferenceLaw::Tree(t) => nested_distance_value(t, &est.to_tree())?.0,
                }
            }
        };
        out.push(value);
    }
    Ok(out)
}

fn distance_to_reference_tree(
    reference: &QuantizedReference,
    est: &crate::measures::ScenarioTree,
) -> Result<f64> {
    match &reference.law {
        ReferenceLaw::Tree(t) => Ok(nested_distance_value(t, est)?.0),
        ReferenceLaw::Markov(m) => markov_tree_distance(m, est),
    }
}

/// Executes jobs and returns their results in job order. Implementations may
/// parallelize; the contract is only that `results[i]` comes from `jobs[i]`.
pub trait JobRunner {
    fn run(&mut self, ctx: &SweepContext, jobs: &[EvalJob]) -> Result<Vec<Vec<f64>>>;
}

/// Runs every job on the calling thread.
pub struct SequentialRunner;

impl JobRunner for SequentialRunner {
    fn run(&mut self, ctx: &SweepContext, jobs: &[EvalJob]) -> Result<Vec<Vec<f64>>> {
        jobs.iter().map(|j| eval_job(ctx, j)).collect()
    }
}

/// Mean distances of one estimator across sample sizes.
#[derive(Debug, Clone)]
pub struct RateSeries {
    pub estimator: EstimatorKind,
    pub ns: Vec<u64>,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub reps: usize,
    /// Quantization budget of the reference, reported next to every mean;
    /// distances to the continuous law are `mean +- budget`.
    pub budget: f64,
    pub fit: Option<LogLogFit>,
    /// Per-repetition distances, row-major by sample size.
    pub values: Vec<Vec<f64>>,
}

/// Runs a sweep for several estimators on shared sample sets.
pub fn rate_sweep(
    model: &ProcessModel,
    estimators: &[EstimatorKind],
    ns: &[u64],
    reps: usize,
    cells: u64,
    seed: u64,
    runner: &mut dyn JobRunner,
) -> Result<Vec<RateSeries>> {
    let (ctx, jobs) = plan_sweep(model, estimators, ns, reps, cells, seed)?;
    let results = runner.run(&ctx, &jobs)?;
    if results.len() != jobs.len() {
        return Err(Error::Internal("runner returned a mismatched result count"));
    }
    let mut series = Vec::with_capacity(estimators.len());
    for (e_idx, &estimator) in estimators.iter().enumerate() {
        let mut values: Vec<Vec<f64>> = ns.iter().map(|_| Vec::with_capacity(reps)).collect();
        for (job, result) in jobs.iter().zip(results.iter()) {
            values[job.n_index].push(result[e_idx]);
        }
        let means: Vec<f64> = values
            .iter()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .collect();
        let std_errors: Vec<f64> = values
            .iter()
            .zip(means.iter())
            .map(|(v, m)| {
                if v.len() < 2 {
                    return f64::INFINITY;
                }
                let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
                    / (v.len() as f64 - 1.0);
                math::sqrt(var / v.len() as f64)
            })
            .collect();
        let ns_f: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
        let fit = fit_loglog(&ns_f, &means).ok();
        series.push(RateSeries {
            estimator,
            ns: ns.to_vec(),
            means,
            std_errors,
            reps,
            budget: ctx.reference.budget,
            fit,
            values,
        });
    }
    Ok(series)
}

/// Convergence-rate report for one estimator mode.
#[derive(Debug, Clone)]
pub struct RateReport {
    pub series: RateSeries,
    pub theoretical_exponent: f64,
    /// Whether the reference budget stays below a tenth of the smallest mean,
    /// the precondition for trusting the fitted slope.
    pub budget_satisfied: bool,
    pub cells: u64,
}

/// Measures the mean adapted distance between the reference and the
/// mode-selected estimator across sample sizes and fits the log-log slope.
pub fn rate_curve(
    model: &ProcessModel,
    ns: &[u64],
    reps: usize,
    cells: u64,
    mode: GridMode,
    seed: u64,
    runner: &mut dyn JobRunner,
) -> Result<RateReport> {
    let estimator = match mode {
        GridMode::General => EstimatorKind::Adapted,
        GridMode::Markov => EstimatorKind::MarkovAdapted,
    };
    let mut series = rate_sweep(model, &[estimator], ns, reps, cells, seed, runner)?;
    let series = series.remove(0);
    let smallest = series.means.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(RateReport {
        budget_satisfied: series.budget <= 0.1 * smallest,
        theoretical_exponent: theoretical_rate_exponent(model.shape(), mode),
        cells,
        series,
    })
}

/// Side-by-side means of the classical and the adapted empirical measures on
/// shared samples.
#[derive(Debug, Clone)]
pub struct NonconvergenceReport {
    pub adapted: RateSeries,
    pub empirical: RateSeries,
    /// Smallest empirical-measure mean across sample sizes; stays bounded
    /// away from zero for atomless models.
    pub empirical_floor: f64,
    /// Last adapted mean divided by the first.
    pub adapted_decay: f64,
}

pub fn nonconvergence_demo(
    model: &ProcessModel,
    ns: &[u64],
    reps: usize,
    cells: u64,
    seed: u64,
    runner: &mut dyn JobRunner,
) -> Result<NonconvergenceReport> {
    let mut series = rate_sweep(
        model,
        &[EstimatorKind::Adapted, EstimatorKind::Empirical],
        ns,
        reps,
        cells,
        seed,
        runner,
    )?;
    let empirical = series.remove(1);
    let adapted = series.remove(0);
    let empirical_floor = empirical
        .means
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let adapted_decay = adapted.means.last().unwrap() / adapted.means.first().unwrap();
    Ok(NonconvergenceReport {
        adapted,
        empirical,
        empirical_floor,
        adapted_decay,
    })
}

/// Tail frequencies of one sample size.
#[derive(Debug, Clone)]
pub struct DeviationRow {
    pub n: u64,
    pub mean: f64,
    /// `(epsilon, relative frequency of AW >= mean + epsilon)` along the
    /// epsilon grid.
    pub frequencies: Vec<(f64, f64)>,
}

/// Deviation report: empirical tail frequencies and the fitted exponential
/// decay coefficient. The theory guarantees existence of the constants only;
/// `c_hat` is an estimate, never an assertion.
#[derive(Debug, Clone)]
pub struct DeviationReport {
    pub rows: Vec<DeviationRow>,
    pub reps: usize,
    pub budget: f64,
    /// Least-squares slope of `-ln(frequency)` against `N * epsilon^2` over
    /// the positive-frequency points, when enough points exist.
    pub c_hat: Option<f64>,
    pub fit_points: usize,
}

pub fn deviation_tails(
    model: &ProcessModel,
    ns: &[u64],
    eps_grid: &[f64],
    reps: usize,
    cells: u64,
    seed: u64,
    runner: &mut dyn JobRunner,
) -> Result<DeviationReport> {
    if eps_grid.is_empty() {
        return Err(Error::InvalidParameter("epsilon grid must not be empty".into()));
    }
    if eps_grid.iter().any(|&e| e < 0.0) {
        return Err(Error::InvalidParameter("epsilon values must be nonnegative".into()));
    }
    let series = rate_sweep(
        model,
        &[EstimatorKind::Adapted],
        ns,
        reps,
        cells,
        seed,
        runner,
    )?
    .remove(0);
    let mut rows = Vec::with_capacity(ns.len());
    let mut fit_x = Vec::new();
    let mut fit_y = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let mean = series.means[i];
        let values = &series.values[i];
        let frequencies: Vec<(f64, f64)> = eps_grid
            .iter()
            .map(|&eps| {
                let count = values.iter().filter(|&&v| v >= mean + eps).count();
                (eps, count as f64 / values.len() as f64)
            })
            .collect();
        for &(eps, freq) in &frequencies {
            if eps > 0.0 && freq > 0.0 {
                fit_x.push(n as f64 * eps * eps);
                fit_y.push(-math::ln(freq));
            }
        }
        rows.push(DeviationRow {
            n,
            mean,
            frequencies,
        });
    }
    // Plain least squares through the origin-free line y = a + c x.
    let c_hat = if fit_x.len() >= 3 {
        let n = fit_x.len() as f64;
        let mx = fit_x.iter().sum::<f64>() / n;
        let my = fit_y.iter().sum::<f64>() / n;
        let sxx: f64 = fit_x.iter().map(|x| (x - mx) * (x - mx)).sum();
        let sxy: f64 = fit_x
            .iter()
            .zip(fit_y.iter())
            .map(|(x, y)| (x - mx) * (y - my))
            .sum();
        (sxx > 0.0).then(|| sxy / sxx)
    } else {
        None
    };
    Ok(DeviationReport {
        rows,
        reps,
        budget: series.budget,
        c_hat,
        fit_points: fit_x.len(),
    })
}
