//! Coupled Monte Carlo estimation of strong errors.
//!
//! Every path draws its fine increments once. The reference scheme runs on
//! the fine grid and every test scheme runs on coarsenings of the same
//! increments, so the terminal difference measures pathwise error.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::brownian::{sample_family, IncrementStream, NoiseFamily, PathSpec};
use crate::error::{Error, Result};
use crate::model::{MultiCoefficients, Preset, WfParams};
use crate::scalar::{simulate_terminal, simulate_with, ScalarStepper, SchemeId, StepContext};
use crate::three_state::{simulate_path3, simulate_terminal3, ClampPolicy, SimplexState, Stepper3};

/// Model together with its initial value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    Scalar { params: WfParams, x0: f64 },
    ThreeState { coeffs: MultiCoefficients, y0: SimplexState },
}

impl ModelSpec {
    /// Preset model started from its mapped initial value; the three-state
    /// preset starts at its deterministic steady state.
    pub fn from_preset(preset: Preset) -> Result<Self> {
        if let Some((params, x0)) = preset.scalar() {
            return Ok(ModelSpec::Scalar { params, x0 });
        }
        let coeffs = preset
            .multi_params()
            .ok_or_else(|| Error::InvalidParameter(format!("preset {preset} has no model")))?
            .coefficients()?;
        let [y1, y2] = coeffs.steady_state()?;
        Ok(ModelSpec::ThreeState { coeffs, y0: SimplexState::new(y1, y2) })
    }

    pub fn dims(&self) -> usize {
        match self {
            ModelSpec::Scalar { .. } => 1,
            ModelSpec::ThreeState { .. } => 3,
        }
    }

    fn accepts(&self, scheme: SchemeId) -> bool {
        match self {
            ModelSpec::Scalar { .. } => scheme.is_scalar(),
            ModelSpec::ThreeState { .. } => scheme.is_three_state(),
        }
    }
}

/// How a test path and its reference compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorMetric {
    /// `|y(T) - x(T)|^2`
    #[default]
    Terminal,
    /// Largest squared difference over the nodes of the coarse grid.
    MaxOverNodes,
}

/// Which increments drive the test schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coupling {
    /// Coarsenings of the reference increments.
    #[default]
    Coarsened,
    /// An unrelated Brownian path; for checking that the estimator needs the coupling.
    Independent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// Label written into reports, usually the preset name.
    pub label: String,
    pub schemes: Vec<SchemeId>,
    pub reference: SchemeId,
    pub ref_exp: u32,
    pub test_exps: Vec<u32>,
    pub batches: usize,
    pub paths_per_batch: usize,
    pub seed: u64,
    pub horizon: f64,
    /// Drop paths on which an exit-capable scheme leaves the domain.
    pub reject_exits: bool,
    pub clamp: ClampPolicy,
    pub metric: ErrorMetric,
    pub coupling: Coupling,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    /// Defaults: reference at `2^-13`, test steps `2^-3 .. 2^-12`, 100 batches of 100 paths.
    pub fn new(model: ModelSpec, label: impl Into<String>, schemes: Vec<SchemeId>, reference: SchemeId, seed: u64) -> Self {
        Self {
            model,
            label: label.into(),
            schemes,
            reference,
            ref_exp: 13,
            test_exps: (3..=12).collect(),
            batches: 100,
            paths_per_batch: 100,
            seed,
            horizon: 1.0,
            reject_exits: false,
            clamp: ClampPolicy::default(),
            metric: ErrorMetric::Terminal,
            coupling: Coupling::Coarsened,
            workers: None,
        }
    }

    pub fn for_preset(preset: Preset, schemes: Vec<SchemeId>, reference: SchemeId, seed: u64) -> Result<Self> {
        Ok(Self::new(ModelSpec::from_preset(preset)?, preset.name(), schemes, reference, seed))
    }

    pub fn total_paths(&self) -> usize {
        self.batches * self.paths_per_batch
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.schemes.is_empty() {
            return bad("no test schemes given".into());
        }
        if self.test_exps.is_empty() {
            return bad("no test step sizes given".into());
        }
        let max_test = *self.test_exps.iter().max().expect("non-empty");
        if self.ref_exp < max_test {
            return bad(format!("reference exponent {} is below the finest test exponent {max_test}", self.ref_exp));
        }
        let mut sorted = self.test_exps.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.test_exps.len() {
            return bad("test exponents repeat".into());
        }
        if self.batches < 2 {
            return bad(format!("need at least 2 batches, got {}", self.batches));
        }
        if self.paths_per_batch < 1 {
            return bad("need at least 1 path per batch".into());
        }
        if self.workers == Some(0) {
            return bad("worker count must be positive".into());
        }
        crate::brownian::dyadic_steps(self.horizon, self.ref_exp)?;
        for &e in &self.test_exps {
            crate::brownian::dyadic_steps(self.horizon, e)?;
        }
        for &s in self.schemes.iter().chain(std::iter::once(&self.reference)) {
            if !self.model.accepts(s) {
                return Err(Error::NotApplicable {
                    scheme: s,
                    reason: format!("does not apply to the {}-dimensional model", self.model.dims()),
                });
            }
        }
        // surface applicability and step-size preconditions before any path runs
        self.build(self.reference, self.ref_exp)?;
        for &s in &self.schemes {
            for &e in &self.test_exps {
                self.build(s, e)?;
            }
        }
        Ok(())
    }

    fn build(&self, scheme: SchemeId, exp: u32) -> Result<Runner> {
        let dt = self.horizon / crate::brownian::dyadic_steps(self.horizon, exp)? as f64;
        match self.model {
            ModelSpec::Scalar { params, x0 } => {
                Ok(Runner::Scalar(ScalarStepper::new(scheme, StepContext::new(params, dt)?)?, x0))
            }
            ModelSpec::ThreeState { coeffs, y0 } => Ok(Runner::Three(Stepper3::new(scheme, coeffs, dt, self.clamp)?, y0)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Runner {
    Scalar(ScalarStepper, f64),
    Three(Stepper3, SimplexState),
}

/// Terminal state, coarse-node trajectory when requested, and exit/clamp bookkeeping.
struct RunOutcome {
    terminal: [f64; 3],
    nodes: Vec<[f64; 3]>,
    exited: Option<(usize, f64)>,
    clamps: u64,
}

fn lift1(y: f64) -> [f64; 3] {
    [y, 0.0, 0.0]
}

fn lift3(s: SimplexState) -> [f64; 3] {
    [s.y1, s.y2, s.y3()]
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Runner {
    fn run(&self, inc: &IncrementStream, keep_nodes: bool) -> Result<RunOutcome> {
        match self {
            Runner::Scalar(st, x0) => {
                let dw = inc.component(0);
                if keep_nodes {
                    let p = simulate_with(st, *x0, dw)?;
                    let exited = p.exited_at.map(|n| (n, p.terminal()));
                    Ok(RunOutcome {
                        terminal: lift1(p.terminal()),
                        nodes: p.values.into_iter().map(lift1).collect(),
                        exited,
                        clamps: 0,
                    })
                } else {
                    let (y, ex) = simulate_terminal(st, *x0, dw)?;
                    Ok(RunOutcome { terminal: lift1(y), nodes: Vec::new(), exited: ex.map(|n| (n, y)), clamps: 0 })
                }
            }
            Runner::Three(st, y0) => {
                let dw = [inc.component(0), inc.component(1), inc.component(2)];
                if keep_nodes {
                    let p = simulate_path3(st, *y0, dw)?;
                    let t = p.terminal();
                    Ok(RunOutcome {
                        terminal: lift3(t),
                        nodes: p.values.into_iter().map(lift3).collect(),
                        exited: p.exited_at.map(|n| (n, t.y1)),
                        clamps: p.clamp_events,
                    })
                } else {
                    let (t, ex, clamps) = simulate_terminal3(st, *y0, dw)?;
                    Ok(RunOutcome { terminal: lift3(t), nodes: Vec::new(), exited: ex.map(|n| (n, t.y1)), clamps })
                }
            }
        }
    }
}

/// Per-path result, one entry per `(scheme, exponent)` in row order.
struct PathResult {
    rejected: bool,
    sq_errors: Vec<f64>,
    clamps: Vec<u64>,
    ref_clamps: u64,
    elapsed: Vec<Duration>,
    ref_elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub scheme: SchemeId,
    pub dt_exp: u32,
    pub dt: f64,
    pub error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub paths_used: usize,
    pub paths_rejected: usize,
    /// Clamp corrections summed over the used paths (three-state schemes).
    pub clamp_events: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderFit {
    /// Least-squares slope of `log2(error)` against `log2(dt)`.
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit, in log2 units.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub scheme: SchemeId,
    pub rows: Vec<ErrorRow>,
    /// Present when at least three rows have a positive error.
    pub order: Option<OrderFit>,
}

impl ConvergenceReport {
    pub fn row(&self, dt_exp: u32) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.dt_exp == dt_exp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub label: String,
    pub reference: SchemeId,
    pub ref_exp: u32,
    pub seed: u64,
    pub total_paths: usize,
    pub paths_rejected: usize,
    pub reference_clamps: u64,
    pub reports: Vec<ConvergenceReport>,
}

impl ExperimentReport {
    pub fn report(&self, scheme: SchemeId) -> Option<&ConvergenceReport> {
        self.reports.iter().find(|r| r.scheme == scheme)
    }

    pub fn rows(&self) -> impl Iterator<Item = &ErrorRow> {
        self.reports.iter().flat_map(|r| r.rows.iter())
    }
}

/// Wall-clock cost, kept apart from the report so reports compare bit for bit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentTimings {
    pub total: Duration,
    /// Summed over paths, in the report's row order.
    pub per_row: Vec<Duration>,
    pub reference: Duration,
}

pub fn strong_error(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment(config).map(|(r, _)| r)
}

/// Same as [`strong_error`] with the pool size forced to `workers`.
pub fn strong_error_with_workers(config: &ExperimentConfig, workers: usize) -> Result<ExperimentReport> {
    let mut c = config.clone();
    c.workers = Some(workers);
    strong_error(&c)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<(ExperimentReport, ExperimentTimings)> {
    config.validate()?;
    let started = Instant::now();
    let results = match config.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?
            .install(|| run_paths(config)),
        None => run_paths(config),
    }?;
    let report = reduce(config, &results)?;
    let mut timings = ExperimentTimings { total: Duration::ZERO, per_row: Vec::new(), reference: Duration::ZERO };
    let rows = config.schemes.len() * config.test_exps.len();
    timings.per_row = vec![Duration::ZERO; rows];
    for r in &results {
        timings.reference += r.ref_elapsed;
        for (acc, d) in timings.per_row.iter_mut().zip(&r.elapsed) {
            *acc += *d;
        }
    }
    timings.total = started.elapsed();
    Ok((report, timings))
}

fn run_paths(config: &ExperimentConfig) -> Result<Vec<PathResult>> {
    (0..config.total_paths() as u64).into_par_iter().map(|i| run_one_path(config, i)).collect()
}

fn run_one_path(config: &ExperimentConfig, path: u64) -> Result<PathResult> {
    let fail = |dt_exp: u32| move |e: Error| Error::PathFailure { path, dt_exp, source: Box::new(e) };
    let spec = PathSpec {
        horizon: config.horizon,
        fine_exp: config.ref_exp,
        dims: config.model.dims(),
        master_seed: config.seed,
        path_index: path,
    };
    let fine = sample_family(&spec, NoiseFamily::Primary).map_err(fail(config.ref_exp))?;
    let keep = config.metric == ErrorMetric::MaxOverNodes;

    let t0 = Instant::now();
    let reference = config.build(config.reference, config.ref_exp)?.run(&fine, keep).map_err(fail(config.ref_exp))?;
    let ref_elapsed = t0.elapsed();
    let mut rejected = false;
    if let Some((node, value)) = reference.exited {
        if !config.reject_exits {
            return Err(fail(config.ref_exp)(Error::ExitedDomain { scheme: config.reference, node, value }));
        }
        rejected = true;
    }

    let test_fine = match config.coupling {
        Coupling::Coarsened => None,
        Coupling::Independent => Some(sample_family(&spec, NoiseFamily::Independent).map_err(fail(config.ref_exp))?),
    };
    let levels = coarse_levels(test_fine.as_ref().unwrap_or(&fine), &config.test_exps).map_err(fail(config.ref_exp))?;

    let n = config.schemes.len() * config.test_exps.len();
    let mut sq_errors = Vec::with_capacity(n);
    let mut clamps = Vec::with_capacity(n);
    let mut elapsed = Vec::with_capacity(n);
    for &scheme in &config.schemes {
        for (&exp, inc) in config.test_exps.iter().zip(&levels) {
            let t = Instant::now();
            let out = config.build(scheme, exp)?.run(inc, keep).map_err(fail(exp))?;
            elapsed.push(t.elapsed());
            if let Some((node, value)) = out.exited {
                if !config.reject_exits {
                    return Err(fail(exp)(Error::ExitedDomain { scheme, node, value }));
                }
                rejected = true;
            }
            let err = if rejected {
                0.0
            } else if keep {
                let stride = 1usize << (config.ref_exp - exp);
                out.nodes
                    .iter()
                    .enumerate()
                    .map(|(k, y)| sq_dist(y, &reference.nodes[k * stride]))
                    .fold(0.0, f64::max)
            } else {
                sq_dist(&out.terminal, &reference.terminal)
            };
            sq_errors.push(err);
            clamps.push(out.clamps);
        }
    }
    Ok(PathResult { rejected, sq_errors, clamps, ref_clamps: reference.clamps, elapsed, ref_elapsed })
}

/// Coarsened streams for each requested exponent, built by successive halving.
fn coarse_levels(fine: &IncrementStream, exps: &[u32]) -> Result<Vec<IncrementStream>> {
    let mut order: Vec<usize> = (0..exps.len()).collect();
    order.sort_by(|&a, &b| exps[b].cmp(&exps[a]));
    let mut out: Vec<Option<IncrementStream>> = vec![None; exps.len()];
    let mut current = fine.clone();
    for i in order {
        while current.exp() > exps[i] {
            current = current.halve_once()?;
        }
        out[i] = Some(current.clone());
    }
    Ok(out.into_iter().map(|s| s.expect("every level filled")).collect())
}

fn reduce(config: &ExperimentConfig, results: &[PathResult]) -> Result<ExperimentReport> {
    let l = config.paths_per_batch;
    let rejected = results.iter().filter(|r| r.rejected).count();
    let used = results.len() - rejected;
    if used == 0 {
        return Err(Error::AllPathsRejected);
    }
    let reference_clamps = results.iter().filter(|r| !r.rejected).map(|r| r.ref_clamps).sum();
    let mut reports = Vec::with_capacity(config.schemes.len());
    let mut col = 0;
    for &scheme in &config.schemes {
        let mut rows = Vec::with_capacity(config.test_exps.len());
        for &exp in &config.test_exps {
            let mut batch_means = Vec::with_capacity(config.batches);
            let mut total = 0.0;
            let mut clamp_events = 0;
            for batch in results.chunks(l) {
                let (mut sum, mut count) = (0.0, 0usize);
                for r in batch.iter().filter(|r| !r.rejected) {
                    sum += r.sq_errors[col];
                    clamp_events += r.clamps[col];
                    count += 1;
                }
                total += sum;
                if count > 0 {
                    batch_means.push(sum / count as f64);
                }
            }
            let mean = total / used as f64;
            let (ci_low, ci_high) = batch_ci_about(&batch_means, mean);
            rows.push(ErrorRow {
                scheme,
                dt_exp: exp,
                dt: config.horizon / crate::brownian::dyadic_steps(config.horizon, exp)? as f64,
                error: mean.sqrt(),
                ci_low,
                ci_high,
                paths_used: used,
                paths_rejected: rejected,
                clamp_events,
            });
            col += 1;
        }
        let order = fit_order(&rows).ok();
        reports.push(ConvergenceReport { scheme, rows, order });
    }
    Ok(ExperimentReport {
        label: config.label.clone(),
        reference: config.reference,
        ref_exp: config.ref_exp,
        seed: config.seed,
        total_paths: results.len(),
        paths_rejected: rejected,
        reference_clamps,
        reports,
    })
}

pub const CI_LEVEL: f64 = 0.98;

/// 98% Student-t interval for the mean of the batch means of squared
/// errors, mapped through the square root, lower end floored at zero.
pub fn batch_ci(batch_means: &[f64]) -> Result<(f64, f64)> {
    if batch_means.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 batches, got {}", batch_means.len())));
    }
    let mean = batch_means.iter().sum::<f64>() / batch_means.len() as f64;
    Ok(batch_ci_about(batch_means, mean))
}

fn batch_ci_about(batch_means: &[f64], center: f64) -> (f64, f64) {
    let m = batch_means.len();
    if m < 2 {
        let e = center.sqrt();
        return (e, e);
    }
    let mf = m as f64;
    let avg = batch_means.iter().sum::<f64>() / mf;
    let var = batch_means.iter().map(|x| (x - avg) * (x - avg)).sum::<f64>() / (mf - 1.0);
    let t = StudentsT::new(0.0, 1.0, mf - 1.0)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + CI_LEVEL / 2.0);
    let half = t * (var / mf).sqrt();
    ((center - half).max(0.0).sqrt(), (center + half).sqrt())
}

/// Least-squares slope of `log2(error)` on `log2(dt)` over rows with positive error.
pub fn fit_order(rows: &[ErrorRow]) -> Result<OrderFit> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.error > 0.0).map(|r| (r.dt.log2(), r.error.log2())).collect();
    fit_log_points(&pts)
}

pub fn fit_log_points(pts: &[(f64, f64)]) -> Result<OrderFit> {
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!("order fit needs 3 points, got {}", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all step sizes equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(OrderFit { slope, intercept, residual: (ss / n).sqrt() })
}
