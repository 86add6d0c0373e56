//! Benchmark suites: hypercubes and hyperspheres of growing dimension,
//! three planar shapes, and a Minkowski-sum aggregation with
//! disaggregation checks.

mod aggregation;
mod shapes2d;

pub use aggregation::{
    aggregation_config, disaggregation_stats, generate_resources, hit_and_run, run_aggregation_demo,
    DisaggStats,
};
pub use shapes2d::{
    disk_config, ellipse_config, even_rows, hull_boundary, hull_metrics, octagon_config,
    octagon_region, run_2d_suite, snapshot_csv, HullMetrics, SNAPSHOT_ITERS,
};

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::metrics::{estimate_samples, mean_and_se, DirectionalSample};
use crate::polytope::{Normalized, Polytope};
use crate::regions::{Region, RegionOracle};
use crate::trainer::{fit_observed, fmt_num, InitStrategy, Phase, TrainConfig, TrainHistory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub seed: u64,
    pub execution: Execution,
    /// Directions used for the reported initial and converged errors.
    pub eval_dirs: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            seed: 0,
            execution: Execution::default(),
            eval_dirs: 2000,
        }
    }
}

/// One benchmark case. `check` is the quantity compared against `limit`
/// to decide `passed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub case: String,
    pub n: usize,
    pub m: usize,
    /// `weighted` (at the given lambda) or `total`
    pub metric: String,
    pub init_error: f64,
    pub converged_error: f64,
    pub std_error: f64,
    pub ideal_error: Option<f64>,
    pub reduction: Option<f64>,
    pub iterations: usize,
    pub converged_at: Option<usize>,
    pub max_feas: f64,
    pub check: f64,
    pub limit: f64,
    pub passed: bool,
    pub wall_time: f64,
}

impl BenchReport {
    pub const CSV_HEADER: &'static str = "case,n,M,metric,init_error,converged_error,std_error,ideal_error,reduction,iterations,converged_at,max_feas,check,limit,passed";

    pub fn csv_row(&self) -> String {
        let opt = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.case,
            self.n,
            self.m,
            self.metric,
            fmt_num(self.init_error),
            fmt_num(self.converged_error),
            fmt_num(self.std_error),
            opt(self.ideal_error),
            opt(self.reduction),
            self.iterations,
            self.converged_at.map(|c| c.to_string()).unwrap_or_default(),
            fmt_num(self.max_feas),
            fmt_num(self.check),
            fmt_num(self.limit),
            self.passed
        )
    }
}

/// Reports as CSV. Wall time is left out so that reruns are byte-identical.
pub fn reports_csv(reports: &[BenchReport]) -> String {
    let mut s = String::from(BenchReport::CSV_HEADER);
    s.push('\n');
    for r in reports {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

/// A finished case: its report, final polytope and training history.
#[derive(Debug, Clone)]
pub struct CaseRun {
    pub report: BenchReport,
    pub polytope: Polytope,
    pub history: TrainHistory,
    /// `(iter, P)` at the snapshot iterations, when requested
    pub snapshots: Vec<(usize, Polytope)>,
}

/// `1 − 2√n/(n+1)`, the best total error of `2n` hyperplanes on the unit ball.
pub fn ideal_sphere_error(n: usize) -> f64 {
    let n = n as f64;
    1.0 - 2.0 * n.sqrt() / (n + 1.0)
}

pub(crate) fn case_seed(seed: u64, case: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(case as u64)
}

pub(crate) struct Trained {
    pub polytope: Polytope,
    pub init: Polytope,
    pub history: TrainHistory,
    pub snapshots: Vec<(usize, Polytope)>,
    pub wall_time: f64,
}

pub(crate) fn train_case<R: Region + ?Sized>(
    region: &R,
    config: &TrainConfig,
    snapshot_at: &[usize],
) -> Result<Trained> {
    let start = Instant::now();
    let mut init = None;
    let mut snapshots = Vec::new();
    let (p, history) = fit_observed(region, &[], config, |iter, p| {
        if iter == 0 {
            init = Some(p.clone());
        }
        if snapshot_at.contains(&iter) {
            snapshots.push((iter, p.clone()));
        }
    })?;
    let last = history.last_iter();
    if !snapshot_at.is_empty() && snapshots.last().map(|s| s.0) != Some(last) {
        snapshots.push((last, p.clone()));
    }
    Ok(Trained {
        polytope: p,
        init: init.ok_or_else(|| Error::Consistency("no initial polytope observed".into()))?,
        history,
        snapshots,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

pub(crate) fn samples_for<R: Region + ?Sized>(
    p: &Polytope,
    region: &R,
    n_dirs: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<DirectionalSample>> {
    let view = Normalized {
        region,
        norm: p.norm(),
    };
    estimate_samples(p, &view, &[], n_dirs, seed, exec)
}

pub(crate) fn reduction(init: f64, converged: f64) -> Option<f64> {
    (init > 0.0).then(|| ((init - converged) / init).clamp(0.0, 1.0))
}

/// First evaluation after which every evaluation has a weighted error
/// below `tol`, if the run ended below it.
pub fn steps_below(history: &TrainHistory, tol: f64, lambda: f64) -> Option<usize> {
    let mut first = None;
    for e in &history.evals {
        if e.estimate.weighted(lambda) < tol {
            first.get_or_insert(e.iter);
        } else {
            first = None;
        }
    }
    first
}

pub fn hypercube_config(n: usize, opts: &BenchOptions) -> TrainConfig {
    TrainConfig {
        m: Some(2 * n),
        phases: vec![Phase::new(0.5, 4000)],
        adam: crate::trainer::AdamParams {
            lr: 3e-3,
            ..Default::default()
        },
        eval_every: 10,
        tol: 2e-6,
        init: InitStrategy::PerturbedAxes { sigma: 0.05 },
        seed: opts.seed,
        execution: opts.execution,
        ..Default::default()
    }
}

pub fn run_hypercube_suite(dims: &[usize], opts: &BenchOptions) -> Result<Vec<CaseRun>> {
    dims.iter()
        .enumerate()
        .map(|(k, &n)| {
            let region = RegionOracle::hypercube(n, 0.0, 1.0)?;
            let cfg = hypercube_config(n, opts);
            let t = train_case(&region, &cfg, &[])?;
            let seed = case_seed(opts.seed, k);
            let weighted = |s: &DirectionalSample| s.weighted(0.5);
            let init = samples_for(&t.init, &region, opts.eval_dirs, seed, opts.execution)?;
            let fin = samples_for(&t.polytope, &region, opts.eval_dirs, seed, opts.execution)?;
            let (e0, _) = mean_and_se(&init, weighted);
            let (e1, se) = mean_and_se(&fin, weighted);
            let max_feas = fin.iter().map(|s| s.e_feas).fold(0.0, f64::max);
            Ok(CaseRun {
                report: BenchReport {
                    case: format!("hypercube_{n}"),
                    n,
                    m: 2 * n,
                    metric: "weighted_0.5".into(),
                    init_error: e0,
                    converged_error: e1,
                    std_error: se,
                    ideal_error: Some(0.0),
                    reduction: reduction(e0, e1),
                    iterations: t.history.last_iter(),
                    converged_at: steps_below(&t.history, 1e-5, 0.5),
                    max_feas,
                    check: e1,
                    limit: 1e-5,
                    passed: e1 < 1e-5,
                    wall_time: t.wall_time,
                },
                polytope: t.polytope,
                history: t.history,
                snapshots: t.snapshots,
            })
        })
        .collect()
}

pub fn hypersphere_config(n: usize, opts: &BenchOptions) -> TrainConfig {
    TrainConfig {
        m: Some(2 * n),
        phases: vec![Phase::new(0.5, 3000)],
        init: InitStrategy::Random,
        normalize: false,
        tol: 0.0,
        seed: opts.seed,
        execution: opts.execution,
        ..Default::default()
    }
}

pub fn run_hypersphere_suite(dims: &[usize], opts: &BenchOptions) -> Result<Vec<CaseRun>> {
    dims.iter()
        .enumerate()
        .map(|(k, &n)| {
            let region = RegionOracle::hypersphere(n, 1.0)?;
            let cfg = hypersphere_config(n, opts);
            let t = train_case(&region, &cfg, &[])?;
            let seed = case_seed(opts.seed, k);
            let total = |s: &DirectionalSample| s.e_feas + s.e_opt;
            let init = samples_for(&t.init, &region, opts.eval_dirs, seed, opts.execution)?;
            let fin = samples_for(&t.polytope, &region, opts.eval_dirs, seed, opts.execution)?;
            let (e0, _) = mean_and_se(&init, total);
            let (e1, se) = mean_and_se(&fin, total);
            let red = reduction(e0, e1);
            let max_feas = fin.iter().map(|s| s.e_feas).fold(0.0, f64::max);
            let (check, passed) = match red {
                Some(r) => (r, r >= 0.99),
                None => (e1, e1 <= 1e-12),
            };
            Ok(CaseRun {
                report: BenchReport {
                    case: format!("hypersphere_{n}"),
                    n,
                    m: 2 * n,
                    metric: "total".into(),
                    init_error: e0,
                    converged_error: e1,
                    std_error: se,
                    ideal_error: Some(ideal_sphere_error(n)),
                    reduction: red,
                    iterations: t.history.last_iter(),
                    converged_at: t.history.converged_at,
                    max_feas,
                    check,
                    limit: 0.99,
                    passed,
                    wall_time: t.wall_time,
                },
                polytope: t.polytope,
                history: t.history,
                snapshots: t.snapshots,
            })
        })
        .collect()
}

/// Parses `"2,5,10"`.
pub fn parse_dims(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| Error::Parse(format!("bad dimension '{s}'")))
        })
        .collect()
}
