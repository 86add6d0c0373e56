//! Fixed-region training: sample directions, evaluate the directional
//! errors, take an Adam step on `(A, b)` from the active-row loss, and
//! renormalize.

mod adam;
mod loss;

pub use adam::{adam_step, AdamParams, AdamState};
pub use loss::{active_rows, loss_and_grads, loss_with_rows, ActiveRows, Grads};

use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{norm, Matrix};
use crate::metrics::{dir_errors, estimate_errors, sample_directions, DirectionalSample, ErrorEstimate};
use crate::polytope::{AffineNorm, Normalized, Polytope, ACT_TOL};
use crate::regions::{Region, DIR_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub lambda: f64,
    pub iters: usize,
    /// Overrides the configured learning rate for this phase.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    /// Learning rate reached at the last iteration of the phase, decaying
    /// geometrically from the starting rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_end: Option<f64>,
}

impl Phase {
    pub fn new(lambda: f64, iters: usize) -> Self {
        Phase {
            lambda,
            iters,
            lr: None,
            lr_end: None,
        }
    }

    pub fn with_lr(mut self, start: f64, end: f64) -> Self {
        self.lr = Some(start);
        self.lr_end = Some(end);
        self
    }

    /// Learning rate at step `k` (0-based) of the phase.
    pub fn lr_at(&self, base: f64, k: usize) -> f64 {
        let start = self.lr.unwrap_or(base);
        match self.lr_end {
            Some(end) if self.iters > 1 => {
                start * (end / start).powf(k as f64 / (self.iters - 1) as f64)
            }
            _ => start,
        }
    }
}

/// Parses `"l:iters,l:iters,…"`.
pub fn parse_schedule(text: &str) -> Result<Vec<Phase>> {
    text.split(',')
        .map(|part| {
            let (l, it) = part
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("schedule entry '{part}' is not lambda:iters")))?;
            let lambda: f64 = l
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad lambda '{l}'")))?;
            let iters: usize = it
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad iteration count '{it}'")))?;
            Ok(Phase::new(lambda, iters))
        })
        .collect()
}

pub fn default_schedule() -> Vec<Phase> {
    vec![
        Phase::new(0.5, 500),
        Phase::new(0.9, 200),
        Phase::new(0.9999, 100),
    ]
}

/// How the initial row directions are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitStrategy {
    /// `±e_i` for the first `2n` rows, random unit rows after that.
    Axes,
    /// `±e_i` plus Gaussian noise of the given size, then random rows.
    PerturbedAxes { sigma: f64 },
    /// Random unit rows, redrawn until the polytope is bounded.
    Random,
    /// Explicit rows (`M × n`, row-major).
    Rows { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of hyperplanes; `None` means `2n`.
    pub m: Option<usize>,
    pub phases: Vec<Phase>,
    pub adam: AdamParams,
    pub batch: usize,
    pub act_tol: f64,
    pub dir_eps: f64,
    pub eval_every: usize,
    pub eval_dirs: usize,
    pub seed: u64,
    pub tol: f64,
    pub patience: usize,
    /// Map the region's bounding box into `[0, 1]^n` before training.
    pub normalize: bool,
    pub init: InitStrategy,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            m: None,
            phases: default_schedule(),
            adam: AdamParams::default(),
            batch: 8,
            act_tol: ACT_TOL,
            dir_eps: DIR_EPS,
            eval_every: 50,
            eval_dirs: 200,
            seed: 0,
            tol: 1e-5,
            patience: 3,
            normalize: true,
            init: InitStrategy::Axes,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.phases.iter().map(|p| p.iters).sum::<usize>() == 0 {
            return Err(Error::Invalid("schedule has no iterations".into()));
        }
        for p in &self.phases {
            if !(0.0..=1.0).contains(&p.lambda) {
                return Err(Error::Invalid(format!("lambda {} outside [0, 1]", p.lambda)));
            }
            if p.lr.iter().chain(&p.lr_end).any(|&lr| !(lr > 0.0)) {
                return Err(Error::Invalid("phase learning rate must be positive".into()));
            }
        }
        let a = &self.adam;
        if !(a.lr > 0.0) {
            return Err(Error::Invalid("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::Invalid("adam betas must lie in [0, 1) and eps > 0".into()));
        }
        if self.batch == 0 || self.eval_every == 0 || self.eval_dirs == 0 || self.patience == 0 {
            return Err(Error::Invalid(
                "batch, eval_every, eval_dirs and patience must be positive".into(),
            ));
        }
        if !(self.act_tol > 0.0) || !(self.dir_eps > 0.0) || !(self.tol >= 0.0) {
            return Err(Error::Invalid("tolerances must be positive".into()));
        }
        if self.m == Some(0) {
            return Err(Error::Invalid("M must be positive".into()));
        }
        Ok(())
    }

    pub fn rows_for(&self, n: usize) -> usize {
        self.m.unwrap_or(2 * n)
    }

    pub fn total_iters(&self) -> usize {
        self.phases.iter().map(|p| p.iters).sum()
    }
}

/// Draws `m` unit rows in `n` dimensions according to `strategy`.
pub fn initial_directions(
    n: usize,
    m: usize,
    strategy: &InitStrategy,
    rng: &mut ChaCha8Rng,
) -> Result<Matrix> {
    let gauss = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            let r = norm(&v);
            if r > DIR_EPS {
                return v.iter().map(|x| x / r).collect();
            }
        }
    };
    let axis = |i: usize| {
        let mut e = vec![0.0; n];
        e[i / 2] = if i.is_multiple_of(2) { 1.0 } else { -1.0 };
        e
    };
    let mut rows = Vec::with_capacity(m);
    match strategy {
        InitStrategy::Axes => {
            for i in 0..m {
                rows.push(if i < 2 * n { axis(i) } else { gauss(rng) });
            }
        }
        InitStrategy::PerturbedAxes { sigma } => {
            for i in 0..m {
                if i < 2 * n {
                    let mut r = axis(i);
                    for x in r.iter_mut() {
                        let d: f64 = StandardNormal.sample(rng);
                        *x += sigma * d;
                    }
                    rows.push(r);
                } else {
                    rows.push(gauss(rng));
                }
            }
        }
        InitStrategy::Random => {
            for _ in 0..m {
                rows.push(gauss(rng));
            }
        }
        InitStrategy::Rows { rows: given } => {
            if given.len() != m || given.iter().any(|r| r.len() != n) {
                return Err(Error::Dimension(format!("initial rows must be {m}x{n}")));
            }
            rows = given.clone();
        }
    }
    Matrix::from_rows(&rows)
}

/// Outer initialization: each offset is the region's support value along
/// its (normalized) row.
pub fn init_outer<R: Region + ?Sized>(
    region: &R,
    theta0: &[f64],
    a0: &Matrix,
    norm: AffineNorm,
) -> Result<Polytope> {
    if a0.cols() != region.dim() {
        return Err(Error::Dimension(format!(
            "A0 has {} columns, region has dimension {}",
            a0.cols(),
            region.dim()
        )));
    }
    let ones = vec![1.0; a0.rows()];
    let mut p = Polytope::new(a0.clone(), ones, norm)?;
    let view = Normalized {
        region,
        norm: p.norm(),
    };
    let mut b = Vec::with_capacity(p.rows());
    for row in p.a().iter_rows() {
        b.push(view.support(theta0, row)?.1);
    }
    *p.parts_mut().1 = b;
    Ok(p)
}

/// Whether `{u | A u ≤ b}` is bounded (rows positively span the space).
pub fn is_bounded(p: &Polytope) -> Result<bool> {
    let n = p.dim();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = s;
            match p.support_pt(&e) {
                Ok(_) => {}
                Err(Error::UnboundedPolytope) => return Ok(false),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(true)
}

/// The map into training coordinates for `region` at `theta`.
pub fn training_norm<R: Region + ?Sized>(region: &R, theta: &[f64], normalize: bool) -> Result<AffineNorm> {
    let n = region.dim();
    if !normalize {
        return Ok(AffineNorm::identity(n));
    }
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        hi[i] = region.support(theta, &e)?.1;
        e[i] = -1.0;
        lo[i] = -region.support(theta, &e)?.1;
    }
    AffineNorm::isotropic(&lo, &hi)
}

/// Builds the initial polytope from the config, redrawing random rows up to
/// 100 times if they leave the polytope unbounded.
pub fn initial_polytope<R: Region + ?Sized>(
    region: &R,
    theta0: &[f64],
    norm: AffineNorm,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Polytope> {
    let n = region.dim();
    let m = config.rows_for(n);
    if m < n + 1 {
        return Err(Error::Invalid(format!(
            "M = {m} cannot bound a polytope in {n} dimensions"
        )));
    }
    for _ in 0..100 {
        let a0 = initial_directions(n, m, &config.init, rng)?;
        let p = init_outer(region, theta0, &a0, norm.clone())?;
        if is_bounded(&p)? {
            return Ok(p);
        }
        if matches!(config.init, InitStrategy::Rows { .. }) {
            break;
        }
    }
    Err(Error::Invalid(
        "initial directions do not bound a polytope".into(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub lambda: f64,
    pub e_feas: f64,
    pub e_opt: f64,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub iter: usize,
    pub lambda: f64,
    pub estimate: ErrorEstimate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub iters: Vec<IterRecord>,
    pub evals: Vec<EvalRecord>,
    /// Iteration of the first evaluation in the streak that met the
    /// convergence tolerance during the final phase.
    pub converged_at: Option<usize>,
    /// Number of updates after which `b` had to be inflated.
    pub repairs: usize,
}

pub(crate) fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

impl TrainHistory {
    pub fn iter_csv(&self) -> String {
        let mut s = String::from("iter,lambda,e_feas,e_opt,loss,grad_norm\n");
        for r in &self.iters {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.iter,
                fmt_num(r.lambda),
                fmt_num(r.e_feas),
                fmt_num(r.e_opt),
                fmt_num(r.loss),
                fmt_num(r.grad_norm)
            );
        }
        s
    }

    pub fn eval_csv(&self) -> String {
        let mut s = String::from("iter,mean_feas,mean_opt,max_feas,max_opt\n");
        for r in &self.evals {
            let e = &r.estimate;
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.iter,
                fmt_num(e.mean_feas),
                fmt_num(e.mean_opt),
                fmt_num(e.max_feas),
                fmt_num(e.max_opt)
            );
        }
        s
    }

    pub fn initial_eval(&self) -> Option<&EvalRecord> {
        self.evals.first()
    }

    pub fn final_eval(&self) -> Option<&EvalRecord> {
        self.evals.last()
    }

    pub fn last_iter(&self) -> usize {
        self.iters.last().map_or(0, |r| r.iter)
    }
}

/// A run that stopped on an error; carries the last state that passed
/// its checks.
#[derive(Debug, Clone)]
pub struct TrainAbort<S> {
    pub error: Error,
    pub last_good: S,
    pub history: TrainHistory,
}

impl<S> From<TrainAbort<S>> for Error {
    fn from(a: TrainAbort<S>) -> Error {
        a.error
    }
}

/// Batch-averaged statistics of one update.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStep {
    pub e_feas: f64,
    pub e_opt: f64,
    pub loss: f64,
    pub grads: Grads,
}

/// Evaluates `dirs` against `p` and averages loss and gradients.
pub fn batch_step<R: Region + ?Sized>(
    p: &Polytope,
    region: &R,
    theta: &[f64],
    dirs: &[Vec<f64>],
    lambda: f64,
    act_tol: f64,
    exec: Execution,
) -> Result<(BatchStep, Vec<DirectionalSample>)> {
    let results = exec.map(dirs, |v| -> Result<(DirectionalSample, f64, Grads)> {
        let s = dir_errors(p, region, theta, v)?;
        let (l, g) = loss_and_grads(p, &s, lambda, act_tol)?;
        Ok((s, l, g))
    });
    let k = dirs.len() as f64;
    let mut step = BatchStep {
        e_feas: 0.0,
        e_opt: 0.0,
        loss: 0.0,
        grads: Grads::zeros(p.rows(), p.dim()),
    };
    let mut samples = Vec::with_capacity(dirs.len());
    for r in results {
        let (s, l, g) = r?;
        step.e_feas += s.e_feas / k;
        step.e_opt += s.e_opt / k;
        step.loss += l / k;
        step.grads.add_scaled(&g, 1.0 / k);
        samples.push(s);
    }
    Ok((step, samples))
}

/// Tracks consecutive evaluations under the tolerance.
#[derive(Debug, Default)]
pub(crate) struct Streak {
    count: usize,
    start: Option<usize>,
}

impl Streak {
    pub(crate) fn update(&mut self, iter: usize, below: bool) {
        if below {
            if self.count == 0 {
                self.start = Some(iter);
            }
            self.count += 1;
        } else {
            self.count = 0;
            self.start = None;
        }
    }

    pub(crate) fn done(&self, patience: usize) -> Option<usize> {
        (self.count >= patience).then_some(self.start).flatten()
    }
}

/// Derives the per-evaluation seed stream from the run seed.
pub(crate) fn eval_stream(seed: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(1);
    r
}

pub fn fit<R: Region + ?Sized>(
    region: &R,
    theta0: &[f64],
    config: &TrainConfig,
) -> std::result::Result<(Polytope, TrainHistory), TrainAbort<Option<Polytope>>> {
    fit_observed(region, theta0, config, |_, _| {})
}

/// As [`fit`], calling `observer(iter, P)` at iteration 0 and after every
/// update.
pub fn fit_observed<R, F>(
    region: &R,
    theta0: &[f64],
    config: &TrainConfig,
    mut observer: F,
) -> std::result::Result<(Polytope, TrainHistory), TrainAbort<Option<Polytope>>>
where
    R: Region + ?Sized,
    F: FnMut(usize, &Polytope),
{
    let mut history = TrainHistory::default();
    let abort = |error: Error, last: Option<Polytope>, history: &TrainHistory| TrainAbort {
        error,
        last_good: last,
        history: history.clone(),
    };
    if let Err(e) = config.validate() {
        return Err(abort(e, None, &history));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut eval_rng = eval_stream(config.seed);
    let setup = training_norm(region, theta0, config.normalize).and_then(|norm| {
        initial_polytope(region, theta0, norm, config, &mut rng)
    });
    let mut p = match setup {
        Ok(p) => p,
        Err(e) => return Err(abort(e, None, &history)),
    };
    let norm = p.norm().clone();
    let view = Normalized {
        region,
        norm: &norm,
    };
    let n = p.dim();
    let exec = config.execution;

    let evaluate = |p: &Polytope, rng: &mut ChaCha8Rng| {
        estimate_errors(p, &view, theta0, config.eval_dirs, rng.next_u64(), exec)
    };
    match evaluate(&p, &mut eval_rng) {
        Ok(est) => history.evals.push(EvalRecord {
            iter: 0,
            lambda: config.phases[0].lambda,
            estimate: est,
        }),
        Err(e) => return Err(abort(e, Some(p), &history)),
    }
    observer(0, &p);

    let mut state = AdamState::new(p.rows() * (n + 1));
    let mut iter = 0usize;
    let last_phase = config.phases.len() - 1;
    'phases: for (pi, phase) in config.phases.iter().enumerate() {
        let mut streak = Streak::default();
        for k in 0..phase.iters {
            iter += 1;
            let hp = AdamParams {
                lr: phase.lr_at(config.adam.lr, k),
                ..config.adam
            };
            let dirs = sample_directions(n, config.batch, &mut rng);
            let step = match batch_step(&p, &view, theta0, &dirs, phase.lambda, config.act_tol, exec) {
                Ok((s, _)) => s,
                Err(e) => return Err(abort(e, Some(p), &history)),
            };
            let grad_norm = step.grads.norm();
            if !step.loss.is_finite() || !step.grads.is_finite() {
                return Err(abort(Error::NonFinite { iter }, Some(p), &history));
            }
            history.iters.push(IterRecord {
                iter,
                lambda: phase.lambda,
                e_feas: step.e_feas,
                e_opt: step.e_opt,
                loss: step.loss,
                grad_norm,
            });

            let mut next = p.clone();
            if let Err(e) = apply_update(&mut next, &step.grads, &mut state, &hp) {
                return Err(abort(e, Some(p), &history));
            }
            match next.ensure_nonempty() {
                Ok(bump) => history.repairs += usize::from(bump > 0.0),
                Err(e) => return Err(abort(e, Some(p), &history)),
            }
            p = next;
            observer(iter, &p);

            if iter.is_multiple_of(config.eval_every) {
                let est = match evaluate(&p, &mut eval_rng) {
                    Ok(est) => est,
                    Err(e) => return Err(abort(e, Some(p), &history)),
                };
                streak.update(iter, est.weighted(phase.lambda) < config.tol);
                history.evals.push(EvalRecord {
                    iter,
                    lambda: phase.lambda,
                    estimate: est,
                });
                if let Some(start) = streak.done(config.patience) {
                    if pi == last_phase {
                        history.converged_at = Some(start);
                        break 'phases;
                    }
                    continue 'phases;
                }
            }
        }
    }
    if history.evals.last().map(|e| e.iter) != Some(iter) {
        let lambda = config.phases[last_phase].lambda;
        match evaluate(&p, &mut eval_rng) {
            Ok(est) => history.evals.push(EvalRecord {
                iter,
                lambda,
                estimate: est,
            }),
            Err(e) => return Err(abort(e, Some(p), &history)),
        }
    }
    Ok((p, history))
}

/// Adam step on the flattened `(A, b)` followed by row normalization.
fn apply_update(p: &mut Polytope, grads: &Grads, state: &mut AdamState, hp: &AdamParams) -> Result<()> {
    let (a, b) = p.parts_mut();
    let mut params = a.as_slice().to_vec();
    params.extend_from_slice(b);
    adam_step(&mut params, &grads.flatten(), state, hp)?;
    let na = a.as_slice().len();
    a.as_mut_slice().copy_from_slice(&params[..na]);
    b.copy_from_slice(&params[na..]);
    p.normalize_rows()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::RegionOracle;

    #[test]
    fn schedule_parsing() {
        let s = parse_schedule("0.5:500, 0.9:200,0.9999:100").unwrap();
        assert_eq!(s, default_schedule());
        assert!(parse_schedule("0.5").is_err());
        assert!(parse_schedule("x:1").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            phases: vec![Phase::new(1.5, 10)],
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let empty = TrainConfig {
            phases: vec![Phase::new(0.5, 0)],
            ..TrainConfig::default()
        };
        assert!(empty.validate().is_err());
    }

    #[test]
    fn outer_init_recovers_box_and_circumscribes_disk() {
        let cube = RegionOracle::hypercube(2, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a0 = initial_directions(2, 4, &InitStrategy::Axes, &mut rng).unwrap();
        let p = init_outer(&cube, &[], &a0, AffineNorm::identity(2)).unwrap();
        assert_eq!(p.b(), &[1.0, 0.0, 1.0, 0.0]);

        let disk = RegionOracle::hypersphere(2, 1.0).unwrap();
        let p = init_outer(&disk, &[], &a0, AffineNorm::identity(2)).unwrap();
        assert_eq!(p.b(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn box_is_a_fixed_point() {
        let cube = RegionOracle::hypercube(2, 0.0, 1.0).unwrap();
        let cfg = TrainConfig {
            phases: vec![Phase::new(0.5, 200)],
            ..TrainConfig::default()
        };
        let (p, h) = fit(&cube, &[], &cfg).unwrap();
        let last = h.final_eval().unwrap();
        assert!(last.estimate.weighted(0.5) < 1e-9);
        assert!(h.converged_at.is_some());
        assert!(p.a().iter_rows().all(|r| (norm(r) - 1.0).abs() < 1e-12));
    }

    #[test]
    fn fit_is_deterministic_across_execution_modes() {
        let disk = RegionOracle::hypersphere(2, 1.0).unwrap();
        let mut cfg = TrainConfig {
            m: Some(6),
            phases: vec![Phase::new(0.5, 60)],
            eval_every: 20,
            ..TrainConfig::default()
        };
        let (p1, h1) = fit(&disk, &[], &cfg).unwrap();
        cfg.execution = Execution::Sequential;
        let (p2, h2) = fit(&disk, &[], &cfg).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(h1, h2);
    }
}
