use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::metrics::{mean_and_se, DirectionalSample};
use crate::regions::{RegionKind, RegionOracle};
use crate::solver::{chebyshev_center, LinearSystem};
use crate::trainer::TrainConfig;

use super::{case_seed, reduction, samples_for, train_case, BenchOptions, BenchReport, CaseRun};

pub const BURN_IN: usize = 1000;
/// Hit-and-run steps between kept samples.
pub const THIN: usize = 10;

/// Storage-like resources over `t` steps: power `|p_s| ≤ P` and state of
/// charge `0 ≤ e0 + Σ_{s'≤s} p_{s'} ≤ C`, with `P`, `C` and `e0` drawn
/// from `seed`.
pub fn generate_resources(count: usize, t: usize, seed: u64) -> Result<Vec<LinearSystem>> {
    if count == 0 || t == 0 {
        return Err(Error::Invalid("need at least one resource and one step".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let power: f64 = rng.random_range(0.5..1.5);
        let cap: f64 = rng.random_range(1.0..4.0);
        let e0 = cap * rng.random_range(0.2..0.8);
        let mut rows = Vec::with_capacity(4 * t);
        let mut h = Vec::with_capacity(4 * t);
        for s in 0..t {
            let mut r = vec![0.0; t];
            r[s] = 1.0;
            rows.push(r.clone());
            h.push(power);
            r[s] = -1.0;
            rows.push(r);
            h.push(power);
        }
        for s in 0..t {
            let r: Vec<f64> = (0..t).map(|q| if q <= s { 1.0 } else { 0.0 }).collect();
            rows.push(r.iter().map(|x| -x).collect());
            h.push(e0);
            rows.push(r);
            h.push(cap - e0);
        }
        out.push(LinearSystem::from_rows(&rows, h)?);
    }
    Ok(out)
}

/// `count` points from the polytope `sys` by hit-and-run from its
/// Chebyshev center, after [`BURN_IN`] steps and keeping every
/// [`THIN`]th step.
pub fn hit_and_run(sys: &LinearSystem, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let (mut x, r) = chebyshev_center(sys)?;
    if !(r > 0.0) {
        return Err(Error::Invalid("polytope has no interior to sample".into()));
    }
    let n = sys.dim();
    let mut out = Vec::with_capacity(count);
    let mut step = 0usize;
    while out.len() < count {
        let d: Vec<f64> = loop {
            let d: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect();
            if norm(&d) > 1e-12 {
                break d;
            }
        };
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (row, &h) in sys.g().iter_rows().zip(sys.h()) {
            let gd = dot(row, &d);
            let slack = (h - dot(row, &x)).max(0.0);
            if gd > 0.0 {
                hi = hi.min(slack / gd);
            } else if gd < 0.0 {
                lo = lo.max(slack / gd);
            }
        }
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::UnboundedPolytope);
        }
        let t = lo + (hi - lo) * rng.random::<f64>();
        x.iter_mut().zip(&d).for_each(|(x, d)| *x += t * d);
        step += 1;
        if step > BURN_IN && (step - BURN_IN).is_multiple_of(THIN) {
            out.push(x.clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisaggStats {
    pub samples: usize,
    pub feasible: usize,
    /// Largest `|Σ p_i − x|_∞` among the feasible splits.
    pub max_residual: f64,
    /// Some sample failed although the measured feasibility error says
    /// the polytope lies inside the aggregate.
    pub inconsistent: bool,
}

impl DisaggStats {
    pub fn fraction(&self) -> f64 {
        self.feasible as f64 / self.samples.max(1) as f64
    }
}

/// Samples the raw polytope `sys` and tries to split every sample into
/// per-resource trajectories.
pub fn disaggregation_stats(
    sys: &LinearSystem,
    region: &RegionOracle,
    samples: usize,
    tol: f64,
    max_feas: f64,
    seed: u64,
) -> Result<DisaggStats> {
    let RegionKind::MinkowskiLinear(mk) = region.kind() else {
        return Err(Error::Invalid("disaggregation needs a minkowski_linear region".into()));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = hit_and_run(sys, samples, &mut rng)?;
    let mut feasible = 0;
    let mut max_residual = 0.0_f64;
    for x in &points {
        if let Some(parts) = mk.disaggregate(x, tol)? {
            feasible += 1;
            for (k, xk) in x.iter().enumerate() {
                let sum: f64 = parts.iter().map(|p| p[k]).sum();
                max_residual = max_residual.max((sum - xk).abs());
            }
        }
    }
    Ok(DisaggStats {
        samples,
        feasible,
        max_residual,
        inconsistent: feasible < samples && max_feas < 1e-8,
    })
}

pub fn aggregation_config(t: usize, opts: &BenchOptions) -> TrainConfig {
    TrainConfig {
        m: Some(4 * t),
        tol: 0.0,
        seed: opts.seed,
        execution: opts.execution,
        ..Default::default()
    }
}

/// Trains an inner approximation of the Minkowski sum of `count` random
/// resources over `t` steps, then checks 200 sampled points for a
/// feasible disaggregation. Returns the training case and a second
/// report row for the disaggregation.
pub fn run_aggregation_demo(
    count: usize,
    t: usize,
    opts: &BenchOptions,
) -> Result<(CaseRun, BenchReport, DisaggStats)> {
    let region = RegionOracle::minkowski(generate_resources(count, t, opts.seed)?)?;
    let cfg = aggregation_config(t, opts);
    let tr = train_case(&region, &cfg, &[])?;
    let seed = case_seed(opts.seed, 200);
    let weighted = |s: &DirectionalSample| s.weighted(0.5);
    let dirs = opts.eval_dirs.min(500);
    let init = samples_for(&tr.init, &region, dirs, seed, opts.execution)?;
    let fin = samples_for(&tr.polytope, &region, 500, seed, opts.execution)?;
    let (e0, _) = mean_and_se(&init, weighted);
    let (e1, se) = mean_and_se(&fin, weighted);
    let max_feas = fin.iter().map(|s| s.e_feas).fold(0.0, f64::max);
    let raw = tr.polytope.raw_system()?;
    let stats = disaggregation_stats(&raw, &region, 200, 1e-6, max_feas, seed ^ 7)?;
    let report = BenchReport {
        case: "aggregation".into(),
        n: t,
        m: 4 * t,
        metric: "weighted_0.5".into(),
        init_error: e0,
        converged_error: e1,
        std_error: se,
        ideal_error: None,
        reduction: reduction(e0, e1),
        iterations: tr.history.last_iter(),
        converged_at: tr.history.converged_at,
        max_feas,
        check: max_feas,
        limit: 1e-8,
        passed: max_feas < 1e-8,
        wall_time: tr.wall_time,
    };
    let disagg = BenchReport {
        case: "aggregation_disaggregation".into(),
        check: stats.fraction(),
        limit: 1.0,
        passed: stats.feasible == stats.samples && !stats.inconsistent,
        ..report.clone()
    };
    Ok((
        CaseRun {
            report,
            polytope: tr.polytope,
            history: tr.history,
            snapshots: tr.snapshots,
        },
        disagg,
        stats,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::Region;

    #[test]
    fn two_box_resources_support() {
        let res = |_: usize| {
            LinearSystem::from_rows(
                &[
                    vec![1.0, 0.0],
                    vec![-1.0, 0.0],
                    vec![0.0, 1.0],
                    vec![0.0, -1.0],
                    vec![1.0, 1.0],
                ],
                vec![1.0, 0.0, 1.0, 0.0, 1.5],
            )
            .unwrap()
        };
        let region = RegionOracle::minkowski(vec![res(0), res(1)]).unwrap();
        let (_, value) = region.support(&[], &[1.0, 1.0]).unwrap();
        assert!((value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn generated_resources_are_feasible() {
        let rs = generate_resources(5, 4, 3).unwrap();
        for r in &rs {
            assert_eq!(r.len(), 16);
            // idling keeps the state of charge at e0
            assert!(r.contains(&[0.0; 4], 0.0));
        }
        assert_eq!(rs, generate_resources(5, 4, 3).unwrap());
    }

    #[test]
    fn hit_and_run_stays_inside() {
        let sys = LinearSystem::from_rows(
            &[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0], vec![1.0, 1.0]],
            vec![1.0, 1.0, 1.0, 1.0, 1.0],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts = hit_and_run(&sys, 500, &mut rng).unwrap();
        assert_eq!(pts.len(), 500);
        assert!(pts.iter().all(|p| sys.contains(p, 1e-12)));
        // the cut corner has area 1/2 out of 3.5; roughly uniform coverage
        let corner = pts.iter().filter(|p| p[0] < 0.0 && p[1] < 0.0).count() as f64 / 500.0;
        assert!((corner - 1.0 / 3.5).abs() < 0.08, "{corner}");
    }

    #[test]
    fn inner_box_disaggregates() {
        let rs = generate_resources(3, 2, 11).unwrap();
        let region = RegionOracle::minkowski(rs).unwrap();
        // a tiny box around the all-idle point lies inside the aggregate
        let sys = LinearSystem::from_rows(
            &[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            vec![0.05; 4],
        )
        .unwrap();
        let st = disaggregation_stats(&sys, &region, 20, 1e-6, 0.0, 1).unwrap();
        assert_eq!(st.feasible, 20);
        assert!(st.max_residual <= 1e-6);
        assert!(!st.inconsistent);
    }
}
