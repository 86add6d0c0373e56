use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::{mean_and_se, DirectionalSample};
use crate::polytope::Polytope;
use crate::regions::{DiskDifference, Polygon, Region, RegionKind, RegionOracle};
use crate::solver::{solve_lp, LinearSystem};
use crate::trainer::{fmt_num, default_schedule, InitStrategy, Phase, TrainConfig};

use super::{case_seed, reduction, samples_for, train_case, BenchOptions, BenchReport, CaseRun};

pub const SNAPSHOT_ITERS: [usize; 10] = [0, 10, 25, 50, 100, 200, 400, 600, 700, 800];

/// `m` unit normals at angles `2πk/m`.
pub fn even_rows(m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / m as f64;
            vec![a.cos(), a.sin()]
        })
        .collect()
}

pub fn octagon_region() -> Result<RegionOracle> {
    RegionOracle::polygon(Polygon::regular(8, 1.0, 0.0).vertices)
}

fn base(m: usize, opts: &BenchOptions) -> TrainConfig {
    TrainConfig {
        m: Some(m),
        seed: opts.seed,
        execution: opts.execution,
        ..Default::default()
    }
}

pub fn octagon_config(opts: &BenchOptions) -> TrainConfig {
    base(4, opts)
}

pub fn ellipse_config(opts: &BenchOptions) -> TrainConfig {
    TrainConfig {
        phases: default_schedule(),
        ..base(6, opts)
    }
}

/// Outer-leaning run for the nonconvex disk: a tiny feasibility weight
/// and a decaying step from evenly spaced rows.
pub fn disk_config(m: usize, lambda: f64, opts: &BenchOptions) -> TrainConfig {
    TrainConfig {
        phases: vec![Phase::new(lambda, 1000).with_lr(1e-4, 1e-6)],
        init: InitStrategy::Rows { rows: even_rows(m) },
        tol: 0.0,
        ..base(m, opts)
    }
}

/// `count` points spread along the boundary of the convex hull of `d`,
/// in proportion to arc and chord length.
pub fn hull_boundary(d: &DiskDifference, count: usize) -> Vec<[f64; 2]> {
    let [cx, cy] = d.outer_center;
    let r = d.outer_radius;
    let on_circle = |a: f64| [cx + r * a.cos(), cy + r * a.sin()];
    let cross = d.crossings();
    if cross.len() < 2 {
        return (0..count).map(|k| on_circle(2.0 * PI * k as f64 / count as f64)).collect();
    }
    let angle = |p: &[f64; 2]| (p[1] - cy).atan2(p[0] - cx);
    let (a1, a2) = (angle(&cross[0]), angle(&cross[1]));
    // the kept arc runs counter-clockwise from `start` through the part
    // of the circle outside the cut
    let ccw = |from: f64, to: f64| (to - from).rem_euclid(2.0 * PI);
    let mid = |from: f64, to: f64| on_circle(from + 0.5 * ccw(from, to));
    let outside = |p: [f64; 2]| {
        (p[0] - d.cut_center[0]).hypot(p[1] - d.cut_center[1]) >= d.cut_radius
    };
    let (start, span) = if outside(mid(a1, a2)) {
        (a1, ccw(a1, a2))
    } else {
        (a2, ccw(a2, a1))
    };
    let arc_len = r * span;
    let chord = (cross[0][0] - cross[1][0]).hypot(cross[0][1] - cross[1][1]);
    let n_arc = ((count as f64) * arc_len / (arc_len + chord)).round() as usize;
    let n_chord = count - n_arc;
    let mut pts: Vec<[f64; 2]> = (0..n_arc)
        .map(|k| on_circle(start + span * k as f64 / n_arc as f64))
        .collect();
    let (p, q) = (on_circle(start + span), on_circle(start));
    for k in 0..n_chord {
        let t = k as f64 / n_chord as f64;
        pts.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
    }
    pts
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullMetrics {
    /// Largest violation of P's raw constraints over the hull boundary.
    pub coverage_violation: f64,
    /// Largest support-value difference between P and the hull.
    pub support_gap: f64,
}

pub fn hull_metrics(
    p: &Polytope,
    region: &RegionOracle,
    n_boundary: usize,
    n_dirs: usize,
) -> Result<HullMetrics> {
    let RegionKind::DiskDifference(d) = region.kind() else {
        return Err(Error::Invalid("hull metrics need a disk_difference region".into()));
    };
    let raw: LinearSystem = p.raw_system()?;
    let coverage_violation = hull_boundary(d, n_boundary)
        .iter()
        .map(|z| raw.max_violation(z))
        .fold(0.0, f64::max);
    let mut support_gap = 0.0_f64;
    for k in 0..n_dirs {
        let a = 2.0 * PI * (k as f64 + 0.5) / n_dirs as f64;
        let v = [a.cos(), a.sin()];
        let hp = solve_lp(&v, &raw)?
            .into_optimal()
            .ok_or(Error::UnboundedPolytope)?
            .1;
        let hull = region.support(&[], &v)?.1;
        support_gap = support_gap.max((hp - hull).abs());
    }
    Ok(HullMetrics {
        coverage_violation,
        support_gap,
    })
}

/// `iter,row,a1,a2,b` in raw coordinates.
pub fn snapshot_csv(snapshots: &[(usize, Polytope)]) -> Result<String> {
    let mut s = String::from("iter,row,a1,a2,b\n");
    for (iter, p) in snapshots {
        let raw = p.raw_system()?;
        for (i, (row, h)) in raw.g().iter_rows().zip(raw.h()).enumerate() {
            let _ = write!(s, "{iter},{i}");
            for a in row {
                let _ = write!(s, ",{}", fmt_num(*a));
            }
            let _ = writeln!(s, ",{}", fmt_num(*h));
        }
    }
    Ok(s)
}

/// Octagon with 4 rows, ellipse with 6, and the disk difference with 6,
/// each with `(A, b)` snapshots at [`SNAPSHOT_ITERS`] and the final step.
pub fn run_2d_suite(opts: &BenchOptions) -> Result<Vec<CaseRun>> {
    let cases: Vec<(&str, RegionOracle, TrainConfig)> = vec![
        ("octagon", octagon_region()?, octagon_config(opts)),
        (
            "ellipse",
            RegionOracle::ellipse([0.0, 0.0], [1.0, 0.5], 0.0)?,
            ellipse_config(opts),
        ),
        (
            "disk_difference",
            RegionOracle::disk_difference([0.0, 0.0], 1.0, [1.0, 0.0], 0.5)?,
            disk_config(6, 1e-4, opts),
        ),
    ];
    let mut out = Vec::new();
    for (k, (name, region, cfg)) in cases.into_iter().enumerate() {
        let t = train_case(&region, &cfg, &SNAPSHOT_ITERS)?;
        let seed = case_seed(opts.seed, 100 + k);
        let weighted = |s: &DirectionalSample| s.weighted(0.5);
        let init = samples_for(&t.init, &region, opts.eval_dirs, seed, opts.execution)?;
        let fin = samples_for(&t.polytope, &region, opts.eval_dirs, seed, opts.execution)?;
        let (e0, _) = mean_and_se(&init, weighted);
        let (e1, se) = mean_and_se(&fin, weighted);
        let max_feas = fin.iter().map(|s| s.e_feas).fold(0.0, f64::max);
        let (check, limit, passed) = match name {
            "octagon" => (e1, 0.5 * e0, e1 < 0.5 * e0),
            "ellipse" => {
                let worst = samples_for(&t.polytope, &region, 500, seed ^ 1, opts.execution)?
                    .iter()
                    .map(|s| s.e_feas)
                    .fold(0.0, f64::max);
                (worst, 1e-8, worst < 1e-8)
            }
            _ => {
                let h = hull_metrics(&t.polytope, &region, 10_000, 100)?;
                (h.coverage_violation, 1e-3, h.coverage_violation <= 1e-3)
            }
        };
        out.push(CaseRun {
            report: BenchReport {
                case: name.to_string(),
                n: 2,
                m: t.polytope.rows(),
                metric: "weighted_0.5".into(),
                init_error: e0,
                converged_error: e1,
                std_error: se,
                ideal_error: None,
                reduction: reduction(e0, e1),
                iterations: t.history.last_iter(),
                converged_at: t.history.converged_at,
                max_feas,
                check,
                limit,
                passed,
                wall_time: t.wall_time,
            },
            polytope: t.polytope,
            history: t.history,
            snapshots: t.snapshots,
        });
    }
    Ok(out)
}
