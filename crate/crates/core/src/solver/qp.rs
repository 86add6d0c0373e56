//! Euclidean projection onto a polyhedron by Hildreth's dual coordinate
//! ascent, with an exact active-set polish.
//!
//! For a selector that covers only some coordinates the objective is not
//! strictly convex in the remaining ones; those are handled by an outer
//! proximal-point loop that anchors them to their previous values.

use crate::error::{Error, Result};
use crate::linalg::{dot, lstsq, norm, Matrix};

use super::{is_feasible, LinearSystem};

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    /// Duality-gap tolerance.
    pub gap_tol: f64,
    /// Sweep cap over all constraints.
    pub max_sweeps: usize,
    /// Window (in sweeps) over which the residual trend is checked for
    /// infeasibility.
    pub trend_window: usize,
    pub feas_tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            gap_tol: 1e-10,
            max_sweeps: 100_000,
            trend_window: 500,
            feas_tol: super::FEAS_TOL,
        }
    }
}

/// Minimize `‖x[selector] − target‖²` over `{x | G x ≤ h}`; returns the
/// selected coordinates of the minimizer.
pub fn project_qp(target: &[f64], sys: &LinearSystem, selector: &[usize]) -> Result<Vec<f64>> {
    let full = project_qp_full(target, sys, selector, &QpOptions::default())?;
    Ok(selector.iter().map(|&k| full[k]).collect())
}

/// As [`project_qp`] but returns the full feasible vector.
pub fn project_qp_full(
    target: &[f64],
    sys: &LinearSystem,
    selector: &[usize],
    opts: &QpOptions,
) -> Result<Vec<f64>> {
    let n = sys.dim();
    if target.len() != selector.len() {
        return Err(Error::Dimension(format!(
            "target has {} entries, selector has {}",
            target.len(),
            selector.len()
        )));
    }
    let mut selected = vec![false; n];
    for &k in selector {
        if k >= n {
            return Err(Error::Dimension(format!(
                "selector index {k} out of range for {n} variables"
            )));
        }
        if selected[k] {
            return Err(Error::Dimension(format!("selector index {k} repeated")));
        }
        selected[k] = true;
    }
    if sys.is_empty() {
        let mut x = vec![0.0; n];
        for (&k, &t) in selector.iter().zip(target) {
            x[k] = t;
        }
        return Ok(x);
    }

    let mut point = vec![0.0; n];
    for (&k, &t) in selector.iter().zip(target) {
        point[k] = t;
    }
    if selector.len() == n {
        let mut lambda = vec![0.0; sys.len()];
        return hildreth(&point, sys, &mut lambda, opts);
    }

    // Proximal point on the unselected coordinates: each step is a plain
    // projection in coordinates u = W^{1/2} x with W = diag(1 | rho).
    const RHO: f64 = 1.0;
    let w_sqrt: Vec<f64> = selected
        .iter()
        .map(|&s| if s { 1.0 } else { RHO.sqrt() })
        .collect();
    let mut scaled_g = sys.g().clone();
    for i in 0..scaled_g.rows() {
        for (v, w) in scaled_g.row_mut(i).iter_mut().zip(&w_sqrt) {
            *v /= w;
        }
    }
    let scaled = LinearSystem::new(scaled_g, sys.h().to_vec())?;
    let mut lambda = vec![0.0; sys.len()];
    let mut x = point.clone();
    let max_outer = 20_000;
    for _ in 0..max_outer {
        let anchor: Vec<f64> = point
            .iter()
            .enumerate()
            .map(|(k, &p)| if selected[k] { p } else { x[k] })
            .zip(&w_sqrt)
            .map(|(v, w)| v * w)
            .collect();
        let u = hildreth(&anchor, &scaled, &mut lambda, opts)?;
        let next: Vec<f64> = u.iter().zip(&w_sqrt).map(|(v, w)| v / w).collect();
        let step = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        x = next;
        if step <= 1e-13 * (1.0 + norm(&x)) {
            return Ok(x);
        }
    }
    Err(Error::Convergence {
        gap: f64::NAN,
        iterations: max_outer,
    })
}

/// Projects `p` onto `{x | G x ≤ h}`; `lambda` is a warm start and receives
/// the final multipliers.
fn hildreth(
    p: &[f64],
    sys: &LinearSystem,
    lambda: &mut [f64],
    opts: &QpOptions,
) -> Result<Vec<f64>> {
    let g = sys.g();
    let h = sys.h();
    let m = sys.len();
    let row_sq: Vec<f64> = g.iter_rows().map(|r| dot(r, r)).collect();
    let scale = 1.0 + norm(p) + h.iter().fold(0.0_f64, |a, v| a.max(v.abs()));

    if sys.max_violation(p) <= 0.0 {
        lambda.iter_mut().for_each(|l| *l = 0.0);
        return Ok(p.to_vec());
    }

    let mut x = p.to_vec();
    for (i, &l) in lambda.iter().enumerate() {
        if l != 0.0 {
            crate::linalg::axpy(-l, g.row(i), &mut x);
        }
    }

    let mut window_start_viol = f64::INFINITY;
    let mut window_start_dual = 0.0;
    let mut last_gap = f64::INFINITY;
    for sweep in 0..opts.max_sweeps {
        for i in 0..m {
            let r = g.row(i);
            let resid = dot(r, &x) - h[i];
            let delta = (resid / row_sq[i]).max(-lambda[i]);
            if delta != 0.0 {
                lambda[i] += delta;
                crate::linalg::axpy(-delta, r, &mut x);
            }
        }

        let viol = sys.max_violation(&x).max(0.0);
        let gap: f64 = (0..m)
            .map(|i| lambda[i] * (h[i] - dot(g.row(i), &x)))
            .sum::<f64>()
            .abs();
        last_gap = gap;

        if sweep % 4 == 0 || viol <= opts.feas_tol {
            if let Some(xp) = polish(p, sys, lambda, scale) {
                return Ok(xp);
            }
        }
        if viol <= 1e-3 * opts.feas_tol && gap <= opts.gap_tol {
            return Ok(x);
        }

        if (sweep + 1) % opts.trend_window == 0 {
            let dual = norm(lambda);
            let stalled = viol >= 0.999 * window_start_viol && dual > window_start_dual;
            if stalled && !is_feasible(sys)? {
                return Err(Error::Infeasible);
            }
            window_start_viol = viol;
            window_start_dual = dual;
        }
    }
    if !is_feasible(sys)? {
        return Err(Error::Infeasible);
    }
    Err(Error::Convergence {
        gap: last_gap,
        iterations: opts.max_sweeps,
    })
}

/// Solves the equality-constrained projection on the rows with positive
/// multipliers and accepts it when it satisfies the full KKT conditions.
fn polish(p: &[f64], sys: &LinearSystem, lambda: &[f64], scale: f64) -> Option<Vec<f64>> {
    let g = sys.g();
    let active: Vec<usize> = (0..sys.len()).filter(|&i| lambda[i] > 0.0).collect();
    if active.is_empty() || active.len() > sys.dim() + sys.dim() {
        return None;
    }
    let k = active.len();
    let mut gram = Matrix::zeros(k, k);
    let mut rhs = vec![0.0; k];
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            gram[(a, b)] = dot(g.row(i), g.row(j));
        }
        rhs[a] = dot(g.row(i), p) - sys.h()[i];
    }
    let mu = lstsq(&gram, &rhs)?;
    let mu_scale = 1.0 + mu.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if mu.iter().any(|&v| v < -1e-12 * mu_scale) {
        return None;
    }
    let mut x = p.to_vec();
    for (&i, &mi) in active.iter().zip(&mu) {
        crate::linalg::axpy(-mi, g.row(i), &mut x);
    }
    // Active rows must hold with equality (lstsq may have failed on an
    // inconsistent subsystem), and no other row may be violated.
    let tight_ok = active
        .iter()
        .all(|&i| (dot(g.row(i), &x) - sys.h()[i]).abs() <= 1e-11 * scale);
    if tight_ok && sys.max_violation(&x) <= 1e-11 * scale {
        Some(x)
    } else {
        None
    }
}
