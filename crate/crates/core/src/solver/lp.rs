//! Dense revised simplex for `max cᵀx s.t. Gx ≤ h` with free `x`.
//!
//! The primal is solved through its dual in standard form,
//!
//! ```text
//! min hᵀy   s.t.  Gᵀy = c,  y ≥ 0
//! ```
//!
//! which has one equality row per primal variable and one column per primal
//! constraint. At dual optimality the simplex multipliers are a primal
//! optimal vertex, and the basic columns are exactly the constraints active
//! there. Entering columns follow Bland's rule. The ratio test is Harris's
//! two-pass test, falling back to Bland's lowest index on degenerate steps.

use crate::error::{Error, Result};
use crate::linalg::{dot, solve_square, Matrix};

use super::{LinearSystem, LpOutcome, LpStatus};

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-10;
const PHASE1_TOL: f64 = 1e-9;
const HARRIS_SLACK: f64 = 1e-11;
const REFACTOR_EVERY: usize = 64;

/// Maximize `objective · x` over `{x | G x ≤ h}`.
pub fn solve_lp(objective: &[f64], sys: &LinearSystem) -> Result<LpOutcome> {
    let n = sys.dim();
    if objective.len() != n {
        return Err(Error::Dimension(format!(
            "objective has {} entries, system has {n} variables",
            objective.len()
        )));
    }
    if objective.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("objective has non-finite entries".into()));
    }
    match DualSimplex::new(sys, objective).run()? {
        DualResult::Optimal(x) => {
            let value = dot(objective, &x);
            Ok(LpOutcome::optimal(x, value))
        }
        DualResult::Unbounded => Ok(LpOutcome::status(LpStatus::Infeasible)),
        DualResult::Infeasible => {
            // Dual infeasible: primal is unbounded or infeasible. A zero
            // objective separates the two.
            let zero = vec![0.0; n];
            match DualSimplex::new(sys, &zero).run()? {
                DualResult::Optimal(_) => Ok(LpOutcome::status(LpStatus::Unbounded)),
                _ => Ok(LpOutcome::status(LpStatus::Infeasible)),
            }
        }
    }
}

/// True when `{x | G x ≤ h}` is nonempty.
pub fn is_feasible(sys: &LinearSystem) -> Result<bool> {
    let zero = vec![0.0; sys.dim()];
    Ok(matches!(
        DualSimplex::new(sys, &zero).run()?,
        DualResult::Optimal(_)
    ))
}

enum DualResult {
    Optimal(Vec<f64>),
    Unbounded,
    Infeasible,
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    One,
    Two,
}

struct DualSimplex<'a> {
    sys: &'a LinearSystem,
    n: usize,
    m: usize,
    /// +1/-1 per equality row so the right-hand side is nonnegative.
    flip: Vec<f64>,
    rhs: Vec<f64>,
    binv: Matrix,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    xb: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
    max_pivots: usize,
    ratio_slack: f64,
}

impl<'a> DualSimplex<'a> {
    fn new(sys: &'a LinearSystem, c: &[f64]) -> Self {
        let n = sys.dim();
        let m = sys.len();
        let flip: Vec<f64> = c.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect();
        let rhs: Vec<f64> = c.iter().zip(&flip).map(|(v, f)| v * f).collect();
        let mut is_basic = vec![false; m + n];
        for b in is_basic.iter_mut().skip(m) {
            *b = true;
        }
        DualSimplex {
            sys,
            n,
            m,
            flip,
            xb: rhs.clone(),
            rhs,
            binv: Matrix::identity(n),
            basis: (m..m + n).collect(),
            is_basic,
            pivots: 0,
            since_refactor: 0,
            max_pivots: 50 * (n + m) + 1000,
            ratio_slack: HARRIS_SLACK * (1.0 + c.iter().fold(0.0_f64, |a, v| a.max(v.abs()))),
        }
    }

    /// Entry `i` of column `j` of the (flipped) equality matrix.
    #[inline]
    fn col_entry(&self, j: usize, i: usize) -> f64 {
        if j < self.m {
            self.flip[i] * self.sys.g()[(j, i)]
        } else if j - self.m == i {
            1.0
        } else {
            0.0
        }
    }

    fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.col_entry(j, i)).collect()
    }

    fn cost(&self, j: usize, phase: Phase) -> f64 {
        match phase {
            Phase::One => {
                if j >= self.m {
                    1.0
                } else {
                    0.0
                }
            }
            Phase::Two => {
                if j < self.m {
                    self.sys.h()[j]
                } else {
                    0.0
                }
            }
        }
    }

    fn multipliers(&self, phase: Phase) -> Vec<f64> {
        let mut pi = vec![0.0; self.n];
        for (i, &bj) in self.basis.iter().enumerate() {
            let cb = self.cost(bj, phase);
            if cb != 0.0 {
                for (p, v) in pi.iter_mut().zip(self.binv.row(i)) {
                    *p += cb * v;
                }
            }
        }
        pi
    }

    /// `Binv * column(j)`
    fn ftran(&self, j: usize) -> Vec<f64> {
        if j >= self.m {
            let k = j - self.m;
            return (0..self.n).map(|i| self.binv[(i, k)]).collect();
        }
        let col = self.column(j);
        self.binv.mul_vec(&col)
    }

    fn pivot(&mut self, r: usize, entering: usize, u: &[f64]) {
        let n = self.n;
        let ur = u[r];
        {
            let row = self.binv.row_mut(r);
            for v in row.iter_mut() {
                *v /= ur;
            }
        }
        self.xb[r] = self.xb[r].max(0.0) / ur;
        let pivot_row = self.binv.row(r).to_vec();
        let xr = self.xb[r];
        for i in 0..n {
            if i == r || u[i] == 0.0 {
                continue;
            }
            let ui = u[i];
            let row = self.binv.row_mut(i);
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= ui * p;
            }
            self.xb[i] = (self.xb[i] - ui * xr).max(0.0);
        }
        let leaving = self.basis[r];
        self.is_basic[leaving] = false;
        self.is_basic[entering] = true;
        self.basis[r] = entering;
        self.pivots += 1;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor();
        }
    }

    /// Rebuild `Binv` and the basic solution from the basis columns.
    fn refactor(&mut self) {
        self.since_refactor = 0;
        let n = self.n;
        let mut b = Matrix::zeros(n, n);
        for (k, &j) in self.basis.iter().enumerate() {
            for i in 0..n {
                b[(i, k)] = self.col_entry(j, i);
            }
        }
        if let Some(inv) = b.to_nalgebra().try_inverse() {
            if inv.iter().all(|v| v.is_finite()) {
                for i in 0..n {
                    for k in 0..n {
                        self.binv[(i, k)] = inv[(i, k)];
                    }
                }
                self.xb = self.binv.mul_vec(&self.rhs);
                for v in self.xb.iter_mut() {
                    if *v < 0.0 && *v > -PHASE1_TOL {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    /// Runs simplex iterations until optimal. Returns `false` on unboundedness.
    fn iterate(&mut self, phase: Phase) -> Result<bool> {
        // Columns whose ratio test found no pivot; cleared after each pivot.
        let mut rejected = vec![false; self.m];
        loop {
            if self.pivots > self.max_pivots {
                return Err(Error::Cycling {
                    pivots: self.pivots,
                });
            }
            let pi = self.multipliers(phase);
            let mut entering = None;
            // Bland: lowest-index improving column; artificials never re-enter.
            for j in 0..self.m {
                if self.is_basic[j] || rejected[j] {
                    continue;
                }
                let mut reduced = self.cost(j, phase);
                let mut scale = 1.0 + reduced.abs();
                for (i, &p) in pi.iter().enumerate() {
                    let t = p * self.col_entry(j, i);
                    reduced -= t;
                    scale += t.abs();
                }
                if reduced < -OPT_TOL * scale {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else {
                return Ok(true);
            };
            let u = self.ftran(j);
            let umax = u.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let tol = PIVOT_TOL * umax.max(1.0);
            // Harris two-pass ratio test: find the largest step allowed
            // with a small feasibility slack, then take the biggest pivot
            // among rows blocking within that step.
            let mut theta_max = f64::INFINITY;
            for (i, &ui) in u.iter().enumerate() {
                if ui > tol {
                    theta_max = theta_max.min((self.xb[i].max(0.0) + self.ratio_slack) / ui);
                }
            }
            let mut best: Option<(usize, f64)> = None;
            let mut degenerate: Option<usize> = None;
            for (i, &ui) in u.iter().enumerate() {
                if ui <= tol || self.xb[i].max(0.0) / ui > theta_max {
                    continue;
                }
                // Degenerate steps fall back to Bland's lowest index, which
                // is what rules out cycling.
                if self.xb[i] <= 0.0 && degenerate.is_none_or(|d| self.basis[i] < self.basis[d]) {
                    degenerate = Some(i);
                }
                best = match best {
                    Some((bi, bu)) if ui < bu || (ui == bu && self.basis[i] > self.basis[bi]) => {
                        Some((bi, bu))
                    }
                    _ => Some((i, ui)),
                };
            }
            if let Some(d) = degenerate {
                best = Some((d, u[d]));
            }
            let Some((r, _)) = best else {
                if self.since_refactor > 0 {
                    self.refactor();
                    continue;
                }
                if phase == Phase::One {
                    // Phase one is bounded below, so this reduced cost is
                    // rounding noise.
                    rejected[j] = true;
                    continue;
                }
                return Ok(false);
            };
            self.pivot(r, j, &u);
            rejected.iter_mut().for_each(|x| *x = false);
        }
    }

    fn drive_out_artificials(&mut self) {
        for r in 0..self.n {
            if self.basis[r] < self.m {
                continue;
            }
            let row: Vec<f64> = self.binv.row(r).to_vec();
            let candidate = (0..self.m).find(|&j| {
                !self.is_basic[j] && {
                    let v: f64 = (0..self.n).map(|i| row[i] * self.col_entry(j, i)).sum();
                    v.abs() > 1e-7
                }
            });
            if let Some(j) = candidate {
                let u = self.ftran(j);
                self.pivot(r, j, &u);
            }
        }
    }

    fn run(mut self) -> Result<DualResult> {
        if self.n == 0 {
            return Ok(if self.sys.h().iter().all(|&v| v >= 0.0) {
                DualResult::Optimal(vec![])
            } else {
                DualResult::Unbounded
            });
        }
        if !self.iterate(Phase::One)? {
            // Phase one is bounded below by zero; this cannot happen.
            return Err(Error::Consistency("phase one reported unbounded".into()));
        }
        let infeas: f64 = self
            .basis
            .iter()
            .zip(&self.xb)
            .filter(|(&j, _)| j >= self.m)
            .map(|(_, &x)| x.max(0.0))
            .sum();
        let rhs_scale = 1.0 + self.rhs.iter().map(|v| v.abs()).sum::<f64>();
        if infeas > PHASE1_TOL * rhs_scale {
            return Ok(DualResult::Infeasible);
        }
        self.drive_out_artificials();
        if !self.iterate(Phase::Two)? {
            return Ok(DualResult::Unbounded);
        }
        self.refactor();
        Ok(DualResult::Optimal(self.primal_point()))
    }

    /// Primal vertex: solves `Bᵀπ = c_B` on the final basis.
    fn primal_point(&self) -> Vec<f64> {
        let n = self.n;
        let mut bt = Matrix::zeros(n, n);
        let mut cb = vec![0.0; n];
        for (k, &j) in self.basis.iter().enumerate() {
            for i in 0..n {
                bt[(k, i)] = self.col_entry(j, i);
            }
            cb[k] = self.cost(j, Phase::Two);
        }
        let pi = solve_square(&bt, &cb).unwrap_or_else(|| self.multipliers(Phase::Two));
        pi.iter().zip(&self.flip).map(|(p, f)| p * f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(rows: &[&[f64]], h: &[f64]) -> LinearSystem {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        LinearSystem::new(Matrix::from_rows(&rows).unwrap(), h.to_vec()).unwrap()
    }

    fn unit_box() -> LinearSystem {
        sys(
            &[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]],
            &[1.0, 0.0, 1.0, 0.0],
        )
    }

    #[test]
    fn box_corner() {
        let out = solve_lp(&[1.0, 1.0], &unit_box()).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        let x = out.point.unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
        assert!((out.value.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn free_coordinate_is_unbounded() {
        let s = sys(&[&[1.0, 0.0], &[-1.0, 0.0]], &[0.0, 0.0]);
        assert_eq!(solve_lp(&[1.0, 0.0], &s).unwrap().status, LpStatus::Optimal);
        assert_eq!(solve_lp(&[0.0, 1.0], &s).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn line_direction_along_free_axis_unbounded() {
        // x_1 = 0 with x_2 free; maximizing x_1 is bounded, x_2 is not
        let s = sys(&[&[1.0, 0.0], &[-1.0, 0.0]], &[0.0, 0.0]);
        let out = solve_lp(&[1.0, 0.0], &s).unwrap();
        assert!(out.value.unwrap().abs() < 1e-12);
    }

    #[test]
    fn contradictory_bounds_infeasible() {
        let s = sys(&[&[1.0, 0.0], &[-1.0, 0.0]], &[-1.0, 0.0]);
        let out = solve_lp(&[0.0, 1.0], &s).unwrap();
        assert_eq!(out.status, LpStatus::Infeasible);
        assert!(out.point.is_none() && out.value.is_none());
        assert!(!is_feasible(&s).unwrap());
        assert!(is_feasible(&unit_box()).unwrap());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(matches!(
            solve_lp(&[1.0], &unit_box()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn degenerate_vertex() {
        // Triangle with a redundant row through the apex.
        let s = sys(
            &[&[-1.0, 0.0], &[0.0, -1.0], &[1.0, 1.0], &[1.0, 2.0], &[2.0, 1.0]],
            &[0.0, 0.0, 1.0, 2.0, 2.0],
        );
        let out = solve_lp(&[1.0, 1.0], &s).unwrap();
        assert!((out.value.unwrap() - 1.0).abs() < 1e-12);
        let out = solve_lp(&[2.0, 1.0], &s).unwrap();
        let x = out.point.unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && x[1].abs() < 1e-12);
    }

    #[test]
    fn deterministic_bitwise() {
        let s = unit_box();
        let a = solve_lp(&[0.3, -0.7], &s).unwrap();
        let b = solve_lp(&[0.3, -0.7], &s).unwrap();
        assert_eq!(a, b);
    }
}
