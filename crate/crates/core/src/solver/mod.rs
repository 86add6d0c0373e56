//! Dense LP and projection solvers.
//!
//! Everything here is a pure function of its inputs: no global state, no
//! randomness, fixed pivot and sweep orders. Outcomes are bitwise
//! reproducible.

mod lp;
mod minnorm;
mod qp;

pub use lp::{is_feasible, solve_lp};
pub use minnorm::{nearest_point_via_support, MinNormOptions};
pub use qp::{project_qp, project_qp_full, QpOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};

/// Feasibility tolerance on constraint residuals.
pub const FEAS_TOL: f64 = 1e-8;
/// Tolerance on LP objective values.
pub const VALUE_TOL: f64 = 1e-9;

/// `{x | G x ≤ h}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    g: Matrix,
    h: Vec<f64>,
}

impl LinearSystem {
    pub fn new(g: Matrix, h: Vec<f64>) -> Result<Self> {
        if g.rows() != h.len() {
            return Err(Error::Dimension(format!(
                "G has {} rows but h has {} entries",
                g.rows(),
                h.len()
            )));
        }
        if !g.is_finite() || h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("constraint data must be finite".into()));
        }
        for (i, row) in g.iter_rows().enumerate() {
            if row.iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroRow { row: i });
            }
        }
        Ok(LinearSystem { g, h })
    }

    pub fn from_rows(rows: &[Vec<f64>], h: Vec<f64>) -> Result<Self> {
        LinearSystem::new(Matrix::from_rows(rows)?, h)
    }

    #[inline]
    pub fn g(&self) -> &Matrix {
        &self.g
    }

    #[inline]
    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Number of variables.
    #[inline]
    pub fn dim(&self) -> usize {
        self.g.cols()
    }

    /// Number of constraints.
    #[inline]
    pub fn len(&self) -> usize {
        self.g.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.g
            .iter_rows()
            .zip(&self.h)
            .map(|(r, h)| crate::linalg::dot(r, x) - h)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.is_empty() || self.max_violation(x) <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Unbounded,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub point: Option<Vec<f64>>,
    pub value: Option<f64>,
}

impl LpOutcome {
    fn optimal(point: Vec<f64>, value: f64) -> Self {
        LpOutcome {
            status: LpStatus::Optimal,
            point: Some(point),
            value: Some(value),
        }
    }

    fn status(status: LpStatus) -> Self {
        LpOutcome {
            status,
            point: None,
            value: None,
        }
    }

    /// Point and value of an optimal outcome.
    pub fn into_optimal(self) -> Option<(Vec<f64>, f64)> {
        match (self.point, self.value) {
            (Some(p), Some(v)) => Some((p, v)),
            _ => None,
        }
    }
}

/// Largest inscribed ball of `{x | G x ≤ h}`.
///
/// Radius zero means the set is nonempty but has no interior.
pub fn chebyshev_center(sys: &LinearSystem) -> Result<(Vec<f64>, f64)> {
    match inscribed_ball(sys, true)? {
        Some(c) => Ok(c),
        None => Err(Error::EmptyPolytope),
    }
}

/// Signed inscribed-ball radius: negative values measure how far the
/// system is from having a feasible point (uniform shift of `h` needed).
pub fn signed_depth(sys: &LinearSystem) -> Result<(Vec<f64>, f64)> {
    inscribed_ball(sys, false)?
        .ok_or_else(|| Error::Consistency("free-radius ball LP infeasible".into()))
}

fn inscribed_ball(sys: &LinearSystem, nonnegative: bool) -> Result<Option<(Vec<f64>, f64)>> {
    let n = sys.dim();
    let mut g = Matrix::zeros(0, n + 1);
    let mut h = sys.h().to_vec();
    for row in sys.g().iter_rows() {
        let mut r = row.to_vec();
        r.push(norm(row));
        g.push_row(&r);
    }
    if nonnegative {
        let mut r = vec![0.0; n + 1];
        r[n] = -1.0;
        g.push_row(&r);
        h.push(0.0);
    }
    let lifted = LinearSystem::new(g, h)?;
    let mut obj = vec![0.0; n + 1];
    obj[n] = 1.0;
    let out = solve_lp(&obj, &lifted)?;
    match out.status {
        LpStatus::Optimal => {
            let mut p = out.point.expect("optimal outcome has a point");
            let r = p.pop().expect("radius coordinate");
            Ok(Some((p, r)))
        }
        LpStatus::Unbounded => Err(Error::UnboundedPolytope),
        LpStatus::Infeasible => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> LinearSystem {
        LinearSystem::from_rows(
            &[
                vec![1.0, 0.0],
                vec![-1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, -1.0],
            ],
            vec![1.0, 0.0, 1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn chebyshev_unit_box() {
        let (c, r) = chebyshev_center(&unit_box()).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        assert!((c[0] - 0.5).abs() < 1e-12 && (c[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn chebyshev_degenerate_slab() {
        let s = LinearSystem::from_rows(
            &[
                vec![1.0, 0.0],
                vec![-1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, -1.0],
            ],
            vec![0.0, 0.0, 1.0, 0.0],
        )
        .unwrap();
        let (c, r) = chebyshev_center(&s).unwrap();
        assert!(r.abs() < 1e-12);
        assert!(s.contains(&c, 1e-12));
    }

    #[test]
    fn chebyshev_empty() {
        let s = LinearSystem::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]], vec![-1.0, 0.0])
            .unwrap();
        assert!(matches!(chebyshev_center(&s), Err(Error::EmptyPolytope)));
        let (_, d) = signed_depth(&s).unwrap();
        assert!((d + 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_row_rejected() {
        let e = LinearSystem::from_rows(&[vec![0.0, 0.0]], vec![1.0]).unwrap_err();
        assert!(matches!(e, Error::ZeroRow { row: 0 }));
    }
}
