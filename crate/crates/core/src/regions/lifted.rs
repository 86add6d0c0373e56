//! Regions defined as projections of linear systems over `(x, y)`.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::solver::{
    nearest_point_via_support, solve_lp, LinearSystem, LpStatus, MinNormOptions,
};

/// `{x | ∃y: G (x, y) ≤ h}` where `x` is the sub-vector at `x_dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLifted {
    pub sys: LinearSystem,
    pub x_dims: Vec<usize>,
}

impl LinearLifted {
    pub fn new(sys: LinearSystem, x_dims: Vec<usize>) -> Result<Self> {
        let total = sys.dim();
        let mut seen = vec![false; total];
        for &k in &x_dims {
            if k >= total || seen[k] {
                return Err(Error::Invalid(format!(
                    "x_dims entry {k} is out of range or repeated"
                )));
            }
            seen[k] = true;
        }
        if x_dims.is_empty() {
            return Err(Error::Invalid("x_dims must be nonempty".into()));
        }
        Ok(LinearLifted { sys, x_dims })
    }

    pub fn dim(&self) -> usize {
        self.x_dims.len()
    }

    pub fn support(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut obj = vec![0.0; self.sys.dim()];
        for (&k, &vk) in self.x_dims.iter().zip(v) {
            obj[k] = vk;
        }
        let out = solve_lp(&obj, &self.sys)?;
        match out.status {
            LpStatus::Optimal => {
                let p = out.point.expect("optimal point");
                Ok(self.x_dims.iter().map(|&k| p[k]).collect())
            }
            LpStatus::Unbounded => Err(Error::UnboundedRegion),
            LpStatus::Infeasible => Err(Error::EmptyRegion),
        }
    }

    pub fn project(&self, z0: &[f64]) -> Result<Vec<f64>> {
        nearest_point_via_support(z0, |d| self.support(d), &MinNormOptions::default())
    }

    /// Feasibility of `x` as a lifted point, within `tol` per coordinate.
    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        Ok(lifted_gap(&self.sys, &self.x_dims, x)? <= tol)
    }
}

/// Minkowski sum of linear resource sets `Ω_i = {p | G_i p ≤ h_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinkowskiLinear {
    pub resources: Vec<LinearSystem>,
}

impl MinkowskiLinear {
    pub fn new(resources: Vec<LinearSystem>) -> Result<Self> {
        let Some(first) = resources.first() else {
            return Err(Error::Invalid("minkowski_linear needs at least one resource".into()));
        };
        let t = first.dim();
        if resources.iter().any(|r| r.dim() != t) {
            return Err(Error::Dimension(
                "all resources must share the same horizon".into(),
            ));
        }
        Ok(MinkowskiLinear { resources })
    }

    pub fn dim(&self) -> usize {
        self.resources[0].dim()
    }

    /// Support point of one resource.
    pub fn resource_support(&self, i: usize, v: &[f64]) -> Result<Vec<f64>> {
        let out = solve_lp(v, &self.resources[i])?;
        match out.status {
            LpStatus::Optimal => Ok(out.point.expect("optimal point")),
            LpStatus::Unbounded => Err(Error::UnboundedRegion),
            LpStatus::Infeasible => Err(Error::EmptyRegion),
        }
    }

    /// Sum of per-resource support points.
    pub fn support(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut total = vec![0.0; self.dim()];
        for i in 0..self.resources.len() {
            let p = self.resource_support(i, v)?;
            crate::linalg::axpy(1.0, &p, &mut total);
        }
        Ok(total)
    }

    pub fn project(&self, z0: &[f64]) -> Result<Vec<f64>> {
        nearest_point_via_support(z0, |d| self.support(d), &MinNormOptions::default())
    }

    /// Block-diagonal lifted form over `(P, p_1, …, p_N)` with coupling
    /// rows `P_t = Σ_i p_{i,t}`; `x` occupies the first `T` columns.
    pub fn lifted(&self) -> Result<LinearLifted> {
        let t = self.dim();
        let total = t * (self.resources.len() + 1);
        let mut g = Matrix::zeros(0, total);
        let mut h = Vec::new();
        for (i, r) in self.resources.iter().enumerate() {
            let off = t * (i + 1);
            for (row, &hj) in r.g().iter_rows().zip(r.h()) {
                let mut full = vec![0.0; total];
                full[off..off + t].copy_from_slice(row);
                g.push_row(&full);
                h.push(hj);
            }
        }
        for k in 0..t {
            for sign in [1.0, -1.0] {
                let mut full = vec![0.0; total];
                full[k] = sign;
                for i in 0..self.resources.len() {
                    full[t * (i + 1) + k] = -sign;
                }
                g.push_row(&full);
                h.push(0.0);
            }
        }
        LinearLifted::new(LinearSystem::new(g, h)?, (0..t).collect())
    }

    /// Per-resource trajectories summing to `x` within `tol`, if any.
    pub fn disaggregate(&self, x: &[f64], tol: f64) -> Result<Option<Vec<Vec<f64>>>> {
        let t = self.dim();
        let n_res = self.resources.len();
        // Variables (p_1..p_N, s): minimize s with |Σ p_i − x| ≤ s.
        let total = t * n_res + 1;
        let mut g = Matrix::zeros(0, total);
        let mut h = Vec::new();
        for (i, r) in self.resources.iter().enumerate() {
            for (row, &hj) in r.g().iter_rows().zip(r.h()) {
                let mut full = vec![0.0; total];
                full[t * i..t * (i + 1)].copy_from_slice(row);
                g.push_row(&full);
                h.push(hj);
            }
        }
        for k in 0..t {
            for sign in [1.0, -1.0] {
                let mut full = vec![0.0; total];
                for i in 0..n_res {
                    full[t * i + k] = sign;
                }
                full[total - 1] = -1.0;
                g.push_row(&full);
                h.push(sign * x[k]);
            }
        }
        let mut obj = vec![0.0; total];
        obj[total - 1] = -1.0;
        let out = solve_lp(&obj, &LinearSystem::new(g, h)?)?;
        let Some((p, _)) = out.into_optimal() else {
            return Err(Error::EmptyRegion);
        };
        if p[total - 1] > tol {
            return Ok(None);
        }
        Ok(Some(
            (0..n_res).map(|i| p[t * i..t * (i + 1)].to_vec()).collect(),
        ))
    }
}

/// Smallest uniform slack `s` such that `x` lifts into `G (x, y) ≤ h + s`.
fn lifted_gap(sys: &LinearSystem, x_dims: &[usize], x: &[f64]) -> Result<f64> {
    let total = sys.dim();
    let is_x: Vec<bool> = (0..total).map(|k| x_dims.contains(&k)).collect();
    let ydims: Vec<usize> = (0..total).filter(|&k| !is_x[k]).collect();
    let ny = ydims.len();
    let mut g = Matrix::zeros(0, ny + 1);
    let mut h = Vec::new();
    for (row, &hj) in sys.g().iter_rows().zip(sys.h()) {
        let fixed: f64 = x_dims.iter().zip(x).map(|(&k, &xk)| row[k] * xk).sum();
        let mut r: Vec<f64> = ydims.iter().map(|&k| row[k]).collect();
        r.push(-1.0);
        g.push_row(&r);
        h.push(hj - fixed);
    }
    let mut obj = vec![0.0; ny + 1];
    obj[ny] = -1.0;
    let out = solve_lp(&obj, &LinearSystem::new(g, h)?)?;
    let (p, _) = out
        .into_optimal()
        .ok_or_else(|| Error::Consistency("slack LP not optimal".into()))?;
    Ok(p[ny].max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resource(budget: f64) -> LinearSystem {
        LinearSystem::from_rows(
            &[
                vec![1.0, 0.0],
                vec![-1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, -1.0],
                vec![1.0, 1.0],
            ],
            vec![1.0, 0.0, 1.0, 0.0, budget],
        )
        .unwrap()
    }

    #[test]
    fn two_resource_hand_case() {
        let m = MinkowskiLinear::new(vec![resource(1.5), resource(1.5)]).unwrap();
        let p = m.support(&[1.0, 1.0]).unwrap();
        assert!((p[0] + p[1] - 3.0).abs() < 1e-12);
        // lifted LP gives the same value
        let l = m.lifted().unwrap();
        let q = l.support(&[1.0, 1.0]).unwrap();
        assert!((q[0] + q[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn disaggregation_feasibility() {
        let m = MinkowskiLinear::new(vec![resource(1.5), resource(1.5)]).unwrap();
        let parts = m.disaggregate(&[1.5, 1.5], 1e-9).unwrap().unwrap();
        let s0 = parts[0][0] + parts[1][0];
        assert!((s0 - 1.5).abs() < 1e-9);
        assert!(m.disaggregate(&[2.0, 2.0], 1e-9).unwrap().is_none());
    }

    #[test]
    fn lifted_projection() {
        let m = MinkowskiLinear::new(vec![resource(1.5), resource(1.5)]).unwrap();
        let z = m.project(&[3.0, 3.0]).unwrap();
        assert!((z[0] - 1.5).abs() < 1e-10 && (z[1] - 1.5).abs() < 1e-10, "{z:?}");
        let inside = m.project(&[0.5, 1.25]).unwrap();
        assert!((inside[0] - 0.5).abs() < 1e-12 && (inside[1] - 1.25).abs() < 1e-12);
    }

    #[test]
    fn empty_lifted_region() {
        let s = LinearSystem::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]], vec![-1.0, 0.0])
            .unwrap();
        let l = LinearLifted::new(s, vec![0, 1]).unwrap();
        assert!(matches!(l.support(&[1.0, 0.0]), Err(Error::EmptyRegion)));
    }
}
