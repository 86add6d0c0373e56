//! The learned polytope `{u | A u ≤ b}` and the affine map between raw
//! coordinates `x` and the training coordinates `u = (x − offset) ∘ scale`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::regions::Region;
use crate::solver::{project_qp, signed_depth, solve_lp, LinearSystem, LpStatus};

/// Default activity tolerance on unit-norm rows.
pub const ACT_TOL: f64 = 1e-6;
/// Margin added on top of the violation when inflating `b`.
pub const REPAIR_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineNorm {
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
}

impl AffineNorm {
    pub fn identity(n: usize) -> Self {
        AffineNorm {
            scale: vec![1.0; n],
            offset: vec![0.0; n],
        }
    }

    /// Maps the box `[lo, hi]` into `[0, 1]^n` with one common scale, so
    /// that Euclidean projections commute with the map.
    pub fn isotropic(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let width = lo
            .iter()
            .zip(hi)
            .map(|(l, h)| h - l)
            .fold(0.0_f64, f64::max);
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::Invalid("normalization box has no extent".into()));
        }
        Ok(AffineNorm {
            scale: vec![1.0 / width; lo.len()],
            offset: lo.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn is_isotropic(&self) -> bool {
        self.scale.windows(2).all(|w| w[0] == w[1])
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.scale)
            .zip(&self.offset)
            .map(|((x, s), o)| (x - o) * s)
            .collect()
    }

    pub fn inverse(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.scale)
            .zip(&self.offset)
            .map(|((u, s), o)| u / s + o)
            .collect()
    }

    /// Raw-space direction whose ordering of points matches `v` in `u`.
    pub fn direction_to_raw(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.scale).map(|(v, s)| v * s).collect()
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.scale.len() != n || self.offset.len() != n {
            return Err(Error::Dimension("normalization map length".into()));
        }
        if self.scale.iter().any(|s| !(*s > 0.0 && s.is_finite()))
            || self.offset.iter().any(|o| !o.is_finite())
        {
            return Err(Error::Invalid("normalization scale must be positive and finite".into()));
        }
        Ok(())
    }
}

/// A region seen through an [`AffineNorm`].
pub struct Normalized<'a, R: ?Sized> {
    pub region: &'a R,
    pub norm: &'a AffineNorm,
}

impl<R: Region + ?Sized> Region for Normalized<'_, R> {
    fn dim(&self) -> usize {
        self.region.dim()
    }

    fn theta_dim(&self) -> usize {
        self.region.theta_dim()
    }

    fn support(&self, theta: &[f64], v: &[f64]) -> Result<(Vec<f64>, f64)> {
        let (p, _) = self.region.support(theta, &self.norm.direction_to_raw(v))?;
        let u = self.norm.forward(&p);
        let value = dot(v, &u);
        Ok((u, value))
    }

    fn project(&self, theta: &[f64], z0: &[f64]) -> Result<Vec<f64>> {
        let raw = self.region.project(theta, &self.norm.inverse(z0))?;
        Ok(self.norm.forward(&raw))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSet {
    pub indices: Vec<usize>,
    pub point: Vec<f64>,
}

/// `{u | A u ≤ b}` with unit-norm rows, stored in training coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    a: Matrix,
    b: Vec<f64>,
    norm: AffineNorm,
}

impl Polytope {
    /// Builds a polytope and normalizes its rows.
    pub fn new(a: Matrix, b: Vec<f64>, norm: AffineNorm) -> Result<Self> {
        if a.rows() != b.len() {
            return Err(Error::Dimension(format!(
                "A has {} rows, b has {} entries",
                a.rows(),
                b.len()
            )));
        }
        if a.cols() == 0 {
            return Err(Error::Dimension("polytope needs n ≥ 1".into()));
        }
        if !a.is_finite() || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("polytope entries must be finite".into()));
        }
        norm.validate(a.cols())?;
        let mut p = Polytope { a, b, norm };
        p.normalize_rows()?;
        Ok(p)
    }

    /// Takes rows that are already unit-normalized as they are, so that a
    /// stored polytope reloads bit for bit.
    pub fn from_unit_rows(a: Matrix, b: Vec<f64>, norm: AffineNorm) -> Result<Self> {
        let mut p = Polytope::new(a.clone(), b.clone(), norm)?;
        for i in 0..a.rows() {
            if (crate::linalg::norm(a.row(i)) - 1.0).abs() > 1e-9 {
                return Err(Error::Invalid(format!("row {i} is not unit-normalized")));
            }
        }
        p.a = a;
        p.b = b;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn norm(&self) -> &AffineNorm {
        &self.norm
    }

    /// Mutable access for optimizers; call [`Polytope::normalize_rows`]
    /// afterwards.
    pub fn parts_mut(&mut self) -> (&mut Matrix, &mut Vec<f64>) {
        (&mut self.a, &mut self.b)
    }

    pub fn normalize_rows(&mut self) -> Result<()> {
        for i in 0..self.a.rows() {
            let r = norm(self.a.row(i));
            if !(r >= 1e-12) {
                return Err(Error::ZeroRow { row: i });
            }
            self.a.row_mut(i).iter_mut().for_each(|v| *v /= r);
            self.b[i] /= r;
        }
        Ok(())
    }

    pub fn system(&self) -> LinearSystem {
        LinearSystem::new(self.a.clone(), self.b.clone()).expect("rows validated")
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        self.a
            .iter_rows()
            .zip(&self.b)
            .all(|(r, b)| dot(r, u) <= b + tol)
    }

    pub fn support_pt(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::Dimension("direction length".into()));
        }
        let out = solve_lp(v, &self.system())?;
        match out.status {
            LpStatus::Optimal => Ok(out.point.expect("optimal point")),
            LpStatus::Unbounded => Err(Error::UnboundedPolytope),
            LpStatus::Infeasible => Err(Error::EmptyPolytope),
        }
    }

    pub fn project_pt(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(Error::Dimension("point length".into()));
        }
        let all: Vec<usize> = (0..self.dim()).collect();
        project_qp(z, &self.system(), &all).map_err(|e| match e {
            Error::Infeasible => Error::EmptyPolytope,
            e => e,
        })
    }

    pub fn active_at(&self, x: &[f64], act_tol: f64) -> ActiveSet {
        let indices = self
            .a
            .iter_rows()
            .zip(&self.b)
            .enumerate()
            .filter(|(_, (r, b))| (dot(r, x) - *b).abs() <= act_tol)
            .map(|(i, _)| i)
            .collect();
        ActiveSet {
            indices,
            point: x.to_vec(),
        }
    }

    /// Inflates `b` uniformly when the polytope has become empty. Returns
    /// the amount added (zero when nothing was needed).
    pub fn ensure_nonempty(&mut self) -> Result<f64> {
        let depth = match signed_depth(&self.system()) {
            Ok((_, r)) => r,
            // an unbounded inscribed ball implies a nonempty set
            Err(Error::UnboundedPolytope) => return Ok(0.0),
            Err(e) => return Err(e),
        };
        if depth >= 0.0 {
            return Ok(0.0);
        }
        let bump = -depth + REPAIR_MARGIN;
        self.b.iter_mut().for_each(|b| *b += bump);
        Ok(bump)
    }

    /// Constraints in raw coordinates, rows unit-normalized.
    pub fn raw_system(&self) -> Result<LinearSystem> {
        let n = self.dim();
        let mut g = Matrix::zeros(0, n);
        let mut h = Vec::with_capacity(self.rows());
        for (row, &b) in self.a.iter_rows().zip(&self.b) {
            // a·S(x − o) ≤ b  ⇔  (a∘s)·x ≤ b + (a∘s)·o
            let r: Vec<f64> = row.iter().zip(&self.norm.scale).map(|(a, s)| a * s).collect();
            let rhs = b + dot(&r, &self.norm.offset);
            let k = norm(&r);
            g.push_row(&r.iter().map(|v| v / k).collect::<Vec<_>>());
            h.push(rhs / k);
        }
        LinearSystem::new(g, h)
    }

    /// Polytope from unit-normalized raw constraints.
    pub fn from_raw(sys: &LinearSystem, norm: AffineNorm) -> Result<Self> {
        norm.validate(sys.dim())?;
        let mut a = Matrix::zeros(0, sys.dim());
        let mut b = Vec::with_capacity(sys.len());
        for (row, &h) in sys.g().iter_rows().zip(sys.h()) {
            // g·x ≤ h with x = u/s + o  ⇔  (g/s)·u ≤ h − g·o
            let r: Vec<f64> = row.iter().zip(&norm.scale).map(|(g, s)| g / s).collect();
            a.push_row(&r);
            b.push(h - dot(row, &norm.offset));
        }
        Polytope::new(a, b, norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxp(hi: f64) -> Polytope {
        let a = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ])
        .unwrap();
        Polytope::new(a, vec![hi, 0.0, hi, 0.0], AffineNorm::identity(2)).unwrap()
    }

    #[test]
    fn normalize_rows_scales_b() {
        let a = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let p = Polytope::new(a, vec![10.0], AffineNorm::identity(2)).unwrap();
        assert_eq!(p.a().row(0), &[0.6, 0.8]);
        assert_eq!(p.b(), &[2.0]);
        let mut q = p.clone();
        q.normalize_rows().unwrap();
        assert!(q.a().row(0).iter().zip(p.a().row(0)).all(|(x, y)| (x - y).abs() <= 1e-15));
    }

    #[test]
    fn zero_row_is_named() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let e = Polytope::new(a, vec![1.0, 1.0], AffineNorm::identity(2)).unwrap_err();
        assert!(matches!(e, Error::ZeroRow { row: 1 }));
    }

    #[test]
    fn support_points() {
        assert_eq!(boxp(2.0).support_pt(&[1.0, 1.0]).unwrap(), vec![2.0, 2.0]);
        assert_eq!(boxp(2.0).support_pt(&[-1.0, 0.0]).unwrap()[0], 0.0);
        let tri = Polytope::new(
            Matrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]]).unwrap(),
            vec![0.0, 0.0, 1.0],
            AffineNorm::identity(2),
        )
        .unwrap();
        let p = tri.support_pt(&[2.0, 1.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1].abs() < 1e-12);
    }

    #[test]
    fn projections() {
        assert_eq!(boxp(1.0).project_pt(&[2.0, 2.0]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(boxp(1.0).project_pt(&[0.25, 0.5]).unwrap(), vec![0.25, 0.5]);
        let half = Polytope::new(
            Matrix::from_rows(&[
                vec![1.0, 0.0],
                vec![-1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, -1.0],
            ])
            .unwrap(),
            vec![0.0, 1.0, 1.0, 1.0],
            AffineNorm::identity(2),
        )
        .unwrap();
        let z = half.project_pt(&[1.0, 0.5]).unwrap();
        assert!(z[0].abs() < 1e-12 && (z[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn active_sets() {
        let p = boxp(1.0);
        assert_eq!(p.active_at(&[1.0, 1.0], ACT_TOL).indices, vec![0, 2]);
        assert!(p.active_at(&[0.5, 0.5], ACT_TOL).indices.is_empty());
        assert_eq!(p.active_at(&[1.0, 0.5], ACT_TOL).indices, vec![0]);
    }

    #[test]
    fn repair_inflates_empty_polytope() {
        let mut p = Polytope::new(
            Matrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap(),
            vec![-1.0, 0.0],
            AffineNorm::identity(1),
        )
        .unwrap();
        let bump = p.ensure_nonempty().unwrap();
        assert!((bump - 0.5 - REPAIR_MARGIN).abs() < 1e-12);
        assert!(p.support_pt(&[1.0]).is_ok());
        assert_eq!(boxp(1.0).ensure_nonempty().unwrap(), 0.0);
    }

    #[test]
    fn raw_round_trip() {
        let norm = AffineNorm::isotropic(&[-2.0, 1.0], &[2.0, 2.0]).unwrap();
        let p = Polytope::new(boxp(1.0).a().clone(), vec![0.5, 0.0, 0.25, 0.0], norm).unwrap();
        let raw = p.raw_system().unwrap();
        let q = Polytope::from_raw(&raw, p.norm().clone()).unwrap();
        for (x, y) in p.b().iter().zip(q.b()) {
            assert!((x - y).abs() < 1e-14);
        }
        // u = (0.5, 0.25) maps to x = (0, 2)
        assert!(raw.contains(&[0.0, 2.0], 1e-12));
        assert!(!raw.contains(&[0.1, 2.0], 1e-12));
    }
}
