use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::metrics::DirectionalSample;
use crate::polytope::Polytope;

/// Gradients with the shapes of `A` and `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub a: Matrix,
    pub b: Vec<f64>,
}

impl Grads {
    pub fn zeros(m: usize, n: usize) -> Self {
        Grads {
            a: Matrix::zeros(m, n),
            b: vec![0.0; m],
        }
    }

    pub fn add_scaled(&mut self, other: &Grads, s: f64) {
        crate::linalg::axpy(s, other.a.as_slice(), self.a.as_mut_slice());
        crate::linalg::axpy(s, &other.b, &mut self.b);
    }

    pub fn norm(&self) -> f64 {
        (dot(self.a.as_slice(), self.a.as_slice()) + dot(&self.b, &self.b)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.iter().all(|v| v.is_finite())
    }

    /// `A` entries followed by `b`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.a.as_slice().to_vec();
        out.extend_from_slice(&self.b);
        out
    }
}

/// Rows active at the two reference points of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveRows {
    /// active at `x_prime`
    pub j: Vec<usize>,
    /// active at `x_star`
    pub k: Vec<usize>,
}

pub fn active_rows(p: &Polytope, s: &DirectionalSample, act_tol: f64) -> Result<ActiveRows> {
    let j = p.active_at(&s.x_prime, act_tol).indices;
    if j.is_empty() && s.e_feas > 0.0 {
        return Err(Error::Consistency(
            "support point of the polytope touches no hyperplane".into(),
        ));
    }
    let k = p.active_at(&s.x_star, act_tol).indices;
    Ok(ActiveRows { j, k })
}

/// Loss and gradients with the active rows and the points `z_star`,
/// `z_prime` held fixed.
pub fn loss_with_rows(
    a: &Matrix,
    b: &[f64],
    rows: &ActiveRows,
    z_star: &[f64],
    z_prime: &[f64],
    lambda: f64,
) -> (f64, Grads) {
    let mut g = Grads::zeros(a.rows(), a.cols());
    let mut loss = 0.0;
    for (idx, z, w) in [(&rows.j, z_star, lambda), (&rows.k, z_prime, 1.0 - lambda)] {
        if w == 0.0 {
            continue;
        }
        for &i in idx {
            let r = dot(a.row(i), z) - b[i];
            loss += w * r * r;
            crate::linalg::axpy(2.0 * w * r, z, g.a.row_mut(i));
            g.b[i] -= 2.0 * w * r;
        }
    }
    (loss, g)
}

pub fn loss_and_grads(
    p: &Polytope,
    s: &DirectionalSample,
    lambda: f64,
    act_tol: f64,
) -> Result<(f64, Grads)> {
    let rows = active_rows(p, s, act_tol)?;
    Ok(loss_with_rows(p.a(), p.b(), &rows, &s.z_star, &s.z_prime, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row_plug_in() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let rows = ActiveRows {
            j: vec![0],
            k: vec![],
        };
        let (loss, g) = loss_with_rows(&a, &[2.0], &rows, &[1.0, 1.0], &[0.0, 0.0], 1.0);
        assert_eq!(loss, 1.0);
        assert_eq!(g.a.row(0), &[-2.0, -2.0]);
        assert_eq!(g.b, vec![2.0]);
    }

    #[test]
    fn on_hyperplane_is_zero() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let rows = ActiveRows {
            j: vec![0],
            k: vec![0],
        };
        let (loss, g) = loss_with_rows(&a, &[1.0], &rows, &[1.0, 3.0], &[1.0, -2.0], 0.5);
        assert_eq!(loss, 0.0);
        assert!(g.norm() == 0.0);
    }

    #[test]
    fn shared_row_accumulates() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let only_j = ActiveRows { j: vec![0], k: vec![] };
        let only_k = ActiveRows { j: vec![], k: vec![0] };
        let both = ActiveRows { j: vec![0], k: vec![0] };
        let zs = [0.5, 0.0];
        let zp = [1.5, 1.0];
        let (l1, g1) = loss_with_rows(&a, &[1.0], &only_j, &zs, &zp, 0.3);
        let (l2, g2) = loss_with_rows(&a, &[1.0], &only_k, &zs, &zp, 0.3);
        let (l3, g3) = loss_with_rows(&a, &[1.0], &both, &zs, &zp, 0.3);
        assert!((l1 + l2 - l3).abs() < 1e-15);
        let mut sum = g1.clone();
        sum.add_scaled(&g2, 1.0);
        assert_eq!(sum, g3);
    }
}
