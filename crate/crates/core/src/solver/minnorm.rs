//! Nearest point of a polytope described only by its support oracle.
//!
//! Wolfe's minimum-norm-point algorithm on the translated set `Ω − z0`:
//! the oracle supplies vertices on demand, the corral is kept affinely
//! independent, and the loop terminates once the Frank–Wolfe gap
//! `‖x‖² − min_q x·q` closes. Finite for polytopes.

use crate::error::{Error, Result};
use crate::linalg::{dot, dist2, lstsq, solve_square, Matrix};

#[derive(Debug, Clone, Copy)]
pub struct MinNormOptions {
    /// Gap tolerance relative to the squared diameter of the corral.
    pub rel_gap: f64,
    pub max_major: usize,
}

impl Default for MinNormOptions {
    fn default() -> Self {
        MinNormOptions {
            rel_gap: 1e-15,
            max_major: 5_000,
        }
    }
}

const WEIGHT_EPS: f64 = 1e-13;

/// `support(d)` must return a maximizer of `d·z` over the set.
pub fn nearest_point_via_support<F>(z0: &[f64], mut support: F, opts: &MinNormOptions) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = z0.len();
    let first_dir: Vec<f64> = if z0.iter().any(|&v| v != 0.0) {
        z0.to_vec()
    } else {
        let mut d = vec![0.0; n];
        d[0] = 1.0;
        d
    };
    let q0 = translate(&support(&first_dir)?, z0)?;
    let mut corral: Vec<Vec<f64>> = vec![q0];
    let mut weights = vec![1.0];
    let mut x = corral[0].clone();
    let mut scale = dot(&x, &x).max(1e-300);

    for _ in 0..opts.max_major {
        let xx = dot(&x, &x);
        if xx <= 1e-30 * scale {
            return Ok(z0.to_vec());
        }
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let q = translate(&support(&neg)?, z0)?;
        scale = scale.max(dot(&q, &q));
        let gap = xx - dot(&x, &q);
        if gap <= opts.rel_gap * scale || corral.iter().any(|c| dist2(c, &q) <= 1e-28 * scale) {
            break;
        }
        corral.push(q);
        weights.push(0.0);

        // Minor cycles: move to the affine minimizer, dropping points that
        // would get negative weight.
        loop {
            let alpha = affine_minimizer(&corral);
            if alpha.iter().all(|&a| a > WEIGHT_EPS) {
                weights = alpha;
                break;
            }
            let mut theta = 1.0_f64;
            for (w, a) in weights.iter().zip(&alpha) {
                if *a <= WEIGHT_EPS && w - a > 0.0 {
                    theta = theta.min(w / (w - a));
                }
            }
            for (w, a) in weights.iter_mut().zip(&alpha) {
                *w = theta * a + (1.0 - theta) * *w;
            }
            let mut k = 0;
            while k < corral.len() {
                if weights[k] <= WEIGHT_EPS && corral.len() > 1 {
                    corral.remove(k);
                    weights.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            if corral.len() == 1 {
                weights[0] = 1.0;
                break;
            }
        }
        let next = combine(&corral, &weights, n);
        // Norm must decrease strictly across a major cycle.
        if dot(&next, &next) >= xx {
            break;
        }
        x = next;
    }
    let z: Vec<f64> = x.iter().zip(z0).map(|(a, b)| a + b).collect();
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Convergence {
            gap: f64::NAN,
            iterations: opts.max_major,
        });
    }
    Ok(z)
}

fn translate(p: &[f64], z0: &[f64]) -> Result<Vec<f64>> {
    if p.len() != z0.len() {
        return Err(Error::Dimension(format!(
            "support oracle returned {} coordinates, expected {}",
            p.len(),
            z0.len()
        )));
    }
    Ok(p.iter().zip(z0).map(|(a, b)| a - b).collect())
}

fn combine(points: &[Vec<f64>], weights: &[f64], n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for (p, &w) in points.iter().zip(weights) {
        crate::linalg::axpy(w, p, &mut x);
    }
    x
}

/// Weights (summing to one) of the minimum-norm point of the affine hull.
fn affine_minimizer(points: &[Vec<f64>]) -> Vec<f64> {
    let k = points.len();
    // (QᵀQ + 11ᵀ) a = 1, then normalize.
    let mut gram = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let v = dot(&points[i], &points[j]) + 1.0;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let ones = vec![1.0; k];
    let a = solve_square(&gram, &ones)
        .or_else(|| lstsq(&gram, &ones))
        .unwrap_or_else(|| vec![1.0 / k as f64; k]);
    let total: f64 = a.iter().sum();
    a.iter().map(|v| v / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_support(lo: f64, hi: f64) -> impl FnMut(&[f64]) -> Result<Vec<f64>> {
        move |d: &[f64]| Ok(d.iter().map(|&v| if v > 0.0 { hi } else { lo }).collect())
    }

    #[test]
    fn projects_onto_box() {
        let z = nearest_point_via_support(&[2.0, 0.5, -1.0], box_support(0.0, 1.0), &Default::default())
            .unwrap();
        let expect = [1.0, 0.5, 0.0];
        for (a, b) in z.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{z:?}");
        }
    }

    #[test]
    fn interior_point_is_fixed() {
        let z = nearest_point_via_support(&[0.25, 0.75], box_support(0.0, 1.0), &Default::default())
            .unwrap();
        assert!((z[0] - 0.25).abs() < 1e-12 && (z[1] - 0.75).abs() < 1e-12, "{z:?}");
    }

    #[test]
    fn triangle_edge() {
        // conv{(0,0),(1,0),(0,1)}; nearest to (1,1) is (0.5,0.5)
        let verts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let sup = |d: &[f64]| {
            let mut best = verts[0];
            for v in verts {
                if d[0] * v[0] + d[1] * v[1] > d[0] * best[0] + d[1] * best[1] {
                    best = v;
                }
            }
            Ok(best.to_vec())
        };
        let z = nearest_point_via_support(&[1.0, 1.0], sup, &Default::default()).unwrap();
        assert!((z[0] - 0.5).abs() < 1e-12 && (z[1] - 0.5).abs() < 1e-12);
    }
}
