//! Directional feasibility and optimality errors and their Monte-Carlo
//! expectations over standard-normal directions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{dist2, norm};
use crate::polytope::Polytope;
use crate::regions::{Region, DIR_EPS};

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalSample {
    pub v: Vec<f64>,
    /// support point of P along v
    pub x_prime: Vec<f64>,
    /// projection of `x_prime` onto the region
    pub z_star: Vec<f64>,
    /// support point of the region along v
    pub z_prime: Vec<f64>,
    /// projection of `z_prime` onto P
    pub x_star: Vec<f64>,
    pub e_feas: f64,
    pub e_opt: f64,
}

impl DirectionalSample {
    pub fn weighted(&self, lambda: f64) -> f64 {
        lambda * self.e_feas + (1.0 - lambda) * self.e_opt
    }
}

pub fn dir_errors<R: Region + ?Sized>(
    p: &Polytope,
    region: &R,
    theta: &[f64],
    v: &[f64],
) -> Result<DirectionalSample> {
    if v.len() != p.dim() || region.dim() != p.dim() {
        return Err(Error::Dimension(format!(
            "direction {}, polytope {}, region {}",
            v.len(),
            p.dim(),
            region.dim()
        )));
    }
    if !(norm(v) > DIR_EPS) {
        return Err(Error::Invalid("direction norm below tolerance".into()));
    }
    let x_prime = p.support_pt(v)?;
    let z_star = region.project(theta, &x_prime)?;
    let (z_prime, _) = region.support(theta, v)?;
    let x_star = p.project_pt(&z_prime)?;
    let e_feas = dist2(&z_star, &x_prime);
    let e_opt = dist2(&x_star, &z_prime);
    Ok(DirectionalSample {
        v: v.to_vec(),
        x_prime,
        z_star,
        z_prime,
        x_star,
        e_feas,
        e_opt,
    })
}

/// `count` i.i.d. standard-normal directions from a seeded stream,
/// redrawing any with norm at or below the rejection threshold.
pub fn sample_directions(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            if norm(&v) > DIR_EPS {
                break v;
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub mean_feas: f64,
    pub mean_opt: f64,
    pub max_feas: f64,
    pub max_opt: f64,
    pub n_dirs: usize,
    pub seed: u64,
}

impl ErrorEstimate {
    pub fn from_samples(samples: &[DirectionalSample], seed: u64) -> Self {
        let k = samples.len() as f64;
        let mut est = ErrorEstimate {
            mean_feas: 0.0,
            mean_opt: 0.0,
            max_feas: 0.0,
            max_opt: 0.0,
            n_dirs: samples.len(),
            seed,
        };
        for s in samples {
            est.mean_feas += s.e_feas;
            est.mean_opt += s.e_opt;
            est.max_feas = est.max_feas.max(s.e_feas);
            est.max_opt = est.max_opt.max(s.e_opt);
        }
        est.mean_feas /= k;
        est.mean_opt /= k;
        est
    }

    pub fn weighted(&self, lambda: f64) -> f64 {
        lambda * self.mean_feas + (1.0 - lambda) * self.mean_opt
    }

    pub fn total(&self) -> f64 {
        self.mean_feas + self.mean_opt
    }
}

/// Per-direction samples for a seeded evaluation, in draw order.
pub fn estimate_samples<R: Region + ?Sized>(
    p: &Polytope,
    region: &R,
    theta: &[f64],
    n_dirs: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<DirectionalSample>> {
    if n_dirs == 0 {
        return Err(Error::Invalid("n_dirs must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs = sample_directions(p.dim(), n_dirs, &mut rng);
    exec.map(&dirs, |v| dir_errors(p, region, theta, v))
        .into_iter()
        .collect()
}

pub fn estimate_errors<R: Region + ?Sized>(
    p: &Polytope,
    region: &R,
    theta: &[f64],
    n_dirs: usize,
    seed: u64,
    exec: Execution,
) -> Result<ErrorEstimate> {
    let samples = estimate_samples(p, region, theta, n_dirs, seed, exec)?;
    Ok(ErrorEstimate::from_samples(&samples, seed))
}

/// Mean and standard error of `f` over the samples.
pub fn mean_and_se<F: Fn(&DirectionalSample) -> f64>(samples: &[DirectionalSample], f: F) -> (f64, f64) {
    let k = samples.len() as f64;
    let vals: Vec<f64> = samples.iter().map(f).collect();
    let mean = vals.iter().sum::<f64>() / k;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::polytope::AffineNorm;
    use crate::regions::RegionOracle;

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
    fn nested_boxes() {
        let omega = RegionOracle::hypercube(2, 0.0, 1.0).unwrap();
        let s = dir_errors(&boxp(2.0), &omega, &[], &[1.0, 1.0]).unwrap();
        assert_eq!(s.x_prime, vec![2.0, 2.0]);
        assert_eq!(s.z_star, vec![1.0, 1.0]);
        assert_eq!(s.e_feas, 2.0);
        assert_eq!(s.e_opt, 0.0);

        let big = RegionOracle::hypercube(2, 0.0, 2.0).unwrap();
        let s = dir_errors(&boxp(1.0), &big, &[], &[1.0, 1.0]).unwrap();
        assert_eq!(s.e_feas, 0.0);
        assert_eq!(s.z_prime, vec![2.0, 2.0]);
        assert_eq!(s.x_star, vec![1.0, 1.0]);
        assert_eq!(s.e_opt, 2.0);

        let s = dir_errors(&boxp(1.0), &omega, &[], &[0.3, -0.8]).unwrap();
        assert_eq!((s.e_feas, s.e_opt), (0.0, 0.0));
    }

    #[test]
    fn seeded_estimates_are_reproducible() {
        let omega = RegionOracle::hypersphere(2, 1.0).unwrap();
        let p = boxp(1.0);
        let a = estimate_errors(&p, &omega, &[], 64, 5, Execution::Parallel).unwrap();
        let b = estimate_errors(&p, &omega, &[], 64, 5, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_dirs, 64);
    }

    #[test]
    fn zero_dirs_rejected() {
        let omega = RegionOracle::hypersphere(2, 1.0).unwrap();
        assert!(estimate_errors(&boxp(1.0), &omega, &[], 0, 1, Execution::Sequential).is_err());
    }
}
