//! Parameterized polytopes: two one-hidden-layer rectifier networks map a
//! normalized `theta` to the raw rows `A(theta)` and offsets `b(theta)`.
//! The emitted rows are unit-normalized before the loss, and the gradient
//! is carried back through that normalization exactly.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::metrics::{estimate_samples, ErrorEstimate};
use crate::polytope::{AffineNorm, Normalized, Polytope};
use crate::regions::{Region, ThetaBox};
use crate::trainer::{
    adam_step, batch_step, eval_stream, initial_polytope, AdamParams, AdamState, EvalRecord,
    Grads, IterRecord, Streak, TrainAbort, TrainConfig, TrainHistory,
};

pub const DEFAULT_HIDDEN: usize = 128;

/// Number of `theta` values each evaluation averages over.
const EVAL_THETAS: usize = 5;

/// `x -> w2 · relu(w1 · x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    /// `hidden × theta_dim`
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// `out × hidden`
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl Net {
    fn zeros(d: usize, h: usize, out: usize) -> Self {
        Net {
            w1: Matrix::zeros(h, d),
            b1: vec![0.0; h],
            w2: Matrix::zeros(out, h),
            b2: vec![0.0; out],
        }
    }

    fn len(&self) -> usize {
        self.w1.as_slice().len() + self.b1.len() + self.w2.as_slice().len() + self.b2.len()
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.w1.mul_vec(x);
        z.iter_mut().zip(&self.b1).for_each(|(z, b)| *z += b);
        z
    }

    fn output(&self, pre: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
        let mut y = self.w2.mul_vec(&h);
        y.iter_mut().zip(&self.b2).for_each(|(y, b)| *y += b);
        y
    }

    /// Weight gradients for output gradient `gy`, given the input and the
    /// hidden pre-activations of the forward pass.
    fn backward(&self, x: &[f64], pre: &[f64], gy: &[f64]) -> Net {
        let (hd, d, out) = (self.w1.rows(), self.w1.cols(), self.w2.rows());
        let mut g = Net::zeros(d, hd, out);
        let h: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
        for o in 0..out {
            let row = g.w2.row_mut(o);
            for k in 0..hd {
                row[k] = gy[o] * h[k];
            }
        }
        g.b2.copy_from_slice(gy);
        let gh = self.w2.tr_mul_vec(gy);
        for k in 0..hd {
            let gz = if pre[k] > 0.0 { gh[k] } else { 0.0 };
            g.b1[k] = gz;
            let row = g.w1.row_mut(k);
            for j in 0..d {
                row[j] = gz * x[j];
            }
        }
        g
    }

    fn flatten_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.w1.as_slice());
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(self.w2.as_slice());
        out.extend_from_slice(&self.b2);
    }

    fn load(&mut self, src: &[f64]) -> usize {
        let mut at = 0;
        for dst in [
            self.w1.as_mut_slice(),
            &mut self.b1[..],
            self.w2.as_mut_slice(),
            &mut self.b2[..],
        ] {
            dst.copy_from_slice(&src[at..at + dst.len()]);
            at += dst.len();
        }
        at
    }

    fn is_finite(&self) -> bool {
        self.w1.is_finite()
            && self.w2.is_finite()
            && self.b1.iter().chain(&self.b2).all(|v| v.is_finite())
    }
}

/// Gradients for both networks, shaped like the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub a_net: Net,
    pub b_net: Net,
}

impl MlpGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.a_net.len() + self.b_net.len());
        self.a_net.flatten_into(&mut out);
        self.b_net.flatten_into(&mut out);
        out
    }
}

/// What [`MlpParams::backward`] needs from the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    unit_theta: Vec<f64>,
    pre_a: Vec<f64>,
    pre_b: Vec<f64>,
    version: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub theta_dim: usize,
    pub hidden: usize,
    /// rows of the emitted polytope
    pub m: usize,
    pub n: usize,
    pub a_net: Net,
    pub b_net: Net,
    pub theta_box: ThetaBox,
    /// Map from raw `x` into the coordinates the polytope lives in.
    pub norm: AffineNorm,
    version: u64,
}

impl MlpParams {
    /// Networks whose output is `(a0, b0)` for every `theta`: output weights
    /// are zero, output biases hold the initial polytope, and the hidden
    /// layer is He-initialized from `rng`.
    pub fn constant(
        theta_box: ThetaBox,
        hidden: usize,
        a0: &Matrix,
        b0: &[f64],
        norm: AffineNorm,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let (m, n) = (a0.rows(), a0.cols());
        if b0.len() != m || hidden == 0 || theta_box.dim() == 0 || norm.dim() != n {
            return Err(Error::Dimension(format!(
                "network for {m}x{n} rows, {} offsets, hidden {hidden}, theta_dim {}",
                b0.len(),
                theta_box.dim()
            )));
        }
        let d = theta_box.dim();
        let sd = (2.0 / d as f64).sqrt();
        let mut a_net = Net::zeros(d, hidden, m * n);
        let mut b_net = Net::zeros(d, hidden, m);
        for net in [&mut a_net, &mut b_net] {
            for w in net.w1.as_mut_slice() {
                let g: f64 = StandardNormal.sample(rng);
                *w = sd * g;
            }
        }
        a_net.b2.copy_from_slice(a0.as_slice());
        b_net.b2.copy_from_slice(b0);
        Ok(MlpParams {
            theta_dim: d,
            hidden,
            m,
            n,
            a_net,
            b_net,
            theta_box,
            norm,
            version: 0,
        })
    }

    pub fn weight_count(&self) -> usize {
        self.a_net.len() + self.b_net.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.weight_count());
        self.a_net.flatten_into(&mut out);
        self.b_net.flatten_into(&mut out);
        out
    }

    /// Overwrites all weights; any outstanding forward cache becomes stale.
    pub fn load(&mut self, w: &[f64]) -> Result<()> {
        if w.len() != self.weight_count() {
            return Err(Error::Dimension(format!(
                "{} weights for a network with {}",
                w.len(),
                self.weight_count()
            )));
        }
        let at = self.a_net.load(w);
        self.b_net.load(&w[at..]);
        self.version += 1;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.a_net.is_finite() && self.b_net.is_finite()
    }

    /// Raw `(A, b)` at `theta`, rows not yet normalized.
    pub fn forward(&self, theta: &[f64]) -> Result<(Matrix, Vec<f64>, ForwardCache)> {
        if theta.len() != self.theta_dim {
            return Err(Error::Dimension(format!(
                "theta has {} entries, network expects {}",
                theta.len(),
                self.theta_dim
            )));
        }
        if !self.theta_box.contains(theta) {
            return Err(Error::Invalid(format!("theta {theta:?} outside the network's box")));
        }
        let unit_theta = self.theta_box.to_unit(theta);
        let pre_a = self.a_net.pre_activation(&unit_theta);
        let pre_b = self.b_net.pre_activation(&unit_theta);
        let a = Matrix::from_row_major(self.m, self.n, self.a_net.output(&pre_a))?;
        let b = self.b_net.output(&pre_b);
        Ok((
            a,
            b,
            ForwardCache {
                unit_theta,
                pre_a,
                pre_b,
                version: self.version,
            },
        ))
    }

    /// Weight gradients from gradients on the raw `(A, b)`.
    pub fn backward(&self, cache: &ForwardCache, grad_a: &Matrix, grad_b: &[f64]) -> Result<MlpGrads> {
        if cache.version != self.version {
            return Err(Error::Invalid("forward cache is stale".into()));
        }
        if grad_a.rows() != self.m || grad_a.cols() != self.n || grad_b.len() != self.m {
            return Err(Error::Dimension("gradient shapes do not match the network".into()));
        }
        Ok(MlpGrads {
            a_net: self.a_net.backward(&cache.unit_theta, &cache.pre_a, grad_a.as_slice()),
            b_net: self.b_net.backward(&cache.unit_theta, &cache.pre_b, grad_b),
        })
    }

    /// The emitted polytope at `theta`, inflated if it came out empty.
    pub fn polytope_at(&self, theta: &[f64]) -> Result<Polytope> {
        let (a, b, _) = self.forward(theta)?;
        let mut p = Polytope::new(a, b, self.norm.clone())?;
        p.ensure_nonempty()?;
        Ok(p)
    }

    pub fn to_doc(&self) -> MlpDoc {
        let doc = |n: &Net| NetDoc {
            w1: n.w1.as_slice().to_vec(),
            b1: n.b1.clone(),
            w2: n.w2.as_slice().to_vec(),
            b2: n.b2.clone(),
        };
        MlpDoc {
            theta_dim: self.theta_dim,
            hidden: self.hidden,
            a_net: doc(&self.a_net),
            b_net: doc(&self.b_net),
            theta_box: self.theta_box.clone(),
        }
    }

    pub fn from_doc(doc: &MlpDoc, m: usize, n: usize, norm: AffineNorm) -> Result<Self> {
        let (d, h) = (doc.theta_dim, doc.hidden);
        if doc.theta_box.dim() != d {
            return Err(Error::Dimension("theta box does not match theta_dim".into()));
        }
        ThetaBox::new(doc.theta_box.lower.clone(), doc.theta_box.upper.clone())?;
        let net = |nd: &NetDoc, out: usize| -> Result<Net> {
            if nd.b1.len() != h || nd.b2.len() != out {
                return Err(Error::Dimension("network bias lengths".into()));
            }
            Ok(Net {
                w1: Matrix::from_row_major(h, d, nd.w1.clone())?,
                b1: nd.b1.clone(),
                w2: Matrix::from_row_major(out, h, nd.w2.clone())?,
                b2: nd.b2.clone(),
            })
        };
        let p = MlpParams {
            theta_dim: d,
            hidden: h,
            m,
            n,
            a_net: net(&doc.a_net, m * n)?,
            b_net: net(&doc.b_net, m)?,
            theta_box: doc.theta_box.clone(),
            norm,
            version: 0,
        };
        if !p.is_finite() {
            return Err(Error::Invalid("network weights must be finite".into()));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetDoc {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpDoc {
    pub theta_dim: usize,
    pub hidden: usize,
    pub a_net: NetDoc,
    pub b_net: NetDoc,
    pub theta_box: ThetaBox,
}

/// Carries gradients on the normalized rows `(a/|a|, b/|a|)` back to the
/// raw `(a, b)`.
pub fn normalize_backward(
    a: &Matrix,
    b: &[f64],
    grad_ahat: &Matrix,
    grad_bhat: &[f64],
) -> Result<(Matrix, Vec<f64>)> {
    let mut ga = Matrix::zeros(a.rows(), a.cols());
    let mut gb = vec![0.0; b.len()];
    for i in 0..a.rows() {
        let row = a.row(i);
        let r = norm(row);
        if !(r >= 1e-12) {
            return Err(Error::ZeroRow { row: i });
        }
        let g = grad_ahat.row(i);
        let proj = dot(g, row) / r;
        let bhat = b[i] / r;
        // d(a/r)/da = (I − â âᵀ)/r and d(b/r)/da = −(b/r) â / r
        let coef = (proj + grad_bhat[i] * bhat) / r;
        for (k, out) in ga.row_mut(i).iter_mut().enumerate() {
            *out = (g[k] - coef * row[k]) / r;
        }
        gb[i] = grad_bhat[i] / r;
    }
    Ok((ga, gb))
}

/// Training-space map shared by every member of the family: the bounding
/// box over the corners and center of `bx`.
pub fn family_norm<R: Region + ?Sized>(region: &R, bx: &ThetaBox, normalize: bool) -> Result<AffineNorm> {
    let n = region.dim();
    if !normalize {
        return Ok(AffineNorm::identity(n));
    }
    let mut thetas = bx.corners();
    thetas.push(bx.center());
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for t in &thetas {
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            hi[i] = hi[i].max(region.support(t, &e)?.1);
            e[i] = -1.0;
            lo[i] = lo[i].min(-region.support(t, &e)?.1);
        }
    }
    AffineNorm::isotropic(&lo, &hi)
}

/// Errors of the emitted family averaged over `thetas`; maxima are taken
/// over every direction and every `theta`.
pub fn estimate_family<R: Region + ?Sized>(
    net: &MlpParams,
    region: &R,
    thetas: &[Vec<f64>],
    n_dirs: usize,
    seed: u64,
    exec: crate::exec::Execution,
) -> Result<ErrorEstimate> {
    let mut samples = Vec::with_capacity(thetas.len() * n_dirs);
    let view = Normalized {
        region,
        norm: &net.norm,
    };
    for (k, t) in thetas.iter().enumerate() {
        let p = net.polytope_at(t)?;
        samples.extend(estimate_samples(&p, &view, t, n_dirs, seed.wrapping_add(k as u64), exec)?);
    }
    Ok(ErrorEstimate::from_samples(&samples, seed))
}

pub fn fit_parameterized<R: Region + ?Sized>(
    region: &R,
    bx: &ThetaBox,
    config: &TrainConfig,
    hidden: usize,
) -> std::result::Result<(MlpParams, TrainHistory), TrainAbort<Option<MlpParams>>> {
    let mut history = TrainHistory::default();
    let abort = |error: Error, last: Option<MlpParams>, history: &TrainHistory| TrainAbort {
        error,
        last_good: last,
        history: history.clone(),
    };
    if let Err(e) = config.validate() {
        return Err(abort(e, None, &history));
    }
    if bx.dim() != region.theta_dim() {
        let e = Error::Dimension(format!(
            "theta box has {} entries, region takes {}",
            bx.dim(),
            region.theta_dim()
        ));
        return Err(abort(e, None, &history));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut eval_rng = eval_stream(config.seed);
    let center = bx.center();
    let setup = family_norm(region, bx, config.normalize).and_then(|norm| {
        let p0 = initial_polytope(region, &center, norm.clone(), config, &mut rng)?;
        MlpParams::constant(bx.clone(), hidden, p0.a(), p0.b(), norm, &mut rng)
    });
    let mut net = match setup {
        Ok(net) => net,
        Err(e) => return Err(abort(e, None, &history)),
    };
    let norm = net.norm.clone();
    let view = Normalized {
        region,
        norm: &norm,
    };
    let n = net.n;
    let exec = config.execution;
    let mut eval_thetas = vec![center.clone()];
    for _ in 1..EVAL_THETAS {
        eval_thetas.push(bx.sample(&mut eval_rng));
    }
    let evaluate = |net: &MlpParams, rng: &mut ChaCha8Rng| {
        estimate_family(net, region, &eval_thetas, config.eval_dirs, rng.next_u64(), exec)
    };
    match evaluate(&net, &mut eval_rng) {
        Ok(est) => history.evals.push(EvalRecord {
            iter: 0,
            lambda: config.phases[0].lambda,
            estimate: est,
        }),
        Err(e) => return Err(abort(e, Some(net), &history)),
    }

    let mut state = AdamState::new(net.weight_count());
    let mut iter = 0usize;
    let last_phase = config.phases.len() - 1;
    'phases: for (pi, phase) in config.phases.iter().enumerate() {
        let mut streak = Streak::default();
        for k in 0..phase.iters {
            iter += 1;
            let hp = AdamParams {
                lr: phase.lr_at(config.adam.lr, k),
                ..config.adam
            };
            let theta = bx.sample(&mut rng);
            let dirs = crate::metrics::sample_directions(n, config.batch, &mut rng);
            let step = (|| -> Result<(f64, f64, f64, MlpGrads, bool)> {
                let (a, b, cache) = net.forward(&theta)?;
                let mut p = Polytope::new(a.clone(), b.clone(), norm.clone())?;
                let repaired = p.ensure_nonempty()? > 0.0;
                let (s, _) = batch_step(&p, &view, &theta, &dirs, phase.lambda, config.act_tol, exec)?;
                let Grads { a: ga_hat, b: gb_hat } = s.grads;
                let (ga, gb) = normalize_backward(&a, &b, &ga_hat, &gb_hat)?;
                let g = net.backward(&cache, &ga, &gb)?;
                Ok((s.e_feas, s.e_opt, s.loss, g, repaired))
            })();
            let (e_feas, e_opt, loss, grads, repaired) = match step {
                Ok(s) => s,
                Err(e) => return Err(abort(e, Some(net), &history)),
            };
            let flat = grads.flatten();
            let grad_norm = dot(&flat, &flat).sqrt();
            if !loss.is_finite() || !grad_norm.is_finite() {
                return Err(abort(Error::NonFinite { iter }, Some(net), &history));
            }
            history.repairs += usize::from(repaired);
            history.iters.push(IterRecord {
                iter,
                lambda: phase.lambda,
                e_feas,
                e_opt,
                loss,
                grad_norm,
            });
            let mut w = net.flatten();
            if let Err(e) = adam_step(&mut w, &flat, &mut state, &hp) {
                return Err(abort(e, Some(net), &history));
            }
            let mut next = net.clone();
            if let Err(e) = next.load(&w) {
                return Err(abort(e, Some(net), &history));
            }
            net = next;

            if iter.is_multiple_of(config.eval_every) {
                let est = match evaluate(&net, &mut eval_rng) {
                    Ok(est) => est,
                    Err(e) => return Err(abort(e, Some(net), &history)),
                };
                streak.update(iter, est.weighted(phase.lambda) < config.tol);
                history.evals.push(EvalRecord {
                    iter,
                    lambda: phase.lambda,
                    estimate: est,
                });
                if let Some(start) = streak.done(config.patience) {
                    if pi == last_phase {
                        history.converged_at = Some(start);
                        break 'phases;
                    }
                    continue 'phases;
                }
            }
        }
    }
    if history.evals.last().map(|e| e.iter) != Some(iter) {
        let lambda = config.phases[last_phase].lambda;
        match evaluate(&net, &mut eval_rng) {
            Ok(est) => history.evals.push(EvalRecord {
                iter,
                lambda,
                estimate: est,
            }),
            Err(e) => return Err(abort(e, Some(net), &history)),
        }
    }
    Ok((net, history))
}
