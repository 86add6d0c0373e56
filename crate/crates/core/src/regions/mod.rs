//! Support and projection oracles for the region being approximated.
//!
//! Every region answers two queries, both possibly depending on a parameter
//! vector `theta`:
//!
//! * `support(v)`: a maximizer of `v·z` over the region, and its value;
//! * `project(z0)`: a nearest point of the region to `z0`.
//!
//! Regions are immutable once built and safe to share across threads.

mod lifted;
mod shapes;

pub use lifted::{LinearLifted, MinkowskiLinear};
pub use shapes::{Ball, DiskDifference, Ellipse, Hypercube, Polygon};

use std::borrow::Cow;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::solver::LinearSystem;

/// Directions with norm at or below this are rejected.
pub const DIR_EPS: f64 = 1e-12;

pub trait Region: Sync {
    fn dim(&self) -> usize;

    fn theta_dim(&self) -> usize {
        0
    }

    fn support(&self, theta: &[f64], v: &[f64]) -> Result<(Vec<f64>, f64)>;

    fn project(&self, theta: &[f64], z0: &[f64]) -> Result<Vec<f64>>;
}

/// Axis-aligned box of admissible parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ThetaBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension("theta box bounds differ in length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Invalid("theta box needs lower < upper".into()));
        }
        Ok(ThetaBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta.iter().zip(&self.lower).zip(&self.upper).all(|((t, l), u)| {
                let slack = 1e-12 * (1.0 + l.abs().max(u.abs()));
                *t >= l - slack && *t <= u + slack
            })
    }

    /// Affine map onto `[0, 1]` per coordinate.
    pub fn to_unit(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .map(|((t, l), u)| (t - l) / (u - l))
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l + (u - l) * rng.random::<f64>())
            .collect()
    }

    /// All `2^d` corners (`d` ≤ 16).
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim().min(16);
        (0..1usize << d)
            .map(|mask| {
                (0..self.dim())
                    .map(|k| {
                        if k < d && mask & (1 << k) != 0 {
                            self.upper[k]
                        } else {
                            self.lower[k]
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Affine dependence of a region on `theta`: a translation of `x` and a
/// gain on the kind's size parameters (see [`RegionKind::param_count`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Modulation {
    pub bounds: ThetaBox,
    /// `dim × theta_dim`
    pub shift: Option<Matrix>,
    /// `param_count × theta_dim`
    pub gain: Option<Matrix>,
}

impl Modulation {
    fn shift_at(&self, theta: &[f64]) -> Option<Vec<f64>> {
        self.shift.as_ref().map(|s| s.mul_vec(theta))
    }

    fn gain_at(&self, theta: &[f64], count: usize) -> Vec<f64> {
        match &self.gain {
            Some(g) => g.mul_vec(theta),
            None => vec![0.0; count],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegionKind {
    Hypercube(Hypercube),
    Hypersphere(Ball),
    Ellipse2d(Ellipse),
    Polygon2d(Polygon),
    DiskDifference(DiskDifference),
    LinearLifted(LinearLifted),
    MinkowskiLinear(MinkowskiLinear),
}

impl RegionKind {
    pub fn dim(&self) -> usize {
        match self {
            RegionKind::Hypercube(c) => c.lo.len(),
            RegionKind::Hypersphere(b) => b.center.len(),
            RegionKind::Ellipse2d(_) | RegionKind::Polygon2d(_) | RegionKind::DiskDifference(_) => 2,
            RegionKind::LinearLifted(l) => l.dim(),
            RegionKind::MinkowskiLinear(m) => m.dim(),
        }
    }

    /// Number of size parameters the `gain` matrix acts on:
    ///
    /// * hypercube: relative width, `hi(θ) = lo + (hi − lo)(1 + g·θ)`
    /// * hypersphere: radius
    /// * ellipse2d: semi-axis a, semi-axis b, angle
    /// * polygon2d: relative scale about the vertex centroid
    /// * disk_difference: cut radius, outer radius
    /// * linear_lifted: one per row of `G` (added to `h`)
    /// * minkowski_linear: not parameterizable
    pub fn param_count(&self) -> usize {
        match self {
            RegionKind::Hypercube(_) | RegionKind::Hypersphere(_) | RegionKind::Polygon2d(_) => 1,
            RegionKind::Ellipse2d(_) => 3,
            RegionKind::DiskDifference(_) => 2,
            RegionKind::LinearLifted(l) => l.sys.len(),
            RegionKind::MinkowskiLinear(_) => 0,
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, RegionKind::DiskDifference(_))
    }

    pub fn type_tag(&self) -> &'static str {
        match self {
            RegionKind::Hypercube(_) => "hypercube",
            RegionKind::Hypersphere(_) => "hypersphere",
            RegionKind::Ellipse2d(_) => "ellipse2d",
            RegionKind::Polygon2d(_) => "polygon2d",
            RegionKind::DiskDifference(_) => "disk_difference",
            RegionKind::LinearLifted(_) => "linear_lifted",
            RegionKind::MinkowskiLinear(_) => "minkowski_linear",
        }
    }

    fn shifted(&self, shift: &[f64]) -> RegionKind {
        let mut out = self.clone();
        let add = |c: &mut [f64]| c.iter_mut().zip(shift).for_each(|(a, b)| *a += b);
        match &mut out {
            RegionKind::Hypercube(c) => {
                add(&mut c.lo);
                add(&mut c.hi);
            }
            RegionKind::Hypersphere(b) => add(&mut b.center),
            RegionKind::Ellipse2d(e) => add(&mut e.center),
            RegionKind::Polygon2d(p) => p.vertices.iter_mut().for_each(|v| add(v)),
            RegionKind::DiskDifference(d) => {
                add(&mut d.outer_center);
                add(&mut d.cut_center);
            }
            RegionKind::LinearLifted(l) => {
                // x -> x + s shifts h by G_x s.
                let mut h = l.sys.h().to_vec();
                for (j, row) in l.sys.g().iter_rows().enumerate() {
                    h[j] += l.x_dims.iter().zip(shift).map(|(&k, s)| row[k] * s).sum::<f64>();
                }
                l.sys = LinearSystem::new(l.sys.g().clone(), h).expect("same shape");
            }
            RegionKind::MinkowskiLinear(_) => {}
        }
        out
    }

    fn with_gain(&self, d: &[f64]) -> Result<RegionKind> {
        let mut out = self.clone();
        let bad = |what: &str| Err(Error::Invalid(format!("{what} must stay positive over the theta box")));
        match &mut out {
            RegionKind::Hypercube(c) => {
                let s = 1.0 + d[0];
                if s <= 0.0 {
                    return bad("hypercube width");
                }
                for (lo, hi) in c.lo.iter().zip(c.hi.iter_mut()) {
                    *hi = lo + (*hi - lo) * s;
                }
            }
            RegionKind::Hypersphere(b) => {
                b.radius += d[0];
                if b.radius <= 0.0 {
                    return bad("radius");
                }
            }
            RegionKind::Ellipse2d(e) => {
                e.semi_axes[0] += d[0];
                e.semi_axes[1] += d[1];
                e.angle += d[2];
                if e.semi_axes.iter().any(|&a| a <= 0.0) {
                    return bad("semi-axes");
                }
            }
            RegionKind::Polygon2d(p) => {
                let s = 1.0 + d[0];
                if s <= 0.0 {
                    return bad("polygon scale");
                }
                let c = p.centroid();
                for v in p.vertices.iter_mut() {
                    v[0] = c[0] + s * (v[0] - c[0]);
                    v[1] = c[1] + s * (v[1] - c[1]);
                }
            }
            RegionKind::DiskDifference(dd) => {
                dd.cut_radius += d[0];
                dd.outer_radius += d[1];
                if dd.cut_radius <= 0.0 || dd.outer_radius <= 0.0 {
                    return bad("disk radii");
                }
            }
            RegionKind::LinearLifted(l) => {
                let h: Vec<f64> = l.sys.h().iter().zip(d).map(|(a, b)| a + b).collect();
                l.sys = LinearSystem::new(l.sys.g().clone(), h)?;
            }
            RegionKind::MinkowskiLinear(_) => {}
        }
        Ok(out)
    }

    fn support(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            RegionKind::Hypercube(c) => c.support(v),
            RegionKind::Hypersphere(b) => b.support(v),
            RegionKind::Ellipse2d(e) => e.support(v),
            RegionKind::Polygon2d(p) => p.support(v),
            RegionKind::DiskDifference(d) => d.support(v),
            RegionKind::LinearLifted(l) => l.support(v)?,
            RegionKind::MinkowskiLinear(m) => m.support(v)?,
        })
    }

    fn project(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(match self {
            RegionKind::Hypercube(c) => c.project(z),
            RegionKind::Hypersphere(b) => b.project(z),
            RegionKind::Ellipse2d(e) => e.project(z),
            RegionKind::Polygon2d(p) => p.project(z),
            RegionKind::DiskDifference(d) => d.project(z),
            RegionKind::LinearLifted(l) => l.project(z)?,
            RegionKind::MinkowskiLinear(m) => m.project(z)?,
        })
    }

    fn contains(&self, z: &[f64], tol: f64) -> Result<bool> {
        Ok(match self {
            RegionKind::Hypercube(c) => c.contains(z, tol),
            RegionKind::Hypersphere(b) => b.contains(z, tol),
            RegionKind::Ellipse2d(e) => e.contains(z, tol),
            RegionKind::Polygon2d(p) => p.contains(z, tol),
            RegionKind::DiskDifference(d) => d.contains(z, tol),
            RegionKind::LinearLifted(l) => l.contains(z, tol)?,
            RegionKind::MinkowskiLinear(m) => m.disaggregate(z, tol)?.is_some(),
        })
    }
}

/// A validated region, optionally parameterized by `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionOracle {
    kind: RegionKind,
    modulation: Option<Modulation>,
}

impl RegionOracle {
    /// Wraps a kind and checks it is bounded and nonempty.
    pub fn new(kind: RegionKind) -> Result<Self> {
        let r = RegionOracle {
            kind,
            modulation: None,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn with_modulation(kind: RegionKind, modulation: Modulation) -> Result<Self> {
        let td = modulation.bounds.dim();
        if let Some(s) = &modulation.shift {
            if s.rows() != kind.dim() || s.cols() != td {
                return Err(Error::Dimension(format!(
                    "shift must be {}x{td}",
                    kind.dim()
                )));
            }
        }
        if let Some(g) = &modulation.gain {
            if g.rows() != kind.param_count() || g.cols() != td {
                return Err(Error::Dimension(format!(
                    "gain must be {}x{td} for {}",
                    kind.param_count(),
                    kind.type_tag()
                )));
            }
        }
        if matches!(kind, RegionKind::MinkowskiLinear(_)) {
            return Err(Error::Invalid(
                "minkowski_linear does not accept theta".into(),
            ));
        }
        let r = RegionOracle {
            kind,
            modulation: Some(modulation),
        };
        r.validate()?;
        Ok(r)
    }

    pub fn hypercube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Invalid("hypercube needs lo < hi".into()));
        }
        RegionOracle::new(RegionKind::Hypercube(Hypercube {
            lo: vec![lo; n],
            hi: vec![hi; n],
        }))
    }

    pub fn hypersphere(n: usize, radius: f64) -> Result<Self> {
        RegionOracle::new(RegionKind::Hypersphere(Ball {
            center: vec![0.0; n],
            radius,
        }))
    }

    pub fn ellipse(center: [f64; 2], semi_axes: [f64; 2], angle: f64) -> Result<Self> {
        RegionOracle::new(RegionKind::Ellipse2d(Ellipse {
            center,
            semi_axes,
            angle,
        }))
    }

    pub fn polygon(vertices: Vec<[f64; 2]>) -> Result<Self> {
        RegionOracle::new(RegionKind::Polygon2d(Polygon { vertices }))
    }

    pub fn disk_difference(
        outer_center: [f64; 2],
        outer_radius: f64,
        cut_center: [f64; 2],
        cut_radius: f64,
    ) -> Result<Self> {
        RegionOracle::new(RegionKind::DiskDifference(DiskDifference {
            outer_center,
            outer_radius,
            cut_center,
            cut_radius,
        }))
    }

    pub fn linear_lifted(sys: LinearSystem, x_dims: Vec<usize>) -> Result<Self> {
        RegionOracle::new(RegionKind::LinearLifted(LinearLifted::new(sys, x_dims)?))
    }

    pub fn minkowski(resources: Vec<LinearSystem>) -> Result<Self> {
        RegionOracle::new(RegionKind::MinkowskiLinear(MinkowskiLinear::new(resources)?))
    }

    pub fn kind(&self) -> &RegionKind {
        &self.kind
    }

    pub fn modulation(&self) -> Option<&Modulation> {
        self.modulation.as_ref()
    }

    pub fn theta_box(&self) -> Option<&ThetaBox> {
        self.modulation.as_ref().map(|m| &m.bounds)
    }

    pub fn is_convex(&self) -> bool {
        self.kind.is_convex()
    }

    /// The concrete region at `theta`.
    pub fn at(&self, theta: &[f64]) -> Result<Cow<'_, RegionKind>> {
        match &self.modulation {
            None => {
                if !theta.is_empty() {
                    return Err(Error::Dimension(format!(
                        "region takes no theta, got {} entries",
                        theta.len()
                    )));
                }
                Ok(Cow::Borrowed(&self.kind))
            }
            Some(m) => {
                if !m.bounds.contains(theta) {
                    return Err(Error::Invalid(format!(
                        "theta {theta:?} outside the declared box"
                    )));
                }
                let mut k = self.kind.with_gain(&m.gain_at(theta, self.kind.param_count()))?;
                if let Some(s) = m.shift_at(theta) {
                    k = k.shifted(&s);
                }
                Ok(Cow::Owned(k))
            }
        }
    }

    pub fn contains(&self, theta: &[f64], z: &[f64], tol: f64) -> Result<bool> {
        self.at(theta)?.contains(z, tol)
    }

    /// Coordinate-wise bounding box at `theta`.
    pub fn bounds(&self, theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            hi[i] = self.support(theta, &e)?.1;
            e[i] = -1.0;
            lo[i] = -self.support(theta, &e)?.1;
        }
        Ok((lo, hi))
    }

    /// Bounding box over the whole theta box (corners and center).
    pub fn family_bounds(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let thetas = match self.theta_box() {
            None => vec![vec![]],
            Some(b) => {
                let mut t = b.corners();
                t.push(b.center());
                t
            }
        };
        let n = self.dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for t in &thetas {
            let (l, h) = self.bounds(t)?;
            for i in 0..n {
                lo[i] = lo[i].min(l[i]);
                hi[i] = hi[i].max(h[i]);
            }
        }
        Ok((lo, hi))
    }

    fn validate(&self) -> Result<()> {
        match &self.kind {
            RegionKind::Hypercube(c) => {
                if c.lo.is_empty() || c.lo.len() != c.hi.len() {
                    return Err(Error::Dimension("hypercube bounds".into()));
                }
                if c.lo.iter().zip(&c.hi).any(|(l, h)| !(l <= h)) {
                    return Err(Error::EmptyRegion);
                }
            }
            RegionKind::Hypersphere(b) => {
                if b.center.is_empty() || !(b.radius > 0.0) {
                    return Err(Error::Invalid("hypersphere needs n ≥ 1 and radius > 0".into()));
                }
            }
            RegionKind::Ellipse2d(e) => {
                if e.semi_axes.iter().any(|&a| !(a > 0.0)) {
                    return Err(Error::Invalid("ellipse semi-axes must be positive".into()));
                }
            }
            RegionKind::Polygon2d(p) => {
                if !p.is_strictly_convex_ccw() {
                    return Err(Error::Invalid(
                        "polygon vertices must be strictly convex in counter-clockwise order"
                            .into(),
                    ));
                }
            }
            RegionKind::DiskDifference(d) => {
                if !(d.outer_radius > 0.0 && d.cut_radius > 0.0) {
                    return Err(Error::Invalid("disk radii must be positive".into()));
                }
                let gap = (d.outer_center[0] - d.cut_center[0])
                    .hypot(d.outer_center[1] - d.cut_center[1]);
                if gap + d.outer_radius <= d.cut_radius {
                    return Err(Error::EmptyRegion);
                }
            }
            RegionKind::LinearLifted(_) | RegionKind::MinkowskiLinear(_) => {}
        }
        let thetas = match self.theta_box() {
            None => vec![vec![]],
            Some(b) => {
                let mut t = b.corners();
                t.push(b.center());
                t
            }
        };
        for t in &thetas {
            // Supporting ±e_i detects empty and unbounded lifted regions.
            self.bounds(t)?;
        }
        Ok(())
    }
}

impl Region for RegionOracle {
    fn dim(&self) -> usize {
        self.kind.dim()
    }

    fn theta_dim(&self) -> usize {
        self.theta_box().map_or(0, ThetaBox::dim)
    }

    fn support(&self, theta: &[f64], v: &[f64]) -> Result<(Vec<f64>, f64)> {
        check_dir(v, self.dim())?;
        let p = self.at(theta)?.support(v)?;
        let value = dot(v, &p);
        Ok((p, value))
    }

    fn project(&self, theta: &[f64], z0: &[f64]) -> Result<Vec<f64>> {
        if z0.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, region has {}",
                z0.len(),
                self.dim()
            )));
        }
        self.at(theta)?.project(z0)
    }
}

pub(crate) fn check_dir(v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Dimension(format!(
            "direction has {} coordinates, expected {n}",
            v.len()
        )));
    }
    if !(norm(v) > DIR_EPS) {
        return Err(Error::Invalid("direction norm below tolerance".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Serialized form

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSpec {
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Scalar(f64),
    PerAxis(Vec<f64>),
}

impl Bound {
    fn expand(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            Bound::Scalar(v) => Ok(vec![*v; n]),
            Bound::PerAxis(v) if v.len() == n => Ok(v.clone()),
            Bound::PerAxis(v) => Err(Error::Dimension(format!(
                "bound has {} entries, expected {n}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ShapeSpec {
    Hypercube {
        n: usize,
        lo: Bound,
        hi: Bound,
    },
    Hypersphere {
        n: usize,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    Ellipse2d {
        center: [f64; 2],
        semi_axes: [f64; 2],
        #[serde(default)]
        angle: f64,
    },
    Polygon2d {
        vertices: Vec<[f64; 2]>,
    },
    DiskDifference {
        outer_center: [f64; 2],
        outer_radius: f64,
        cut_center: [f64; 2],
        cut_radius: f64,
    },
    LinearLifted {
        #[serde(rename = "G")]
        g: Vec<Vec<f64>>,
        h: Vec<f64>,
        x_dims: Vec<usize>,
    },
    MinkowskiLinear {
        resources: Vec<ResourceSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub schema: u32,
    #[serde(flatten)]
    pub shape: ShapeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaSpec>,
}

/// Parses and validates a region document.
pub fn parse_region(text: &str) -> Result<RegionOracle> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    if let Some(tag) = value.get("type").and_then(|t| t.as_str()) {
        const KNOWN: [&str; 7] = [
            "hypercube",
            "hypersphere",
            "ellipse2d",
            "polygon2d",
            "disk_difference",
            "linear_lifted",
            "minkowski_linear",
        ];
        if !KNOWN.contains(&tag) {
            return Err(Error::Parse(format!("unknown region type '{tag}'")));
        }
    }
    let spec: RegionSpec = serde_json::from_value(value)?;
    RegionOracle::from_spec(&spec)
}

impl RegionOracle {
    pub fn from_spec(spec: &RegionSpec) -> Result<Self> {
        if spec.schema != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported schema version {}",
                spec.schema
            )));
        }
        let kind = match &spec.shape {
            ShapeSpec::Hypercube { n, lo, hi } => RegionKind::Hypercube(Hypercube {
                lo: lo.expand(*n)?,
                hi: hi.expand(*n)?,
            }),
            ShapeSpec::Hypersphere { n, radius, center } => {
                let center = center.clone().unwrap_or_else(|| vec![0.0; *n]);
                if center.len() != *n {
                    return Err(Error::Dimension("hypersphere center".into()));
                }
                RegionKind::Hypersphere(Ball {
                    center,
                    radius: *radius,
                })
            }
            ShapeSpec::Ellipse2d {
                center,
                semi_axes,
                angle,
            } => RegionKind::Ellipse2d(Ellipse {
                center: *center,
                semi_axes: *semi_axes,
                angle: *angle,
            }),
            ShapeSpec::Polygon2d { vertices } => {
                let mut p = Polygon {
                    vertices: vertices.clone(),
                };
                if p.signed_area2() < 0.0 {
                    p.vertices.reverse();
                }
                RegionKind::Polygon2d(p)
            }
            ShapeSpec::DiskDifference {
                outer_center,
                outer_radius,
                cut_center,
                cut_radius,
            } => RegionKind::DiskDifference(DiskDifference {
                outer_center: *outer_center,
                outer_radius: *outer_radius,
                cut_center: *cut_center,
                cut_radius: *cut_radius,
            }),
            ShapeSpec::LinearLifted { g, h, x_dims } => RegionKind::LinearLifted(
                LinearLifted::new(LinearSystem::from_rows(g, h.clone())?, x_dims.clone())?,
            ),
            ShapeSpec::MinkowskiLinear { resources } => {
                let systems = resources
                    .iter()
                    .map(|r| LinearSystem::from_rows(&r.g, r.h.clone()))
                    .collect::<Result<Vec<_>>>()?;
                RegionKind::MinkowskiLinear(MinkowskiLinear::new(systems)?)
            }
        };
        match &spec.theta {
            None => RegionOracle::new(kind),
            Some(t) => {
                let bounds = ThetaBox::new(t.lower.clone(), t.upper.clone())?;
                let shift = t.shift.as_ref().map(|s| Matrix::from_rows(s)).transpose()?;
                let gain = t.gain.as_ref().map(|g| Matrix::from_rows(g)).transpose()?;
                RegionOracle::with_modulation(
                    kind,
                    Modulation {
                        bounds,
                        shift,
                        gain,
                    },
                )
            }
        }
    }

    pub fn to_spec(&self) -> RegionSpec {
        let rows = |m: &Matrix| m.iter_rows().map(|r| r.to_vec()).collect::<Vec<_>>();
        let shape = match &self.kind {
            RegionKind::Hypercube(c) => ShapeSpec::Hypercube {
                n: c.lo.len(),
                lo: Bound::PerAxis(c.lo.clone()),
                hi: Bound::PerAxis(c.hi.clone()),
            },
            RegionKind::Hypersphere(b) => ShapeSpec::Hypersphere {
                n: b.center.len(),
                radius: b.radius,
                center: Some(b.center.clone()),
            },
            RegionKind::Ellipse2d(e) => ShapeSpec::Ellipse2d {
                center: e.center,
                semi_axes: e.semi_axes,
                angle: e.angle,
            },
            RegionKind::Polygon2d(p) => ShapeSpec::Polygon2d {
                vertices: p.vertices.clone(),
            },
            RegionKind::DiskDifference(d) => ShapeSpec::DiskDifference {
                outer_center: d.outer_center,
                outer_radius: d.outer_radius,
                cut_center: d.cut_center,
                cut_radius: d.cut_radius,
            },
            RegionKind::LinearLifted(l) => ShapeSpec::LinearLifted {
                g: rows(l.sys.g()),
                h: l.sys.h().to_vec(),
                x_dims: l.x_dims.clone(),
            },
            RegionKind::MinkowskiLinear(m) => ShapeSpec::MinkowskiLinear {
                resources: m
                    .resources
                    .iter()
                    .map(|r| ResourceSpec {
                        g: rows(r.g()),
                        h: r.h().to_vec(),
                    })
                    .collect(),
            },
        };
        let theta = self.modulation.as_ref().map(|m| ThetaSpec {
            lower: m.bounds.lower.clone(),
            upper: m.bounds.upper.clone(),
            shift: m.shift.as_ref().map(rows),
            gain: m.gain.as_ref().map(rows),
        });
        RegionSpec {
            schema: SCHEMA_VERSION,
            shape,
            theta,
        }
    }
}
