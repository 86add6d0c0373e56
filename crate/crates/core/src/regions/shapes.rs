//! Closed-form support and projection oracles.

use crate::linalg::{dot, norm};

#[derive(Debug, Clone, PartialEq)]
pub struct Hypercube {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Hypercube {
    pub fn support(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(i, &vi)| if vi > 0.0 { self.hi[i] } else { self.lo[i] })
            .collect()
    }

    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, &zi)| zi.clamp(self.lo[i], self.hi[i]))
            .collect()
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        z.iter()
            .enumerate()
            .all(|(i, &zi)| zi >= self.lo[i] - tol && zi <= self.hi[i] + tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn support(&self, v: &[f64]) -> Vec<f64> {
        let s = self.radius / norm(v);
        self.center.iter().zip(v).map(|(c, vi)| c + s * vi).collect()
    }

    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = z.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let r = norm(&d);
        if r <= self.radius {
            return z.to_vec();
        }
        let s = self.radius / r;
        self.center.iter().zip(&d).map(|(c, di)| c + s * di).collect()
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        crate::linalg::dist2(z, &self.center).sqrt() <= self.radius + tol
    }
}

/// Filled ellipse `{c + R(angle) (a cos t·s, b sin t·s) | s ∈ [0,1]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    pub angle: f64,
}

impl Ellipse {
    fn to_local(&self, z: &[f64]) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        let dx = z[0] - self.center[0];
        let dy = z[1] - self.center[1];
        [c * dx + s * dy, -s * dx + c * dy]
    }

    fn to_global(&self, u: [f64; 2]) -> Vec<f64> {
        let (s, c) = self.angle.sin_cos();
        vec![
            self.center[0] + c * u[0] - s * u[1],
            self.center[1] + s * u[0] + c * u[1],
        ]
    }

    fn rotate_dir(&self, v: &[f64]) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        [c * v[0] + s * v[1], -s * v[0] + c * v[1]]
    }

    pub fn support(&self, v: &[f64]) -> Vec<f64> {
        let [a, b] = self.semi_axes;
        let w = self.rotate_dir(v);
        let denom = ((a * w[0]).powi(2) + (b * w[1]).powi(2)).sqrt();
        self.to_global([a * a * w[0] / denom, b * b * w[1] / denom])
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        let u = self.to_local(z);
        let [a, b] = self.semi_axes;
        let r = ((u[0] / a).powi(2) + (u[1] / b).powi(2)).sqrt();
        (r - 1.0) * a.min(b) <= tol
    }

    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        let u = self.to_local(z);
        let [a, b] = self.semi_axes;
        if (u[0] / a).powi(2) + (u[1] / b).powi(2) <= 1.0 {
            return z.to_vec();
        }
        // Nearest boundary point is (a² u1/(t+a²), b² u2/(t+b²)) with t > 0
        // the unique root of the decreasing function f below.
        let (a2, b2) = (a * a, b * b);
        let f = |t: f64| (a * u[0] / (t + a2)).powi(2) + (b * u[1] / (t + b2)).powi(2) - 1.0;
        let mut lo = 0.0_f64;
        let mut hi = a.max(b) * (u[0].hypot(u[1])) + 1.0;
        while f(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        self.to_global([a2 * u[0] / (t + a2), b2 * u[1] / (t + b2)])
    }
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn regular(k: usize, radius: f64, phase: f64) -> Polygon {
        let vertices = (0..k)
            .map(|i| {
                let t = phase + 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                [radius * t.cos(), radius * t.sin()]
            })
            .collect();
        Polygon { vertices }
    }

    pub fn support(&self, v: &[f64]) -> Vec<f64> {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, p) in self.vertices.iter().enumerate() {
            let val = v[0] * p[0] + v[1] * p[1];
            if val > best_val {
                best = i;
                best_val = val;
            }
        }
        self.vertices[best].to_vec()
    }

    fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let k = self.vertices.len();
        (0..k).map(move |i| (self.vertices[i], self.vertices[(i + 1) % k]))
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        self.edges().all(|(p, q)| {
            let e = [q[0] - p[0], q[1] - p[1]];
            let len = e[0].hypot(e[1]);
            let cross = e[0] * (z[1] - p[1]) - e[1] * (z[0] - p[0]);
            cross / len >= -tol
        })
    }

    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        if self.contains(z, 0.0) {
            return z.to_vec();
        }
        let mut best = z.to_vec();
        let mut best_d = f64::INFINITY;
        for (p, q) in self.edges() {
            let c = nearest_on_segment(z, p, q);
            let d = (c[0] - z[0]).powi(2) + (c[1] - z[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = c.to_vec();
            }
        }
        best
    }

    pub fn centroid(&self) -> [f64; 2] {
        let k = self.vertices.len() as f64;
        let sx: f64 = self.vertices.iter().map(|p| p[0]).sum();
        let sy: f64 = self.vertices.iter().map(|p| p[1]).sum();
        [sx / k, sy / k]
    }

    /// Twice the signed area.
    pub fn signed_area2(&self) -> f64 {
        self.edges().map(|(p, q)| p[0] * q[1] - q[0] * p[1]).sum()
    }

    pub fn is_strictly_convex_ccw(&self) -> bool {
        let k = self.vertices.len();
        k >= 3
            && (0..k).all(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % k];
                let c = self.vertices[(i + 2) % k];
                (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]) > 0.0
            })
    }
}

fn nearest_on_segment(z: &[f64], p: [f64; 2], q: [f64; 2]) -> [f64; 2] {
    let e = [q[0] - p[0], q[1] - p[1]];
    let t = ((z[0] - p[0]) * e[0] + (z[1] - p[1]) * e[1]) / (e[0] * e[0] + e[1] * e[1]);
    let t = t.clamp(0.0, 1.0);
    [p[0] + t * e[0], p[1] + t * e[1]]
}

/// Closed disk minus an open disk: `{‖z − c0‖ ≤ R} \ {‖z − c1‖ < r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskDifference {
    pub outer_center: [f64; 2],
    pub outer_radius: f64,
    pub cut_center: [f64; 2],
    pub cut_radius: f64,
}

impl DiskDifference {
    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        let d0 = (z[0] - self.outer_center[0]).hypot(z[1] - self.outer_center[1]);
        let d1 = (z[0] - self.cut_center[0]).hypot(z[1] - self.cut_center[1]);
        d0 <= self.outer_radius + tol && d1 >= self.cut_radius - tol
    }

    /// Points where the two circles cross, ordered by angle about the
    /// outer center.
    pub fn crossings(&self) -> Vec<[f64; 2]> {
        let [x0, y0] = self.outer_center;
        let [x1, y1] = self.cut_center;
        let (r0, r1) = (self.outer_radius, self.cut_radius);
        let d = (x1 - x0).hypot(y1 - y0);
        if d == 0.0 || d > r0 + r1 || d < (r0 - r1).abs() {
            return vec![];
        }
        let a = (r0 * r0 - r1 * r1 + d * d) / (2.0 * d);
        let h = (r0 * r0 - a * a).max(0.0).sqrt();
        let (ex, ey) = ((x1 - x0) / d, (y1 - y0) / d);
        let (mx, my) = (x0 + a * ex, y0 + a * ey);
        let mut pts = vec![[mx - h * ey, my + h * ex], [mx + h * ey, my - h * ex]];
        if h == 0.0 {
            pts.pop();
        }
        pts.sort_by(|p, q| {
            let tp = (p[1] - y0).atan2(p[0] - x0);
            let tq = (q[1] - y0).atan2(q[0] - x0);
            tp.total_cmp(&tq)
        });
        pts
    }

    fn outside_cut(&self, p: &[f64]) -> bool {
        (p[0] - self.cut_center[0]).hypot(p[1] - self.cut_center[1]) >= self.cut_radius
    }

    fn inside_outer(&self, p: &[f64]) -> bool {
        (p[0] - self.outer_center[0]).hypot(p[1] - self.outer_center[1]) <= self.outer_radius
    }

    pub fn support(&self, v: &[f64]) -> Vec<f64> {
        let nv = v[0].hypot(v[1]);
        let top = [
            self.outer_center[0] + self.outer_radius * v[0] / nv,
            self.outer_center[1] + self.outer_radius * v[1] / nv,
        ];
        if self.outside_cut(&top) {
            return top.to_vec();
        }
        // The maximizer over the remaining outer arc sits at an end of it.
        let mut best: Option<[f64; 2]> = None;
        for p in self.crossings() {
            if best.is_none_or(|b| dot(v, &p) > dot(v, &b)) {
                best = Some(p);
            }
        }
        best.unwrap_or(top).to_vec()
    }

    pub fn project(&self, z: &[f64]) -> Vec<f64> {
        if self.contains(z, 0.0) {
            return z.to_vec();
        }
        let mut cands: Vec<[f64; 2]> = Vec::new();
        let radial = |c: [f64; 2], r: f64| {
            let (dx, dy) = (z[0] - c[0], z[1] - c[1]);
            let d = dx.hypot(dy);
            if d == 0.0 {
                [c[0] - r, c[1]]
            } else {
                [c[0] + r * dx / d, c[1] + r * dy / d]
            }
        };
        let on_outer = radial(self.outer_center, self.outer_radius);
        if self.outside_cut(&on_outer) {
            cands.push(on_outer);
        }
        let on_cut = radial(self.cut_center, self.cut_radius);
        if self.inside_outer(&on_cut) {
            cands.push(on_cut);
        }
        cands.extend(self.crossings());
        let mut best = cands[0];
        let mut best_d = f64::INFINITY;
        for c in cands {
            let d = (c[0] - z[0]).powi(2) + (c[1] - z[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_support_sign_pattern() {
        let c = Hypercube {
            lo: vec![0.0; 2],
            hi: vec![1.0; 2],
        };
        assert_eq!(c.support(&[1.0, -1.0]), vec![1.0, 0.0]);
        assert_eq!(c.project(&[0.3, 0.7]), vec![0.3, 0.7]);
        assert_eq!(c.project(&[2.0, -3.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn ball_support_and_projection() {
        let b = Ball {
            center: vec![0.0; 4],
            radius: 1.0,
        };
        let p = b.support(&[3.0, 0.0, 4.0, 0.0]);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[2] - 0.8).abs() < 1e-15);
        assert_eq!(b.project(&[2.0, 0.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn ellipse_support_matches_parametric_max() {
        let e = Ellipse {
            center: [0.2, -0.1],
            semi_axes: [1.0, 0.5],
            angle: 0.3,
        };
        let v = [0.4, -0.9];
        let p = e.support(&v);
        let mut best = f64::NEG_INFINITY;
        for k in 0..200_000 {
            let t = 2.0 * std::f64::consts::PI * k as f64 / 200_000.0;
            let q = e.to_global([t.cos(), 0.5 * t.sin()]);
            best = best.max(dot(&v, &q));
        }
        assert!((dot(&v, &p) - best).abs() < 1e-9);
    }

    #[test]
    fn ellipse_projection_is_boundary_normal() {
        let e = Ellipse {
            center: [0.0, 0.0],
            semi_axes: [1.0, 0.5],
            angle: 0.0,
        };
        let z = [1.5, 1.0];
        let p = e.project(&z);
        // on boundary
        assert!(((p[0]).powi(2) + (p[1] / 0.5).powi(2) - 1.0).abs() < 1e-12);
        // residual parallel to the gradient of the implicit function
        let g = [2.0 * p[0], 8.0 * p[1]];
        let r = [z[0] - p[0], z[1] - p[1]];
        assert!((g[0] * r[1] - g[1] * r[0]).abs() < 1e-12);
    }

    #[test]
    fn polygon_projection_and_support() {
        let sq = Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        };
        assert!(sq.is_strictly_convex_ccw());
        assert_eq!(sq.project(&[2.0, 0.5]), vec![1.0, 0.5]);
        assert_eq!(sq.project(&[0.5, 0.5]), vec![0.5, 0.5]);
        assert_eq!(sq.support(&[1.0, 1.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn disk_difference_crossings() {
        let d = DiskDifference {
            outer_center: [0.0, 0.0],
            outer_radius: 1.0,
            cut_center: [1.0, 0.0],
            cut_radius: 0.5,
        };
        let c = d.crossings();
        assert_eq!(c.len(), 2);
        assert!((c[0][0] - 0.875).abs() < 1e-15);
        assert!((c[1][1] - (1.0f64 - 0.875 * 0.875).sqrt()).abs() < 1e-15);
        // support along +x hits the crossings, not the cut interior
        let s = d.support(&[1.0, 0.0]);
        assert!((s[0] - 0.875).abs() < 1e-15);
        assert!(d.project(&[0.8, 0.0]) == vec![0.5, 0.0]);
    }
}
