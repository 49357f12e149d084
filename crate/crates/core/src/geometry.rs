//! Arc-length parametrized planar reference curves.
//!
//! A [`Curve`] is a sampled polyline with per-node heading, curvature and
//! curvature rate. Positions and headings are interpolated with cubic Hermite
//! polynomials using the node's own derivatives (unit tangent for position,
//! curvature for heading); curvature and curvature rate are interpolated
//! linearly.
//!
//! Signed lateral offsets are positive to the left of the tangent direction.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Default search corridor for [`Curve::project_point`], meters.
pub const DEFAULT_CORRIDOR: f64 = 20.0;

const RANGE_EPS: f64 = 1e-9;
const ORTHOGONALITY_TOL: f64 = 1e-9;

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// One curve sample, serialized as `[s, x, y, theta, kappa, kappa_dot]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 6]", into = "[f64; 6]")]
pub struct CurveNode {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub kappa: f64,
    pub kappa_dot: f64,
}

impl CurveNode {
    pub fn new(s: f64, x: f64, y: f64, theta: f64, kappa: f64, kappa_dot: f64) -> Self {
        Self {
            s,
            x,
            y,
            theta,
            kappa,
            kappa_dot,
        }
    }
}

impl From<[f64; 6]> for CurveNode {
    fn from(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }
}

impl From<CurveNode> for [f64; 6] {
    fn from(n: CurveNode) -> Self {
        [n.s, n.x, n.y, n.theta, n.kappa, n.kappa_dot]
    }
}

/// Interpolated state of the curve at one arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveFrame {
    pub point: [f64; 2],
    /// Heading wrapped to `(-pi, pi]`.
    pub theta_r: f64,
    pub kappa_r: f64,
    pub kappa_dot_r: f64,
}

/// Foot point of an orthogonal projection onto a curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub s: f64,
    /// Signed lateral offset, positive to the left of the tangent.
    pub d: f64,
}

#[derive(Serialize, Deserialize)]
struct CurveRepr {
    nodes: Vec<CurveNode>,
}

/// Arc-length parametrized curve. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveRepr", into = "CurveRepr")]
pub struct Curve {
    s: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    /// Unwrapped heading.
    theta: Vec<f64>,
    kappa: Vec<f64>,
    kappa_dot: Vec<f64>,
}

impl TryFrom<CurveRepr> for Curve {
    type Error = Error;
    fn try_from(r: CurveRepr) -> Result<Self> {
        Curve::from_nodes(&r.nodes)
    }
}

impl From<Curve> for CurveRepr {
    fn from(c: Curve) -> Self {
        CurveRepr { nodes: c.nodes() }
    }
}

impl Curve {
    /// Builds a curve from nodes ordered by strictly increasing arc length.
    ///
    /// Headings are unwrapped on ingestion; adjacent nodes must then differ by
    /// less than `pi / 2`.
    pub fn from_nodes(nodes: &[CurveNode]) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidCurve(format!(
                "need at least 2 nodes, got {}",
                nodes.len()
            )));
        }
        for (i, n) in nodes.iter().enumerate() {
            let arr: [f64; 6] = (*n).into();
            if arr.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidCurve(format!("non-finite value at node {i}")));
            }
        }
        let n = nodes.len();
        let mut curve = Curve {
            s: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            theta: Vec::with_capacity(n),
            kappa: Vec::with_capacity(n),
            kappa_dot: Vec::with_capacity(n),
        };
        for (i, node) in nodes.iter().enumerate() {
            let theta = if i == 0 {
                node.theta
            } else {
                if node.s <= nodes[i - 1].s {
                    return Err(Error::InvalidCurve(format!(
                        "arc length not strictly increasing at node {i} ({} after {})",
                        node.s,
                        nodes[i - 1].s
                    )));
                }
                let prev = curve.theta[i - 1];
                let turns = ((prev - node.theta) / (2.0 * PI)).round();
                let unwrapped = if turns == 0.0 {
                    node.theta
                } else {
                    node.theta + turns * 2.0 * PI
                };
                if (unwrapped - prev).abs() >= PI / 2.0 {
                    return Err(Error::InvalidCurve(format!(
                        "heading jump of {} rad between nodes {} and {i}",
                        unwrapped - prev,
                        i - 1
                    )));
                }
                unwrapped
            };
            curve.s.push(node.s);
            curve.x.push(node.x);
            curve.y.push(node.y);
            curve.theta.push(theta);
            curve.kappa.push(node.kappa);
            curve.kappa_dot.push(node.kappa_dot);
        }
        Ok(curve)
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn s_min(&self) -> f64 {
        self.s[0]
    }

    pub fn s_max(&self) -> f64 {
        self.s[self.s.len() - 1]
    }

    pub fn arc_lengths(&self) -> &[f64] {
        &self.s
    }

    pub fn node(&self, i: usize) -> CurveNode {
        CurveNode::new(
            self.s[i],
            self.x[i],
            self.y[i],
            self.theta[i],
            self.kappa[i],
            self.kappa_dot[i],
        )
    }

    pub fn nodes(&self) -> Vec<CurveNode> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.s_min() - RANGE_EPS && s <= self.s_max() + RANGE_EPS
    }

    fn check_range(&self, s: f64) -> Result<f64> {
        if !s.is_finite() || !self.contains(s) {
            return Err(Error::OutOfRange {
                s,
                min: self.s_min(),
                max: self.s_max(),
            });
        }
        Ok(s.clamp(self.s_min(), self.s_max()))
    }

    /// Segment index `i` such that `s[i] <= s <= s[i+1]`.
    fn segment(&self, s: f64) -> usize {
        let i = self.s.partition_point(|&v| v <= s);
        i.saturating_sub(1).min(self.s.len() - 2)
    }

    /// Position and first/second derivative with respect to arc length.
    fn position_derivs(&self, s: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let i = self.segment(s);
        let h = self.s[i + 1] - self.s[i];
        let t = (s - self.s[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let d00 = 6.0 * t2 - 6.0 * t;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = -6.0 * t2 + 6.0 * t;
        let d11 = 3.0 * t2 - 2.0 * t;
        let dd00 = 12.0 * t - 6.0;
        let dd10 = 6.0 * t - 4.0;
        let dd01 = -12.0 * t + 6.0;
        let dd11 = 6.0 * t - 2.0;
        let (c0, s0) = (self.theta[i].cos(), self.theta[i].sin());
        let (c1, s1) = (self.theta[i + 1].cos(), self.theta[i + 1].sin());
        let (p0, p1) = ([self.x[i], self.y[i]], [self.x[i + 1], self.y[i + 1]]);
        let (m0, m1) = ([c0, s0], [c1, s1]);
        let mut p = [0.0; 2];
        let mut dp = [0.0; 2];
        let mut ddp = [0.0; 2];
        for k in 0..2 {
            p[k] = h00 * p0[k] + h10 * h * m0[k] + h01 * p1[k] + h11 * h * m1[k];
            dp[k] = (d00 * p0[k] + d10 * h * m0[k] + d01 * p1[k] + d11 * h * m1[k]) / h;
            ddp[k] = (dd00 * p0[k] + dd10 * h * m0[k] + dd01 * p1[k] + dd11 * h * m1[k]) / (h * h);
        }
        (p, dp, ddp)
    }

    fn heading_unwrapped(&self, s: f64) -> f64 {
        let i = self.segment(s);
        let h = self.s[i + 1] - self.s[i];
        let t = (s - self.s[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.theta[i]
            + (t3 - 2.0 * t2 + t) * h * self.kappa[i]
            + (-2.0 * t3 + 3.0 * t2) * self.theta[i + 1]
            + (t3 - t2) * h * self.kappa[i + 1]
    }

    fn linear(&self, values: &[f64], s: f64) -> f64 {
        let i = self.segment(s);
        let t = (s - self.s[i]) / (self.s[i + 1] - self.s[i]);
        values[i] + t * (values[i + 1] - values[i])
    }

    /// Interpolated frame at arc length `s`. Errors outside the curve range.
    pub fn sample_at(&self, s: f64) -> Result<CurveFrame> {
        let s = self.check_range(s)?;
        let (p, _, _) = self.position_derivs(s);
        Ok(CurveFrame {
            point: p,
            theta_r: wrap_angle(self.heading_unwrapped(s)),
            kappa_r: self.linear(&self.kappa, s),
            kappa_dot_r: self.linear(&self.kappa_dot, s),
        })
    }

    /// Heading at `s`, wrapped to `(-pi, pi]`.
    pub fn heading_at(&self, s: f64) -> Result<f64> {
        let s = self.check_range(s)?;
        Ok(wrap_angle(self.heading_unwrapped(s)))
    }

    pub fn point_at(&self, s: f64) -> Result<[f64; 2]> {
        let s = self.check_range(s)?;
        Ok(self.position_derivs(s).0)
    }

    /// Largest gap between each node position and the position obtained by
    /// integrating the interpolated heading from the first node.
    pub fn heading_consistency_error(&self) -> f64 {
        const SUB: usize = 16;
        let (mut x, mut y) = (self.x[0], self.y[0]);
        let mut worst: f64 = 0.0;
        for i in 0..self.len() - 1 {
            let h = (self.s[i + 1] - self.s[i]) / SUB as f64;
            for k in 0..SUB {
                // Simpson on each sub-interval
                let a = self.s[i] + k as f64 * h;
                let th = [
                    self.heading_unwrapped(a),
                    self.heading_unwrapped(a + 0.5 * h),
                    self.heading_unwrapped((a + h).min(self.s[i + 1])),
                ];
                x += h / 6.0 * (th[0].cos() + 4.0 * th[1].cos() + th[2].cos());
                y += h / 6.0 * (th[0].sin() + 4.0 * th[1].sin() + th[2].sin());
            }
            worst = worst.max((x - self.x[i + 1]).hypot(y - self.y[i + 1]));
        }
        worst
    }

    /// Orthogonal projection with the default 20 m corridor.
    pub fn project_point(&self, p: [f64; 2]) -> Result<Projection> {
        self.project_point_within(p, DEFAULT_CORRIDOR)
    }

    /// Orthogonal projection of `p` onto the curve.
    ///
    /// A coarse scan picks the nodes that are local distance minima; each is
    /// refined by safeguarded Newton iteration on the orthogonality condition
    /// over its two adjacent segments.
    pub fn project_point_within(&self, p: [f64; 2], corridor: f64) -> Result<Projection> {
        let no_projection = Error::NoProjection {
            x: p[0],
            y: p[1],
            corridor,
        };
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(no_projection);
        }
        let n = self.len();
        let dist2: Vec<f64> = (0..n)
            .map(|i| (self.x[i] - p[0]).powi(2) + (self.y[i] - p[1]).powi(2))
            .collect();
        let max_seg = self
            .s
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0_f64, f64::max);
        let reach = corridor + max_seg;

        let mut candidates: Vec<(f64, f64)> = Vec::new();
        for i in 0..n {
            let left = if i > 0 { dist2[i - 1] } else { f64::INFINITY };
            let right = if i + 1 < n { dist2[i + 1] } else { f64::INFINITY };
            if dist2[i] > left || dist2[i] > right || dist2[i].sqrt() > reach {
                continue;
            }
            let lo = self.s[i.saturating_sub(1)];
            let hi = self.s[(i + 1).min(n - 1)];
            let s_star = self.refine_projection(p, lo, hi);
            let (q, dq, _) = self.position_derivs(s_star);
            let (vx, vy) = (p[0] - q[0], p[1] - q[1]);
            let norm = dq[0].hypot(dq[1]);
            let along = (vx * dq[0] + vy * dq[1]) / norm;
            if along.abs() > ORTHOGONALITY_TOL * (1.0 + vx.hypot(vy)) {
                // foot point beyond the curve ends
                continue;
            }
            let dist = vx.hypot(vy);
            if candidates.iter().all(|&(s, _)| (s - s_star).abs() > 1e-6) {
                candidates.push((s_star, dist));
            }
        }

        let (best_idx, &(s_best, d_best)) = candidates
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .ok_or(no_projection.clone())?;
        if d_best > corridor {
            return Err(no_projection);
        }
        for (k, &(s_other, d_other)) in candidates.iter().enumerate() {
            if k != best_idx && (d_other - d_best).abs() <= 1e-9 * (1.0 + d_best) {
                return Err(Error::AmbiguousProjection {
                    x: p[0],
                    y: p[1],
                    s_a: s_best.min(s_other),
                    s_b: s_best.max(s_other),
                });
            }
        }
        let (q, dq, _) = self.position_derivs(s_best);
        let norm = dq[0].hypot(dq[1]);
        let cross = (dq[0] * (p[1] - q[1]) - dq[1] * (p[0] - q[0])) / norm;
        Ok(Projection { s: s_best, d: cross })
    }

    /// Minimizer of the squared distance to `p` over `[lo, hi]`.
    fn refine_projection(&self, p: [f64; 2], lo: f64, hi: f64) -> f64 {
        // f(s) = (r(s) - p) . r'(s); increasing through a distance minimum
        let f = |s: f64| -> (f64, f64) {
            let (q, dq, ddq) = self.position_derivs(s);
            let (ex, ey) = (q[0] - p[0], q[1] - p[1]);
            let val = ex * dq[0] + ey * dq[1];
            let der = dq[0] * dq[0] + dq[1] * dq[1] + ex * ddq[0] + ey * ddq[1];
            (val, der)
        };
        let (mut a, mut b) = (lo, hi);
        let (fa, _) = f(a);
        let (fb, _) = f(b);
        if fa >= 0.0 {
            return a;
        }
        if fb <= 0.0 {
            return b;
        }
        let mut s = 0.5 * (a + b);
        for _ in 0..100 {
            let (val, der) = f(s);
            if val.abs() < 1e-15 {
                break;
            }
            if val < 0.0 {
                a = s;
            } else {
                b = s;
            }
            let newton = if der > 0.0 { s - val / der } else { f64::NAN };
            let next = if newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
            if (next - s).abs() <= 1e-15 * (1.0 + s.abs()) {
                s = next;
                break;
            }
            s = next;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(len: f64) -> Curve {
        Curve::from_nodes(&[
            CurveNode::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            CurveNode::new(len, len, 0.0, 0.0, 0.0, 0.0),
        ])
        .unwrap()
    }

    /// Counter-clockwise circle centred at the origin, starting at (r, 0).
    fn circle(radius: f64, arc: f64, ds: f64) -> Curve {
        let n = (arc / ds).round() as usize;
        let nodes: Vec<CurveNode> = (0..=n)
            .map(|i| {
                let s = i as f64 * ds;
                let phi = s / radius;
                CurveNode::new(
                    s,
                    radius * phi.cos(),
                    radius * phi.sin(),
                    phi + PI / 2.0,
                    1.0 / radius,
                    0.0,
                )
            })
            .collect();
        Curve::from_nodes(&nodes).unwrap()
    }

    #[test]
    fn straight_segment_midpoint() {
        let c = straight(100.0);
        assert_eq!(c.sample_at(50.0).unwrap().theta_r, 0.0);
        let f = c.sample_at(10.0).unwrap();
        assert!((f.point[0] - 10.0).abs() < 1e-12 && f.point[1].abs() < 1e-12);
        assert_eq!(f.kappa_r, 0.0);
    }

    #[test]
    fn rejects_bad_nodes() {
        let bad = [
            CurveNode::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            CurveNode::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0),
        ];
        assert!(matches!(Curve::from_nodes(&bad), Err(Error::InvalidCurve(_))));
        assert!(Curve::from_nodes(&bad[..1]).is_err());
        let nan = [
            CurveNode::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            CurveNode::new(1.0, f64::NAN, 0.0, 0.0, 0.0, 0.0),
        ];
        assert!(Curve::from_nodes(&nan).is_err());
        let flip = [
            CurveNode::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            CurveNode::new(1.0, 1.0, 0.0, 2.0, 0.0, 0.0),
        ];
        assert!(Curve::from_nodes(&flip).is_err());
    }

    #[test]
    fn out_of_range_is_an_error() {
        let c = straight(100.0);
        assert!(matches!(c.sample_at(101.0), Err(Error::OutOfRange { .. })));
        assert!(c.sample_at(-1.0).is_err());
    }

    #[test]
    fn circle_curvature_and_heading() {
        let c = circle(50.0, 2.0 * PI * 50.0 * 0.9, 1.0);
        for k in 0..200 {
            let s = k as f64 * 1.37;
            assert!((c.sample_at(s).unwrap().kappa_r - 0.02).abs() < 1e-15);
        }
        // quarter turn from the start heading pi/2 lands on pi
        let f = c.sample_at(PI * 25.0).unwrap();
        assert!((wrap_angle(f.theta_r - PI / 2.0) - PI / 2.0).abs() < 1e-6);
        let f = c.sample_at(PI * 25.0).unwrap();
        assert!((f.point[0].hypot(f.point[1]) - 50.0).abs() < 1e-6);
    }

    #[test]
    fn heading_wrapped_into_half_open_interval() {
        let c = circle(50.0, 300.0, 1.0);
        for k in 0..300 {
            let th = c.sample_at(k as f64).unwrap().theta_r;
            assert!(th > -PI && th <= PI);
        }
    }

    #[test]
    fn straight_projection() {
        let c = straight(100.0);
        let pr = c.project_point([10.0, 0.3]).unwrap();
        assert!((pr.s - 10.0).abs() < 1e-12 && (pr.d - 0.3).abs() < 1e-12);
        let pr = c.project_point([10.0, 0.0]).unwrap();
        assert_eq!(pr.d, 0.0);
        let pr = c.project_point([42.0, -1.5]).unwrap();
        assert!((pr.s - 42.0).abs() < 1e-12 && (pr.d + 1.5).abs() < 1e-12);
    }

    #[test]
    fn circle_projection_inside_is_left() {
        // counter-clockwise circle: the centre lies to the left
        let c = circle(50.0, 200.0, 1.0);
        let phi: f64 = 1.234;
        let pr = c.project_point([49.0 * phi.cos(), 49.0 * phi.sin()]).unwrap();
        assert!((pr.d - 1.0).abs() < 1e-6);
        assert!((pr.s - 50.0 * phi).abs() < 1e-6);
        let pr = c.project_point([51.0 * phi.cos(), 51.0 * phi.sin()]).unwrap();
        assert!((pr.d + 1.0).abs() < 1e-6);
    }

    #[test]
    fn projection_outside_corridor_or_range() {
        let c = straight(100.0);
        assert!(matches!(
            c.project_point([50.0, 25.0]),
            Err(Error::NoProjection { .. })
        ));
        assert!(matches!(
            c.project_point([-5.0, 0.0]),
            Err(Error::NoProjection { .. })
        ));
        assert!(c.project_point_within([50.0, 25.0], 30.0).is_ok());
    }

    /// `y = -a cos(k x)` for `|x| <= half`, built mirror-symmetric about `x = 0`.
    fn cosine_valley(a: f64, k: f64, half: f64, dx: f64) -> Curve {
        let n = (half / dx).round() as usize;
        let slope = |x: f64| a * k * (k * x).sin();
        let mut arc = vec![0.0];
        for i in 1..=n {
            let (x0, x1) = ((i - 1) as f64 * dx, i as f64 * dx);
            let m = 0.5 * (x0 + x1);
            let speed = |x: f64| (1.0 + slope(x).powi(2)).sqrt();
            arc.push(arc[i - 1] + dx / 6.0 * (speed(x0) + 4.0 * speed(m) + speed(x1)));
        }
        let node = |i: usize, sign: f64| {
            let x = i as f64 * dx;
            let d1 = slope(x);
            let d2 = a * k * k * (k * x).cos();
            CurveNode::new(
                arc[n] + sign * arc[i],
                sign * x,
                -a * (k * x).cos(),
                (sign * d1).atan(),
                d2 / (1.0 + d1 * d1).powf(1.5),
                0.0,
            )
        };
        let mut nodes: Vec<CurveNode> = (1..=n).rev().map(|i| node(i, -1.0)).collect();
        nodes.extend((0..=n).map(|i| node(i, 1.0)));
        Curve::from_nodes(&nodes).unwrap()
    }

    #[test]
    fn symmetric_input_is_ambiguous() {
        // the two crests at x = +-20 are the nearest points to a query high above the valley
        let c = cosine_valley(5.0, PI / 20.0, 30.0, 0.5);
        let err = c.project_point_within([0.0, 30.0], 50.0).unwrap_err();
        assert!(matches!(err, Error::AmbiguousProjection { .. }), "{err}");
        assert!(c.project_point_within([0.5, 30.0], 50.0).is_ok());
    }

    #[test]
    fn projection_is_idempotent_on_grid() {
        let c = circle(80.0, 250.0, 1.0);
        for &s in c.arc_lengths() {
            let p = c.sample_at(s).unwrap().point;
            let pr = c.project_point(p).unwrap();
            assert!((pr.s - s).abs() < 1e-9, "s {s} -> {}", pr.s);
            assert!(pr.d.abs() < 1e-9);
        }
    }

    #[test]
    fn reflection_flips_sign() {
        let c = circle(40.0, 200.0, 1.0);
        for k in 1..20 {
            let s = k as f64 * 9.0;
            let f = c.sample_at(s).unwrap();
            let n = [-f.theta_r.sin(), f.theta_r.cos()];
            let off = 0.7;
            let left = [f.point[0] + off * n[0], f.point[1] + off * n[1]];
            let right = [f.point[0] - off * n[0], f.point[1] - off * n[1]];
            let pl = c.project_point(left).unwrap();
            let pr = c.project_point(right).unwrap();
            assert!((pl.d + pr.d).abs() < 1e-8);
            assert!((pl.s - pr.s).abs() < 1e-8 && (pl.s - s).abs() < 1e-6);
        }
    }

    #[test]
    fn sampling_is_continuous() {
        let c = circle(30.0, 100.0, 1.0);
        let eps = 1e-7;
        for k in 1..99 {
            for s in [k as f64, k as f64 + 0.5] {
                let a = c.sample_at(s).unwrap();
                let b = c.sample_at(s + eps).unwrap();
                let dp = (a.point[0] - b.point[0]).hypot(a.point[1] - b.point[1]);
                assert!(dp < 2.0 * eps);
                assert!((a.theta_r - b.theta_r).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn circle_nodes_are_heading_consistent() {
        let c = circle(50.0, 150.0, 1.0);
        assert!(c.heading_consistency_error() < 1e-6);
    }

    #[test]
    fn serde_round_trip() {
        let c = circle(50.0, 20.0, 1.0);
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.starts_with("{\"nodes\":[["));
        let back: Curve = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }
}
