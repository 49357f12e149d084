//! Linearized, discretized lateral kinematics relative to a reference curve.
//!
//! State `[d, theta, kappa, kappa_dot]`, input the second time derivative of
//! the driven curvature, disturbance the reference heading at the current
//! arc position. Velocity is held constant over one step.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lateral state relative to a reference curve.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct LateralState {
    /// Lateral offset, m (positive left).
    pub d: f64,
    /// Vehicle heading, rad.
    pub theta: f64,
    /// Driven curvature, 1/m.
    pub kappa: f64,
    /// Curvature rate, 1/(m s).
    pub kappa_dot: f64,
}

impl LateralState {
    pub const fn new(d: f64, theta: f64, kappa: f64, kappa_dot: f64) -> Self {
        Self {
            d,
            theta,
            kappa,
            kappa_dot,
        }
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.d, self.theta, self.kappa, self.kappa_dot)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.d, self.theta, self.kappa, self.kappa_dot]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl From<[f64; 4]> for LateralState {
    fn from(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

impl From<LateralState> for [f64; 4] {
    fn from(s: LateralState) -> Self {
        s.to_array()
    }
}

/// `x+ = A x + B u + E z` for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemMatrices {
    pub a: Matrix4<f64>,
    pub b: Vector4<f64>,
    pub e: Vector4<f64>,
}

impl SystemMatrices {
    /// Closed-form matrices at velocity `v` (m/s) and sample time `ts` (s).
    pub fn new(v: f64, ts: f64) -> Result<Self> {
        if !(ts > 0.0) || !ts.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sample time must be positive, got {ts}"
            )));
        }
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "velocity must be nonnegative, got {v}"
            )));
        }
        Ok(Self::unchecked(v, ts))
    }

    pub(crate) fn unchecked(v: f64, ts: f64) -> Self {
        let (ts2, ts3, ts4) = (ts * ts, ts * ts * ts, ts * ts * ts * ts);
        let v2 = v * v;
        #[rustfmt::skip]
        let a = Matrix4::new(
            1.0, v * ts, 0.5 * v2 * ts2, v2 * ts3 / 6.0,
            0.0, 1.0,    v * ts,         0.5 * v * ts2,
            0.0, 0.0,    1.0,            ts,
            0.0, 0.0,    0.0,            1.0,
        );
        let b = Vector4::new(v2 * ts4 / 24.0, v * ts3 / 6.0, 0.5 * ts2, ts);
        let e = Vector4::new(-v * ts, 0.0, 0.0, 0.0);
        Self { a, b, e }
    }

    #[inline]
    pub fn propagate(&self, x: &Vector4<f64>, u: f64, z: f64) -> Vector4<f64> {
        self.a * x + self.b * u + self.e * z
    }
}

/// Shorthand for [`SystemMatrices::new`].
pub fn system_matrices(v: f64, ts: f64) -> Result<SystemMatrices> {
    SystemMatrices::new(v, ts)
}

/// One step of the lateral kinematics.
pub fn step(x: &LateralState, u: f64, z: f64, v: f64, ts: f64) -> Result<LateralState> {
    if !x.is_finite() || !u.is_finite() || !z.is_finite() {
        return Err(Error::InvalidArgument("non-finite step input".into()));
    }
    let m = SystemMatrices::new(v, ts)?;
    Ok(LateralState::from_vector(&m.propagate(&x.to_vector(), u, z)))
}
