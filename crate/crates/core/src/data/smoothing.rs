//! Curvature-rate estimation from a sampled curvature signal.
//!
//! Forward Kalman filter on `[kappa, kappa_dot]` with a constant-rate model
//! driven by white jerk noise, followed by a Rauch-Tung-Striebel backward pass.

use nalgebra::{Matrix2, RowVector2, Vector2};

use crate::error::{Error, Result};

/// Smoothed curvature and curvature rate at every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedCurvature {
    pub kappa: Vec<f64>,
    pub kappa_dot: Vec<f64>,
}

/// Smoothed curvature rate of `kappa` sampled every `ts` seconds.
///
/// `q_process` is the spectral density of the jerk noise, `r_meas` the
/// measurement variance of `kappa`.
pub fn kalman_rts_smooth(kappa: &[f64], ts: f64, q_process: f64, r_meas: f64) -> Result<Vec<f64>> {
    Ok(kalman_rts_smooth_states(kappa, ts, q_process, r_meas)?.kappa_dot)
}

pub fn kalman_rts_smooth_states(
    kappa: &[f64],
    ts: f64,
    q_process: f64,
    r_meas: f64,
) -> Result<SmoothedCurvature> {
    let n = kappa.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "smoothing needs at least 3 samples, got {n}"
        )));
    }
    if !(ts > 0.0) || !(q_process > 0.0) || !(r_meas > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sample time and noise parameters must be positive (ts {ts}, q {q_process}, r {r_meas})"
        )));
    }
    if kappa.iter().any(|k| !k.is_finite()) {
        return Err(Error::InvalidArgument("non-finite curvature sample".into()));
    }

    let f = Matrix2::new(1.0, ts, 0.0, 1.0);
    let q = Matrix2::new(ts.powi(3) / 3.0, ts * ts / 2.0, ts * ts / 2.0, ts) * q_process;
    let h = RowVector2::new(1.0, 0.0);

    let mut filtered = vec![Vector2::zeros(); n];
    let mut filtered_cov = vec![Matrix2::zeros(); n];
    let mut predicted = vec![Vector2::zeros(); n];
    let mut predicted_cov = vec![Matrix2::zeros(); n];

    // two-point initialization at k = 1
    filtered[1] = Vector2::new(kappa[1], (kappa[1] - kappa[0]) / ts);
    filtered_cov[1] = Matrix2::new(
        r_meas,
        r_meas / ts,
        r_meas / ts,
        2.0 * r_meas / (ts * ts),
    );

    for k in 2..n {
        let x_pred = f * filtered[k - 1];
        let p_pred = f * filtered_cov[k - 1] * f.transpose() + q;
        let innovation_var = (h * p_pred * h.transpose())[0] + r_meas;
        let gain = p_pred * h.transpose() / innovation_var;
        let innovation = kappa[k] - (h * x_pred)[0];
        let i_kh = Matrix2::identity() - gain * h;
        filtered[k] = x_pred + gain * innovation;
        filtered_cov[k] = i_kh * p_pred * i_kh.transpose() + gain * gain.transpose() * r_meas;
        predicted[k] = x_pred;
        predicted_cov[k] = p_pred;
    }

    let mut smoothed = filtered.clone();
    let mut smoothed_cov = filtered_cov.clone();
    for k in (1..n - 1).rev() {
        let inv = predicted_cov[k + 1]
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("singular predicted covariance".into()))?;
        let c = filtered_cov[k] * f.transpose() * inv;
        smoothed[k] = filtered[k] + c * (smoothed[k + 1] - predicted[k + 1]);
        smoothed_cov[k] =
            filtered_cov[k] + c * (smoothed_cov[k + 1] - predicted_cov[k + 1]) * c.transpose();
    }
    // the first sample only entered through the initialization
    smoothed[0] = Vector2::new(smoothed[1][0] - ts * smoothed[1][1], smoothed[1][1]);

    Ok(SmoothedCurvature {
        kappa: smoothed.iter().map(|x| x[0]).collect(),
        kappa_dot: smoothed.iter().map(|x| x[1]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_signal_has_zero_rate() {
        let kappa = vec![0.003; 100];
        let rate = kalman_rts_smooth(&kappa, 0.1, 1e-8, 1e-12).unwrap();
        assert!(rate.iter().all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn linear_ramp_slope_recovered() {
        let (a, b) = (0.001, -2.5e-4);
        let kappa: Vec<f64> = (0..200).map(|k| a + b * k as f64 * 0.1).collect();
        let rate = kalman_rts_smooth(&kappa, 0.1, 1e-8, 1e-12).unwrap();
        for r in &rate[1..199] {
            assert!((r - b).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(kalman_rts_smooth(&[0.0, 1.0], 0.1, 1.0, 1.0).is_err());
        assert!(kalman_rts_smooth(&[0.0; 5], 0.1, 0.0, 1.0).is_err());
        assert!(kalman_rts_smooth(&[0.0; 5], 0.1, 1.0, -1.0).is_err());
        assert!(kalman_rts_smooth(&[0.0; 5], 0.0, 1.0, 1.0).is_err());
    }
}
