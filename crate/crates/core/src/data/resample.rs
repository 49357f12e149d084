//! Ingestion of recorded drives: uniform resampling of odometry and
//! per-frame lane estimates into a [`Section`].

use serde::{Deserialize, Serialize};

use super::smoothing::kalman_rts_smooth;
use super::{ProfilePoint, Section};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Curve, CurveNode};
use crate::kinematics::LateralState;

/// Pose and motion of the vehicle driving along the lane center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometryRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub curvature: f64,
    pub v: f64,
}

/// Lane-center estimate published at time `t`, in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub t: f64,
    pub nodes: Vec<CurveNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecording {
    pub id: String,
    pub odometry: Vec<OdometryRecord>,
    pub estimates: Vec<EstimateRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub sample_time: f64,
    /// Largest tolerated gap between consecutive records, s.
    pub max_gap: f64,
    /// Jerk noise density of the curvature-rate smoother.
    pub q_process: f64,
    /// Curvature measurement variance of the smoother.
    pub r_meas: f64,
    /// Planning horizon the estimates must cover, steps.
    pub horizon: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            sample_time: crate::DEFAULT_SAMPLE_TIME,
            max_gap: 0.5,
            q_process: 1e-6,
            r_meas: 1e-8,
            horizon: crate::DEFAULT_HORIZON,
        }
    }
}

/// Uniform grid `t0 + k ts` covering `[t0, t_last]`.
pub fn uniform_grid(t0: f64, t_last: f64, ts: f64) -> Vec<f64> {
    let n = ((t_last - t0) / ts + 1e-9).floor() as usize;
    (0..=n).map(|k| t0 + k as f64 * ts).collect()
}

fn check_times(t: &[f64], max_gap: f64) -> Result<()> {
    if t.len() < 2 {
        return Err(Error::Ingest(format!("need at least 2 records, got {}", t.len())));
    }
    for w in t.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Ingest(format!("timestamps not strictly increasing at t = {}", w[1])));
        }
        if w[1] - w[0] > max_gap {
            return Err(Error::Ingest(format!(
                "gap of {} s after t = {} exceeds {max_gap} s",
                w[1] - w[0],
                w[0]
            )));
        }
    }
    Ok(())
}

/// Linear interpolation of `(t, y)` at each grid time. Grid times must lie in the record range.
pub fn interpolate_linear(t: &[f64], y: &[f64], grid: &[f64]) -> Vec<f64> {
    let mut i = 0;
    grid.iter()
        .map(|&g| {
            while i + 2 < t.len() && t[i + 1] <= g {
                i += 1;
            }
            let w = ((g - t[i]) / (t[i + 1] - t[i])).clamp(0.0, 1.0);
            if w == 0.0 {
                y[i]
            } else if w == 1.0 {
                y[i + 1]
            } else {
                y[i] + w * (y[i + 1] - y[i])
            }
        })
        .collect()
}

/// Odometry resampled onto a uniform grid starting at the first record.
/// Heading is unwrapped before interpolation and wrapped after.
pub fn resample_odometry(records: &[OdometryRecord], ts: f64, max_gap: f64) -> Result<Vec<OdometryRecord>> {
    if !(ts > 0.0) {
        return Err(Error::InvalidArgument(format!("sample time must be positive, got {ts}")));
    }
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    check_times(&t, max_gap)?;
    if records
        .iter()
        .any(|r| ![r.x, r.y, r.heading, r.curvature, r.v].iter().all(|v| v.is_finite()))
    {
        return Err(Error::Ingest("non-finite odometry value".into()));
    }
    let mut heading = Vec::with_capacity(records.len());
    let mut prev = records[0].heading;
    heading.push(prev);
    for r in &records[1..] {
        prev += wrap_angle(r.heading - prev);
        heading.push(prev);
    }
    let grid = uniform_grid(t[0], t[t.len() - 1], ts);
    let field = |f: fn(&OdometryRecord) -> f64| {
        let y: Vec<f64> = records.iter().map(f).collect();
        interpolate_linear(&t, &y, &grid)
    };
    let (x, y, k, v) = (field(|r| r.x), field(|r| r.y), field(|r| r.curvature), field(|r| r.v));
    let th = interpolate_linear(&t, &heading, &grid);
    Ok((0..grid.len())
        .map(|i| OdometryRecord {
            t: grid[i],
            x: x[i],
            y: y[i],
            heading: wrap_angle(th[i]),
            curvature: k[i],
            v: v[i],
        })
        .collect())
}

/// Builds a section from a recording.
///
/// The true lane center is the resampled odometry track, with the curvature
/// rate taken from a Kalman/RTS smoother. Each step uses the most recent
/// estimate published at or before its time. Leading steps without an
/// estimate and trailing steps whose estimate does not reach over the
/// planning horizon are dropped.
pub fn resample_section(raw: &RawRecording, cfg: &IngestConfig) -> Result<Section> {
    let ts = cfg.sample_time;
    let odo = resample_odometry(&raw.odometry, ts, cfg.max_gap)?;
    let n = odo.len();
    if n < 3 {
        return Err(Error::Ingest(format!("recording '{}' is too short", raw.id)));
    }
    let kappa: Vec<f64> = odo.iter().map(|r| r.curvature).collect();
    let kappa_dot = kalman_rts_smooth(&kappa, ts, cfg.q_process, cfg.r_meas)?;

    let mut s = 0.0;
    let mut heading = odo[0].heading;
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            let ds = (odo[i].x - odo[i - 1].x).hypot(odo[i].y - odo[i - 1].y);
            if !(ds > 0.0) {
                return Err(Error::Ingest(format!(
                    "recording '{}' stands still at t = {}; true curve needs motion",
                    raw.id, odo[i].t
                )));
            }
            s += ds;
            heading += wrap_angle(odo[i].heading - heading);
        }
        nodes.push(CurveNode::new(s, odo[i].x, odo[i].y, heading, kappa[i], kappa_dot[i]));
    }
    let true_curve = Curve::from_nodes(&nodes)?;

    let mut published: Vec<&EstimateRecord> = raw.estimates.iter().collect();
    let est_t: Vec<f64> = published.iter().map(|e| e.t).collect();
    if est_t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Ingest("estimate timestamps not strictly increasing".into()));
    }
    if published.is_empty() {
        return Err(Error::Ingest(format!("recording '{}' has no estimates", raw.id)));
    }
    let curves = published
        .drain(..)
        .map(|e| Curve::from_nodes(&e.nodes))
        .collect::<Result<Vec<_>>>()?;

    let first = odo.iter().position(|r| r.t >= est_t[0] - 1e-9 * ts).unwrap_or(n);
    let mut estimates = Vec::new();
    let mut profile = Vec::new();
    for j in first..n.saturating_sub(1) {
        let latest = est_t.partition_point(|&t| t <= odo[j].t + 1e-9 * ts) - 1;
        let est = &curves[latest];
        let reach: f64 = (0..cfg.horizon).map(|k| odo[(j + k).min(n - 1)].v * ts).sum();
        let anchor = est.project_point([odo[j].x, odo[j].y]);
        match anchor {
            Ok(p) if p.s + reach <= est.s_max() => {}
            _ => break,
        }
        estimates.push(est.clone());
        profile.push(ProfilePoint {
            t: odo[j].t,
            v: odo[j].v,
            s: nodes[j].s,
        });
    }
    if estimates.is_empty() {
        return Err(Error::Ingest(format!(
            "recording '{}' has no step whose estimate covers the planning horizon",
            raw.id
        )));
    }
    let last = first + estimates.len();
    profile.push(ProfilePoint {
        t: odo[last].t,
        v: odo[last].v,
        s: nodes[last].s,
    });
    let f0 = true_curve.sample_at(profile[0].s)?;
    let section = Section {
        id: raw.id.clone(),
        sample_time: ts,
        true_curve,
        estimates,
        profile,
        x0: LateralState::new(0.0, f0.theta_r, f0.kappa_r, f0.kappa_dot_r),
    };
    section.validate(cfg.horizon)?;
    Ok(section)
}
