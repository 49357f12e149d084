//! Sections and datasets: the recorded (or synthetic) problem data.
//!
//! A [`Section`] is one continuous drive. It carries the true lane center,
//! one estimated lane center per simulation step, the a priori known
//! longitudinal profile and the initial lateral state in the true frame.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Curve, CurveNode};
use crate::kinematics::LateralState;

pub mod dcfp;
pub mod noise;
pub mod resample;
pub mod smoothing;
pub mod split;
pub mod synth;

pub use dcfp::random_dcfp;
pub use resample::{resample_section, IngestConfig, OdometryRecord, RawRecording};
pub use smoothing::kalman_rts_smooth;
pub use split::split_train_test;
pub use synth::{generate_synthetic_dataset, GeneratorConfig, NoiseConfig, RoadConfig};

/// Longitudinal sample at one simulation step, serialized as `[t, v, s]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct ProfilePoint {
    pub t: f64,
    /// Velocity, m/s.
    pub v: f64,
    /// Arc position on the true curve, m.
    pub s: f64,
}

impl From<[f64; 3]> for ProfilePoint {
    fn from(a: [f64; 3]) -> Self {
        Self {
            t: a[0],
            v: a[1],
            s: a[2],
        }
    }
}

impl From<ProfilePoint> for [f64; 3] {
    fn from(p: ProfilePoint) -> Self {
        [p.t, p.v, p.s]
    }
}

/// One continuous drive.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub id: String,
    pub sample_time: f64,
    pub true_curve: Curve,
    /// Estimated lane center available at step `j`, for `j = 0..M`.
    pub estimates: Vec<Curve>,
    /// `M + 1` samples, one per simulated state.
    pub profile: Vec<ProfilePoint>,
    /// Initial state relative to the true curve.
    pub x0: LateralState,
}

/// Summary statistics used to balance train and test splits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionStats {
    pub duration: f64,
    pub speed_mean: f64,
    pub speed_std: f64,
    pub abs_kappa_mean: f64,
}

impl Section {
    /// Number of simulation steps `M`.
    pub fn steps(&self) -> usize {
        self.estimates.len()
    }

    pub fn duration(&self) -> f64 {
        self.steps() as f64 * self.sample_time
    }

    /// Planned velocities `v_{j..j+n}`, holding the last profile value past the end.
    pub fn horizon_velocities(&self, j: usize, n: usize) -> Vec<f64> {
        let last = self.profile.len() - 1;
        (0..n).map(|k| self.profile[(j + k).min(last)].v).collect()
    }

    /// Checks the structural invariants. `horizon` is the planning horizon the
    /// estimates must cover.
    pub fn validate(&self, horizon: usize) -> Result<()> {
        let bad = |reason: String| Error::InvalidSection {
            id: self.id.clone(),
            reason,
        };
        if !(self.sample_time > 0.0) {
            return Err(bad(format!("sample time {} must be positive", self.sample_time)));
        }
        if self.estimates.is_empty() {
            return Err(bad("no simulation steps".into()));
        }
        if self.profile.len() != self.steps() + 1 {
            return Err(bad(format!(
                "profile has {} samples for {} steps",
                self.profile.len(),
                self.steps()
            )));
        }
        if self.profile.windows(2).any(|w| w[1].s < w[0].s || w[1].t <= w[0].t) {
            return Err(bad("profile time and arc position must be monotone".into()));
        }
        if self.profile.iter().any(|p| !(p.v >= 0.0) || !p.s.is_finite()) {
            return Err(bad("profile velocities must be finite and nonnegative".into()));
        }
        if !self.x0.is_finite() {
            return Err(bad("non-finite initial state".into()));
        }
        let (first, last) = (self.profile[0].s, self.profile[self.steps()].s);
        if !self.true_curve.contains(first) || !self.true_curve.contains(last) {
            return Err(bad(format!(
                "true curve [{}, {}] does not cover the profile [{first}, {last}]",
                self.true_curve.s_min(),
                self.true_curve.s_max()
            )));
        }
        for (j, est) in self.estimates.iter().enumerate() {
            let reach: f64 = self
                .horizon_velocities(j, horizon)
                .iter()
                .map(|v| v * self.sample_time)
                .sum();
            let anchor = self
                .true_curve
                .point_at(self.profile[j].s)
                .and_then(|p| est.project_point(p))
                .map_err(|e| bad(format!("estimate {j}: {e}")))?;
            if anchor.s + reach > est.s_max() + 1e-9 {
                return Err(bad(format!(
                    "estimate {j} ends at {} but the horizon reaches {}",
                    est.s_max(),
                    anchor.s + reach
                )));
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> SectionStats {
        let m = self.steps();
        let speeds: Vec<f64> = self.profile[..m].iter().map(|p| p.v).collect();
        let mean = speeds.iter().sum::<f64>() / m as f64;
        let var = speeds.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
        let abs_kappa = self.profile[..m]
            .iter()
            .filter_map(|p| self.true_curve.sample_at(p.s).ok())
            .map(|f| f.kappa_r.abs())
            .sum::<f64>()
            / m as f64;
        SectionStats {
            duration: self.duration(),
            speed_mean: mean,
            speed_std: var.sqrt(),
            abs_kappa_mean: abs_kappa,
        }
    }
}

/// A collection of sections sharing one sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sample_time: f64,
    pub sections: Vec<Section>,
    /// Generator configuration and seed, or recording provenance.
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct EstimateRepr {
    step: usize,
    nodes: Vec<CurveNode>,
}

#[derive(Serialize, Deserialize)]
struct SectionRepr {
    id: String,
    profile: Vec<ProfilePoint>,
    x0: LateralState,
    true_curve: Curve,
    estimates: Vec<EstimateRepr>,
}

#[derive(Serialize, Deserialize)]
struct DatasetRepr {
    sample_time: f64,
    sections: Vec<SectionRepr>,
    #[serde(default)]
    meta: serde_json::Value,
}

impl Dataset {
    pub fn total_duration(&self) -> f64 {
        self.sections.iter().map(Section::duration).sum()
    }

    pub fn section(&self, id: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.id == id)
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        let mut ids = HashSet::new();
        for s in &self.sections {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate section id '{}'", s.id)));
            }
            if s.sample_time != self.sample_time {
                return Err(Error::InvalidDataset(format!(
                    "section '{}' has sample time {} but the dataset uses {}",
                    s.id, s.sample_time, self.sample_time
                )));
            }
            s.validate(horizon)?;
        }
        Ok(())
    }

    /// Canonical compact JSON.
    pub fn to_json(&self) -> Result<String> {
        let repr = DatasetRepr {
            sample_time: self.sample_time,
            meta: self.meta.clone(),
            sections: self
                .sections
                .iter()
                .map(|s| SectionRepr {
                    id: s.id.clone(),
                    profile: s.profile.clone(),
                    x0: s.x0,
                    true_curve: s.true_curve.clone(),
                    estimates: s
                        .estimates
                        .iter()
                        .enumerate()
                        .map(|(step, c)| EstimateRepr {
                            step,
                            nodes: c.nodes(),
                        })
                        .collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&repr)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: DatasetRepr = serde_json::from_str(text)?;
        let sample_time = repr.sample_time;
        let sections = repr
            .sections
            .into_iter()
            .map(|s| {
                let mut estimates = s.estimates;
                estimates.sort_by_key(|e| e.step);
                if estimates.iter().enumerate().any(|(j, e)| e.step != j) {
                    return Err(Error::InvalidSection {
                        id: s.id.clone(),
                        reason: "estimate steps must be 0..M without gaps".into(),
                    });
                }
                Ok(Section {
                    id: s.id,
                    sample_time,
                    true_curve: s.true_curve,
                    estimates: estimates
                        .iter()
                        .map(|e| Curve::from_nodes(&e.nodes))
                        .collect::<Result<_>>()?,
                    profile: s.profile,
                    x0: s.x0,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            sample_time,
            sections,
            meta: repr.meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?)
            .map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Subset with the given section ids, in the given order.
    pub fn subset(&self, ids: &[String]) -> Self {
        Self {
            sample_time: self.sample_time,
            sections: ids
                .iter()
                .filter_map(|id| self.section(id).cloned())
                .collect(),
            meta: self.meta.clone(),
        }
    }
}
