//! Closed-loop simulation against the true lane center.
//!
//! At each step the simulated state, expressed relative to the true curve, is
//! moved into the frame of that step's estimated curve by shifting its lateral
//! offset. The planner solves the horizon problem on the estimate, the first
//! input is applied and the state is propagated along the true curve.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::data::Section;
use crate::error::{Error, Result};
use crate::geometry::{Curve, DEFAULT_CORRIDOR};
use crate::kinematics::{step, LateralState};
use crate::planner::{horizon_positions, solve_inputs, CostParams, PlanningContext, DEFAULT_INPUT_BOUND};
use crate::qpsolver::{QpConfig, QpWorkspace};

/// Weights `[q_d, q_theta, q_kappa, q_kappa_dot, r_u]` of the simulation cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesiredCostParams {
    pub psi: [f64; 5],
}

impl DesiredCostParams {
    pub fn new(psi: [f64; 5]) -> Result<Self> {
        let d = Self { psi };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.psi.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "desired cost weights must be strictly positive, got {:?}",
                self.psi
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            psi: self.psi.map(|w| w * c),
        }
    }

    /// The desired weights used directly as planner weights, without decay.
    pub fn as_cfp(&self) -> CostParams {
        CostParams {
            theta0: self.psi,
            lambda: 1.0,
        }
    }

    /// [`as_cfp`](Self::as_cfp) rescaled so the input weight is 1. Plans are
    /// invariant under this scaling.
    pub fn normalized_cfp(&self) -> CostParams {
        self.as_cfp().scaled(1.0 / self.psi[4])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub horizon: usize,
    pub u_min: f64,
    pub u_max: f64,
    pub qp: QpConfig,
    /// Start each QP from the previous solution shifted by one step.
    pub warm_start: bool,
    /// Projection corridor for the reference switch, m.
    pub corridor: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: crate::DEFAULT_HORIZON,
            u_min: -DEFAULT_INPUT_BOUND,
            u_max: DEFAULT_INPUT_BOUND,
            qp: QpConfig::default(),
            warm_start: true,
            corridor: DEFAULT_CORRIDOR,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || !(self.u_min < self.u_max) || !(self.corridor > 0.0) {
            return Err(Error::InvalidArgument(format!("bad simulation config {self:?}")));
        }
        self.qp.validate()
    }
}

/// Frame-switch data of one step. Independent of the planner weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReference {
    /// Signed offset of the true reference point from the estimate.
    pub delta_d: f64,
    /// Arc position of that point's projection on the estimate.
    pub s_est: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub qp_iterations: usize,
    pub kkt_residual: f64,
    pub delta_d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub section_id: String,
    pub times: Vec<f64>,
    /// `M + 1` states relative to the true curve.
    pub states: Vec<LateralState>,
    /// `M` applied inputs.
    pub inputs: Vec<f64>,
    pub diagnostics: Vec<StepDiagnostics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationCost {
    /// `M + 1` stage costs; the last one has no input term.
    pub per_step: Vec<f64>,
    pub total: f64,
}

/// Lateral offset of the true curve point at `s_sim` from `est_curve`.
pub fn reference_offset(true_curve: &Curve, est_curve: &Curve, s_sim: f64) -> Result<f64> {
    let p = true_curve.point_at(s_sim)?;
    Ok(est_curve.project_point(p)?.d)
}

/// Re-expresses a state relative to another reference curve.
pub fn switch_reference(x_sim: LateralState, delta_d: f64) -> LateralState {
    LateralState {
        d: x_sim.d + delta_d,
        ..x_sim
    }
}

/// A section with its per-step frame-switch data computed once.
#[derive(Debug, Clone)]
pub struct PreparedSection<'a> {
    pub section: &'a Section,
    pub refs: Vec<StepReference>,
}

pub fn prepare<'a>(section: &'a Section, cfg: &SimConfig) -> Result<PreparedSection<'a>> {
    let refs = section
        .estimates
        .iter()
        .enumerate()
        .map(|(j, est)| {
            let p = section.true_curve.point_at(section.profile[j].s)?;
            let proj = est.project_point_within(p, cfg.corridor)?;
            Ok(StepReference {
                delta_d: proj.d,
                s_est: proj.s,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::InvalidSection {
            id: section.id.clone(),
            reason: format!("reference switch: {e}"),
        })?;
    Ok(PreparedSection { section, refs })
}

/// Frame-switch data for planning directly on the true curve.
pub fn prepare_in_true_frame(section: &Section) -> PreparedSection<'_> {
    let refs = section.profile[..section.steps()]
        .iter()
        .map(|p| StepReference {
            delta_d: 0.0,
            s_est: p.s,
        })
        .collect();
    PreparedSection { section, refs }
}

pub fn run_closed_loop(section: &Section, cfp: &CostParams, cfg: &SimConfig) -> Result<SimulationResult> {
    let prepared = prepare(section, cfg)?;
    run_prepared(&prepared, cfp, cfg)
}

/// Closed loop that ignores the estimates and plans on the true curve.
pub fn run_closed_loop_in_true_frame(
    section: &Section,
    cfp: &CostParams,
    cfg: &SimConfig,
) -> Result<SimulationResult> {
    run_with_curves(&prepare_in_true_frame(section), cfp, cfg, |_| &section.true_curve)
}

pub fn run_prepared(prepared: &PreparedSection<'_>, cfp: &CostParams, cfg: &SimConfig) -> Result<SimulationResult> {
    let section = prepared.section;
    run_with_curves(prepared, cfp, cfg, |j| &section.estimates[j])
}

fn run_with_curves<'a>(
    prepared: &PreparedSection<'a>,
    cfp: &CostParams,
    cfg: &SimConfig,
    curve_at: impl Fn(usize) -> &'a Curve,
) -> Result<SimulationResult> {
    cfg.validate()?;
    cfp.validate()?;
    let section = prepared.section;
    let m = section.steps();
    if prepared.refs.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} step references for {m} steps",
            prepared.refs.len()
        )));
    }
    let ts = section.sample_time;
    let fail = |step: usize, e: Error| Error::SimulationFailed {
        section: section.id.clone(),
        step,
        cause: Box::new(e),
    };

    let mut workspace = QpWorkspace::new();
    let mut warm: Option<Vec<f64>> = None;
    let mut x = section.x0;
    let mut states = Vec::with_capacity(m + 1);
    let mut inputs = Vec::with_capacity(m);
    let mut diagnostics = Vec::with_capacity(m);
    states.push(x);
    for j in 0..m {
        let r = prepared.refs[j];
        let velocities = section.horizon_velocities(j, cfg.horizon);
        let positions = horizon_positions(r.s_est, &velocities, ts);
        let ctx = PlanningContext {
            x0: switch_reference(x, r.delta_d),
            velocities,
            positions,
            est_curve: curve_at(j),
            u_min: cfg.u_min,
            u_max: cfg.u_max,
            sample_time: ts,
        };
        let sol = solve_inputs(
            &ctx,
            cfp,
            &cfg.qp,
            &mut workspace,
            if cfg.warm_start { warm.as_deref() } else { None },
        )
        .map_err(|e| fail(j, e))?;
        let u = sol.u[0];
        let p = section.profile[j];
        let z = section.true_curve.heading_at(p.s).map_err(|e| fail(j, e))?;
        x = step(&x, u, z, p.v, ts).map_err(|e| fail(j, e))?;
        if !x.is_finite() {
            return Err(fail(j, Error::InvalidArgument("state diverged".into())));
        }
        if cfg.warm_start {
            let n = sol.u.len();
            warm = Some((0..n).map(|k| sol.u[(k + 1).min(n - 1)]).collect());
        }
        states.push(x);
        inputs.push(u);
        diagnostics.push(StepDiagnostics {
            qp_iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            delta_d: r.delta_d,
        });
    }
    Ok(SimulationResult {
        section_id: section.id.clone(),
        times: section.profile.iter().map(|p| p.t).collect(),
        states,
        inputs,
        diagnostics,
    })
}

/// Desired states `[0, theta_r, kappa_r, kappa_dot_r]` of the true curve along the profile.
pub fn desired_trajectory(section: &Section) -> Result<Vec<Vector4<f64>>> {
    section
        .profile
        .iter()
        .map(|p| {
            let f = section.true_curve.sample_at(p.s)?;
            Ok(Vector4::new(0.0, f.theta_r, f.kappa_r, f.kappa_dot_r))
        })
        .collect()
}

/// Weighted squared tracking error of each state plus weighted squared input.
pub fn stage_costs(
    states: &[LateralState],
    inputs: &[f64],
    desired: &[Vector4<f64>],
    dcfp: &DesiredCostParams,
) -> Result<SimulationCost> {
    if states.len() != desired.len() || inputs.len() + 1 != states.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} states, {} inputs and {} desired states",
            states.len(),
            inputs.len(),
            desired.len()
        )));
    }
    let q = Vector4::new(dcfp.psi[0], dcfp.psi[1], dcfp.psi[2], dcfp.psi[3]);
    let per_step: Vec<f64> = states
        .iter()
        .zip(desired)
        .enumerate()
        .map(|(j, (x, xd))| {
            let e = x.to_vector() - xd;
            let u = inputs.get(j).copied().unwrap_or(0.0);
            e.component_mul(&q).dot(&e) + dcfp.psi[4] * u * u
        })
        .collect();
    let total = per_step.iter().sum();
    Ok(SimulationCost { per_step, total })
}

pub fn simulation_cost(result: &SimulationResult, section: &Section, dcfp: &DesiredCostParams) -> Result<SimulationCost> {
    stage_costs(&result.states, &result.inputs, &desired_trajectory(section)?, dcfp)
}

pub const TRACE_COLUMNS: [&str; 12] = [
    "j",
    "t",
    "d",
    "theta",
    "kappa",
    "kappa_dot",
    "u",
    "d_des",
    "theta_des",
    "kappa_des",
    "kappa_dot_des",
    "stage_cost",
];

/// Per-step trace as CSV. The final row has an empty input.
pub fn write_trace_csv<W: Write>(
    mut out: W,
    result: &SimulationResult,
    section: &Section,
    dcfp: &DesiredCostParams,
) -> Result<()> {
    let desired = desired_trajectory(section)?;
    let cost = stage_costs(&result.states, &result.inputs, &desired, dcfp)?;
    let io = |e: std::io::Error| Error::Serialization(e.to_string());
    writeln!(out, "{}", TRACE_COLUMNS.join(",")).map_err(io)?;
    for (j, x) in result.states.iter().enumerate() {
        let u = result.inputs.get(j).map(|u| format!("{u:e}")).unwrap_or_default();
        let xd = desired[j];
        writeln!(
            out,
            "{j},{},{:e},{:e},{:e},{:e},{u},{:e},{:e},{:e},{:e},{:e}",
            result.times[j], x.d, x.theta, x.kappa, x.kappa_dot, xd[0], xd[1], xd[2], xd[3], cost.per_step[j]
        )
        .map_err(io)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn switch_is_additive_and_reversible() {
        let x = LateralState::new(0.1, 0.2, 0.3, 0.4);
        assert_eq!(switch_reference(x, 0.0), x);
        let y = switch_reference(x, 0.05);
        assert!((y.d - 0.15).abs() < 1e-15);
        assert_eq!((y.theta, y.kappa, y.kappa_dot), (0.2, 0.3, 0.4));
        let y = LateralState::new(0.5, 0.2, 0.3, 0.4);
        assert_eq!(switch_reference(switch_reference(y, 0.25), -0.25), y);
    }

    #[test]
    fn stage_cost_examples() {
        let dcfp = DesiredCostParams::new([10.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let states = [LateralState::new(0.5, 0.0, 0.0, 0.0)];
        let c = stage_costs(&states, &[], &[Vector4::zeros()], &dcfp).unwrap();
        assert!((c.total - 2.5).abs() < 1e-15);
        let c = stage_costs(&[LateralState::default(); 3], &[0.0; 2], &[Vector4::zeros(); 3], &dcfp).unwrap();
        assert_eq!(c.total, 0.0);
        assert!(stage_costs(&states, &[0.0], &[Vector4::zeros()], &dcfp).is_err());
    }

    #[test]
    fn normalized_dcfp_has_unit_input_weight() {
        let d = DesiredCostParams::new([15.0, 3e4, 1e6, 2e5, 8e3]).unwrap();
        let c = d.normalized_cfp();
        assert_eq!(c.theta0[4], 1.0);
        assert_eq!(c.lambda, 1.0);
        assert!(DesiredCostParams::new([1.0, 0.0, 1.0, 1.0, 1.0]).is_err());
    }
}
