//! Receding-horizon lateral trajectory planner.
//!
//! The horizon problem tracks the desired states taken from the estimated
//! reference curve at the planned arc positions, with per-step weights that
//! decay geometrically from a seed vector. The predicted states are
//! eliminated through the linear kinematics, leaving an `N`-dimensional box
//! QP in the input sequence.

use nalgebra::{DMatrix, DVector, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Curve;
use crate::kinematics::{LateralState, SystemMatrices};
use crate::qpsolver::{BoxQp, QpConfig, QpSolution, QpWorkspace};

/// Default input bound, 1/(m s^2).
pub const DEFAULT_INPUT_BOUND: f64 = 0.02;

/// Planner cost function parameters: weight seed
/// `[w_d, w_theta, w_kappa, w_kappa_dot, w_u]` and horizon decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub theta0: [f64; 5],
    pub lambda: f64,
}

impl CostParams {
    pub fn new(theta0: [f64; 5], lambda: f64) -> Result<Self> {
        let cfp = Self { theta0, lambda };
        cfp.validate()?;
        Ok(cfp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta0.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cost weights must be strictly positive, got {:?}",
                self.theta0
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidArgument(format!(
                "decay must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Same parameters with every weight multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            theta0: self.theta0.map(|w| w * c),
            lambda: self.lambda,
        }
    }
}

/// Per-step weights over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSchedule {
    /// Diagonal state weights for `k = 0..=N`.
    pub q: Vec<[f64; 4]>,
    /// Input weights for `k = 0..N`.
    pub r: Vec<f64>,
}

/// `Q_k = diag(lambda^k [w_d, w_theta, w_kappa, w_kappa_dot])`, `R_k = lambda^k w_u`.
pub fn expand_weights(cfp: &CostParams, horizon: usize) -> WeightSchedule {
    let mut q = Vec::with_capacity(horizon + 1);
    let mut r = Vec::with_capacity(horizon);
    let mut factor = 1.0;
    for k in 0..=horizon {
        let t = &cfp.theta0;
        q.push([factor * t[0], factor * t[1], factor * t[2], factor * t[3]]);
        if k < horizon {
            r.push(factor * t[4]);
        }
        factor *= cfp.lambda;
    }
    WeightSchedule { q, r }
}

/// `[0, theta_r(s_k), kappa_r(s_k), kappa_dot_r(s_k)]` for each position.
pub fn desired_states(curve: &Curve, positions: &[f64]) -> Result<Vec<Vector4<f64>>> {
    positions
        .iter()
        .map(|&s| {
            let f = curve.sample_at(s)?;
            Ok(Vector4::new(0.0, f.theta_r, f.kappa_r, f.kappa_dot_r))
        })
        .collect()
}

/// Reference heading at each position.
pub fn disturbances(curve: &Curve, positions: &[f64]) -> Result<Vec<f64>> {
    positions.iter().map(|&s| curve.heading_at(s)).collect()
}

/// Planned arc positions by forward integration of the velocities.
pub fn horizon_positions(s0: f64, velocities: &[f64], sample_time: f64) -> Vec<f64> {
    let mut positions = Vec::with_capacity(velocities.len() + 1);
    let mut s = s0;
    positions.push(s);
    for v in velocities {
        s += v * sample_time;
        positions.push(s);
    }
    positions
}

/// Everything the planner needs at one time step.
#[derive(Debug, Clone)]
pub struct PlanningContext<'a> {
    /// Initial state relative to `est_curve`.
    pub x0: LateralState,
    /// Planned velocities for steps `0..N`.
    pub velocities: Vec<f64>,
    /// Planned arc positions on `est_curve` for steps `0..=N`.
    pub positions: Vec<f64>,
    pub est_curve: &'a Curve,
    pub u_min: f64,
    pub u_max: f64,
    pub sample_time: f64,
}

impl PlanningContext<'_> {
    pub fn horizon(&self) -> usize {
        self.velocities.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.horizon();
        if n < 1 {
            return Err(Error::InvalidArgument("planning horizon must be at least 1".into()));
        }
        if self.positions.len() != n + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} velocities need {} positions, got {}",
                n,
                n + 1,
                self.positions.len()
            )));
        }
        if self.positions.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("planned positions must be nondecreasing".into()));
        }
        if !(self.u_min < self.u_max) {
            return Err(Error::InvalidArgument(format!(
                "input bounds must satisfy u_min < u_max, got [{}, {}]",
                self.u_min, self.u_max
            )));
        }
        if !self.x0.is_finite() {
            return Err(Error::InvalidArgument("non-finite initial state".into()));
        }
        Ok(())
    }

    fn matrices(&self) -> Result<Vec<SystemMatrices>> {
        self.velocities
            .iter()
            .map(|&v| SystemMatrices::new(v, self.sample_time))
            .collect()
    }
}

/// Builds the condensed QP.
///
/// With `x = F x0 + G u + W z` stacked over `k = 1..=N`,
/// `H = GᵀQG + R` and `g = GᵀQ(F x0 + W z − x_des)`. The objective
/// `½uᵀHu + gᵀu + constant` equals half of the horizon cost without its
/// `k = 0` state term, which does not depend on the inputs.
pub fn condense(ctx: &PlanningContext<'_>, cfp: &CostParams) -> Result<BoxQp> {
    ctx.validate()?;
    cfp.validate()?;
    let n = ctx.horizon();
    let mats = ctx.matrices()?;
    let x_des = desired_states(ctx.est_curve, &ctx.positions)?;
    let z = disturbances(ctx.est_curve, &ctx.positions[..n])?;
    let weights = expand_weights(cfp, n);

    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut g = DVector::<f64>::zeros(n);
    let mut constant = 0.0;
    // columns of the input-to-state map for the current step
    let mut cols = vec![Vector4::<f64>::zeros(); n];
    let mut free = ctx.x0.to_vector();
    let mut weighted = vec![Vector4::<f64>::zeros(); n];

    for k in 1..=n {
        let m = &mats[k - 1];
        for col in cols.iter_mut().take(k - 1) {
            *col = m.a * *col;
        }
        cols[k - 1] = m.b;
        free = m.propagate(&free, 0.0, z[k - 1]);
        let resid = free - x_des[k];
        let q = Vector4::from(weights.q[k]);
        constant += 0.5 * resid.component_mul(&q).dot(&resid);
        for i in 0..k {
            weighted[i] = q.component_mul(&cols[i]);
            g[i] += weighted[i].dot(&resid);
            for j in 0..=i {
                h[(i, j)] += weighted[i].dot(&cols[j]);
            }
        }
    }
    for i in 0..n {
        h[(i, i)] += weights.r[i];
        for j in 0..i {
            h[(j, i)] = h[(i, j)];
        }
    }
    let mut qp = BoxQp::new(
        h,
        g,
        DVector::repeat(n, ctx.u_min),
        DVector::repeat(n, ctx.u_max),
    );
    qp.constant = constant;
    Ok(qp)
}

/// Optimized inputs and the resulting predicted states.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub inputs: Vec<f64>,
    /// `N + 1` states starting with `x0`.
    pub predicted: Vec<LateralState>,
    pub qp_iterations: usize,
    pub kkt_residual: f64,
}

/// Predicted states for a given input sequence.
pub fn rollout(ctx: &PlanningContext<'_>, inputs: &[f64]) -> Result<Vec<LateralState>> {
    let n = ctx.horizon();
    if inputs.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} inputs for horizon {n}",
            inputs.len()
        )));
    }
    let mats = ctx.matrices()?;
    let z = disturbances(ctx.est_curve, &ctx.positions[..n])?;
    let mut x = ctx.x0.to_vector();
    let mut states = Vec::with_capacity(n + 1);
    states.push(ctx.x0);
    for k in 0..n {
        x = mats[k].propagate(&x, inputs[k], z[k]);
        states.push(LateralState::from_vector(&x));
    }
    Ok(states)
}

/// Solves the horizon problem from a cold start.
pub fn plan(ctx: &PlanningContext<'_>, cfp: &CostParams, qp_cfg: &QpConfig) -> Result<Plan> {
    plan_with(ctx, cfp, qp_cfg, &mut QpWorkspace::new(), None)
}

/// Optimal input sequence without the predicted states.
pub fn solve_inputs(
    ctx: &PlanningContext<'_>,
    cfp: &CostParams,
    qp_cfg: &QpConfig,
    workspace: &mut QpWorkspace,
    warm: Option<&[f64]>,
) -> Result<QpSolution> {
    let qp = condense(ctx, cfp)?;
    workspace.solve(&qp, qp_cfg, warm)
}

/// Solves the horizon problem reusing a workspace and an optional warm start.
pub fn plan_with(
    ctx: &PlanningContext<'_>,
    cfp: &CostParams,
    qp_cfg: &QpConfig,
    workspace: &mut QpWorkspace,
    warm: Option<&[f64]>,
) -> Result<Plan> {
    let sol = solve_inputs(ctx, cfp, qp_cfg, workspace, warm)?;
    let inputs: Vec<f64> = sol.u.iter().copied().collect();
    let predicted = rollout(ctx, &inputs)?;
    Ok(Plan {
        inputs,
        predicted,
        qp_iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CurveNode;
    use crate::kinematics::step;
    use std::f64::consts::PI;

    fn straight(len: f64) -> Curve {
        Curve::from_nodes(&[
            CurveNode::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            CurveNode::new(len, len, 0.0, 0.0, 0.0, 0.0),
        ])
        .unwrap()
    }

    fn circle(radius: f64, arc: f64) -> Curve {
        let nodes: Vec<CurveNode> = (0..=arc as usize)
            .map(|i| {
                let phi = i as f64 / radius;
                CurveNode::new(
                    i as f64,
                    radius * phi.sin(),
                    radius * (1.0 - phi.cos()),
                    phi,
                    1.0 / radius,
                    0.0,
                )
            })
            .collect();
        Curve::from_nodes(&nodes).unwrap()
    }

    fn ctx(curve: &Curve, x0: LateralState, v: f64, n: usize) -> PlanningContext<'_> {
        let velocities = vec![v; n];
        PlanningContext {
            x0,
            positions: horizon_positions(0.0, &velocities, 0.1),
            velocities,
            est_curve: curve,
            u_min: -DEFAULT_INPUT_BOUND,
            u_max: DEFAULT_INPUT_BOUND,
            sample_time: 0.1,
        }
    }

    const ONES: CostParams = CostParams {
        theta0: [1.0; 5],
        lambda: 1.0,
    };

    #[test]
    fn weights_without_decay() {
        let w = expand_weights(&ONES, 30);
        assert_eq!(w.q.len(), 31);
        assert_eq!(w.r.len(), 30);
        assert!(w.q.iter().all(|q| *q == [1.0; 4]));
        assert!(w.r.iter().all(|&r| r == 1.0));
    }

    #[test]
    fn weights_with_decay() {
        let w = expand_weights(&CostParams::new([1.0; 5], 0.5).unwrap(), 4);
        assert_eq!(w.q[2], [0.25; 4]);
        assert_eq!(w.r[2], 0.25);
        let w = expand_weights(&CostParams::new([1.0; 5], 0.97).unwrap(), 30);
        assert!((w.q[30][0] - 0.401).abs() < 1e-3);
    }

    #[test]
    fn invalid_cost_params() {
        assert!(CostParams::new([1.0, 1.0, 0.0, 1.0, 1.0], 1.0).is_err());
        assert!(CostParams::new([1.0; 5], 1.1).is_err());
        assert!(CostParams::new([1.0; 5], -0.1).is_err());
    }

    #[test]
    fn desired_states_and_disturbances() {
        let c = straight(100.0);
        let pos = [0.0, 10.0, 20.0];
        assert!(desired_states(&c, &pos).unwrap().iter().all(|x| *x == Vector4::zeros()));
        assert!(disturbances(&c, &pos).unwrap().iter().all(|&z| z == 0.0));
        assert!(desired_states(&c, &[]).unwrap().is_empty());
        assert!(desired_states(&c, &[120.0]).is_err());

        let tilted = Curve::from_nodes(&[
            CurveNode::new(0.0, 0.0, 0.0, 0.1, 0.0, 0.0),
            CurveNode::new(100.0, 100.0 * 0.1f64.cos(), 100.0 * 0.1f64.sin(), 0.1, 0.0, 0.0),
        ])
        .unwrap();
        assert!(disturbances(&tilted, &pos)
            .unwrap()
            .iter()
            .all(|&z| (z - 0.1).abs() < 1e-15));

        let c = circle(50.0, 100.0);
        let des = desired_states(&c, &[0.0, 3.3, 17.5]).unwrap();
        for (x, s) in des.iter().zip([0.0, 3.3, 17.5]) {
            assert_eq!(x[0], 0.0);
            assert!((x[1] - s / 50.0).abs() < 1e-9);
            assert!((x[2] - 0.02).abs() < 1e-15);
            assert_eq!(x[3], 0.0);
        }
        let z = disturbances(&c, &[0.0, 5.0]).unwrap();
        assert!((z[1] - z[0] - 0.1).abs() < 1e-9);
    }

    #[test]
    fn single_step_condensation() {
        let c = circle(50.0, 100.0);
        let x0 = LateralState::new(0.2, 0.01, -0.001, 0.002);
        let cfp = CostParams::new([2.0, 30.0, 400.0, 50.0, 6.0], 0.9).unwrap();
        let context = ctx(&c, x0, 15.0, 1);
        let qp = condense(&context, &cfp).unwrap();
        let m = SystemMatrices::new(15.0, 0.1).unwrap();
        let q1 = Vector4::new(2.0, 30.0, 400.0, 50.0) * 0.9;
        let x_des1 = desired_states(&c, &[1.5]).unwrap()[0];
        let z0 = c.heading_at(0.0).unwrap();
        let h = m.b.component_mul(&q1).dot(&m.b) + 6.0;
        let g = m.b.component_mul(&q1).dot(&(m.a * x0.to_vector() + m.e * z0 - x_des1));
        assert!((qp.h[(0, 0)] - h).abs() < 1e-12 * h);
        assert!((qp.g[0] - g).abs() < 1e-12 * (1.0 + g.abs()));
    }

    #[test]
    fn on_reference_has_zero_gradient() {
        let c = straight(200.0);
        let qp = condense(&ctx(&c, LateralState::default(), 20.0, 30), &ONES).unwrap();
        assert!(qp.g.iter().all(|&v| v == 0.0));
        assert_eq!(qp.constant, 0.0);
    }

    #[test]
    fn equilibrium_plan_is_zero() {
        let c = straight(200.0);
        let p = plan(&ctx(&c, LateralState::default(), 20.0, 30), &ONES, &QpConfig::default())
            .unwrap();
        assert!(p.inputs.iter().all(|u| u.abs() < 1e-9));
    }

    #[test]
    fn offset_start_steers_back() {
        let c = straight(200.0);
        let x0 = LateralState::new(0.5, 0.0, 0.0, 0.0);
        let p = plan(&ctx(&c, x0, 20.0, 30), &ONES, &QpConfig::default()).unwrap();
        assert!(p.inputs[0] < 0.0);
        assert!(p.predicted[30].d.abs() < 0.5);
        assert!(p.inputs.iter().all(|u| u.abs() <= DEFAULT_INPUT_BOUND));
    }

    #[test]
    fn tight_bounds_give_free_response() {
        let c = circle(100.0, 200.0);
        let x0 = LateralState::new(0.3, 0.05, 0.0, 0.0);
        let mut context = ctx(&c, x0, 20.0, 30);
        context.u_min = -1e-12;
        context.u_max = 1e-12;
        let p = plan(&context, &ONES, &QpConfig::default()).unwrap();
        assert!(p.inputs.iter().all(|u| u.abs() <= 1e-12));
        let free = rollout(&context, &[0.0; 30]).unwrap();
        for (a, b) in p.predicted.iter().zip(&free) {
            assert!((a.to_vector() - b.to_vector()).amax() < 1e-6);
        }
    }

    #[test]
    fn prediction_matches_kinematics_step() {
        let c = circle(60.0, 300.0);
        let x0 = LateralState::new(-0.4, 0.1, 0.01, 0.0);
        let context = ctx(&c, x0, 18.0, 30);
        let p = plan(&context, &ONES, &QpConfig::default()).unwrap();
        for k in 0..30 {
            let z = c.heading_at(context.positions[k]).unwrap();
            let next = step(&p.predicted[k], p.inputs[k], z, 18.0, 0.1).unwrap();
            assert_eq!(next, p.predicted[k + 1]);
        }
    }

    #[test]
    fn argmin_is_scale_invariant() {
        let c = circle(80.0, 300.0);
        let x0 = LateralState::new(0.4, PI / 200.0, 0.0, 0.0);
        let context = ctx(&c, x0, 25.0, 30);
        let cfp = CostParams::new([10.0, 2e3, 1e5, 3e4, 1.0], 0.97).unwrap();
        let base = plan(&context, &cfp, &QpConfig::default()).unwrap();
        for c in [1e-3, 0.5, 7.0, 1e3] {
            let scaled = plan(&context, &cfp.scaled(c), &QpConfig::default()).unwrap();
            for (a, b) in base.inputs.iter().zip(&scaled.inputs) {
                assert!((a - b).abs() < 1e-8, "scale {c}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn hessian_is_positive_definite() {
        let c = straight(500.0);
        for lambda in [0.5, 0.8, 1.0] {
            let cfp = CostParams::new([1e-8, 1e8, 1e-8, 1e8, 1.0], lambda).unwrap();
            let qp = condense(&ctx(&c, LateralState::default(), 27.0, 30), &cfp).unwrap();
            assert!(qp.h.clone().cholesky().is_some());
        }
    }

    #[test]
    fn context_validation() {
        let c = straight(100.0);
        let mut context = ctx(&c, LateralState::default(), 10.0, 5);
        context.u_min = 0.1;
        assert!(condense(&context, &ONES).is_err());
        let mut context = ctx(&c, LateralState::default(), 10.0, 5);
        context.positions.pop();
        assert!(matches!(condense(&context, &ONES), Err(Error::DimensionMismatch(_))));
        let mut context = ctx(&c, LateralState::default(), 10.0, 5);
        context.velocities.clear();
        context.positions.truncate(1);
        assert!(condense(&context, &ONES).is_err());
    }
}
