mod common;

use common::{circle, straight};
use lanetune::kinematics::{step, LateralState, SystemMatrices};
use lanetune::planner::{condense, expand_weights, horizon_positions, plan, rollout, CostParams, PlanningContext};
use lanetune::qpsolver::{solve_box_qp, BoxQp, QpConfig};
use nalgebra::{DMatrix, DVector, Vector4};
use proptest::prelude::*;

fn state() -> impl Strategy<Value = [f64; 4]> {
    [-2.0..2.0f64, -0.5..0.5f64, -0.02..0.02f64, -0.01..0.01f64]
}

/// Horizon cost straight from its definition, skipping the `k = 0` state term.
fn horizon_cost(ctx: &PlanningContext<'_>, cfp: &CostParams, u: &[f64]) -> f64 {
    let xs = rollout(ctx, u).unwrap();
    let w = expand_weights(cfp, u.len());
    let mut c = 0.0;
    for (k, x) in xs.iter().enumerate() {
        let f = ctx.est_curve.sample_at(ctx.positions[k]).unwrap();
        let e = [x.d, x.theta - f.theta_r, x.kappa - f.kappa_r, x.kappa_dot - f.kappa_dot_r];
        if k > 0 {
            c += (0..4).map(|i| w.q[k][i] * e[i] * e[i]).sum::<f64>();
        }
        if k < u.len() {
            c += w.r[k] * u[k] * u[k];
        }
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kinematics_is_affine(
        x in state(), y in state(),
        u in -0.05..0.05f64, w in -0.05..0.05f64,
        z in -1.0..1.0f64, z2 in -1.0..1.0f64,
        a in -3.0..3.0f64,
        v in 0.0..40.0f64, ts in 0.01..0.5f64,
    ) {
        let (x, y) = (LateralState::from(x), LateralState::from(y));
        let comb = LateralState::from_vector(&(x.to_vector() + a * y.to_vector()));
        let lhs = step(&comb, u + a * w, z + a * z2, v, ts).unwrap().to_vector();
        let rhs = step(&x, u, z, v, ts).unwrap().to_vector() + a * step(&y, w, z2, v, ts).unwrap().to_vector();
        prop_assert!((lhs - rhs).abs().max() < 1e-10);
    }

    #[test]
    fn step_matches_matrix_exponential(v in 0.0..40.0f64, ts in 0.01..0.3f64) {
        // continuous chain: d' = v (theta - theta_r), theta' = v kappa, kappa' = kappa_dot, kappa_dot' = u
        let mut ac = DMatrix::<f64>::zeros(6, 6);
        ac[(0, 1)] = v;
        ac[(0, 5)] = -v;
        ac[(1, 2)] = v;
        ac[(2, 3)] = 1.0;
        ac[(3, 4)] = 1.0;
        let mut term = DMatrix::<f64>::identity(6, 6);
        let mut expm = DMatrix::<f64>::identity(6, 6);
        for k in 1..30 {
            term = &term * &ac * (ts / k as f64);
            expm += &term;
        }
        let m = SystemMatrices::new(v, ts).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((m.a[(i, j)] - expm[(i, j)]).abs() < 1e-12 * (1.0 + expm[(i, j)].abs()));
            }
            prop_assert!((m.b[i] - expm[(i, 4)]).abs() < 1e-12 * (1.0 + expm[(i, 4)].abs()));
            prop_assert!((m.e[i] - expm[(i, 5)]).abs() < 1e-12 * (1.0 + expm[(i, 5)].abs()));
        }
    }

    #[test]
    fn condensed_objective_matches_rollout_cost(
        x0 in state(),
        n in 1usize..12,
        v in 5.0..35.0f64,
        radius in prop_oneof![150.0..2000.0f64, -2000.0..-150.0f64],
        logw in prop::array::uniform5(-2.0..6.0f64),
        lambda in 0.5..1.0f64,
        us in prop::collection::vec(-0.02..0.02f64, 12),
    ) {
        let curve = circle(radius, 600.0);
        let velocities = vec![v; n];
        let ctx = PlanningContext {
            x0: LateralState::from(x0),
            positions: horizon_positions(10.0, &velocities, 0.1),
            velocities,
            est_curve: &curve,
            u_min: -0.02,
            u_max: 0.02,
            sample_time: 0.1,
        };
        let cfp = CostParams::new(logw.map(|l| 10f64.powf(l)), lambda).unwrap();
        let qp = condense(&ctx, &cfp).unwrap();
        let u = DVector::from_column_slice(&us[..n]);
        let direct = horizon_cost(&ctx, &cfp, &us[..n]);
        let condensed = 2.0 * qp.value(&u);
        prop_assert!((direct - condensed).abs() <= 1e-8 * direct.max(1e-12), "{direct} vs {condensed}");
    }

    #[test]
    fn qp_solution_beats_feasible_points(
        seed_rows in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 6), 6),
        g in prop::collection::vec(-3.0..3.0f64, 6),
        probes in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 6), 20),
    ) {
        let m = DMatrix::from_fn(6, 6, |i, j| seed_rows[i][j]);
        let h = &m * m.transpose() + DMatrix::identity(6, 6) * 0.1;
        let qp = BoxQp::new(h, DVector::from_vec(g), DVector::repeat(6, -1.0), DVector::repeat(6, 1.0));
        let sol = solve_box_qp(&qp, &QpConfig::default()).unwrap();
        prop_assert!(sol.kkt_residual <= 1e-9);
        for p in &probes {
            prop_assert!(qp.objective(&DVector::from_column_slice(p)) >= sol.objective - 1e-12);
        }
    }
}

#[test]
fn planner_recovers_an_offset_on_a_straight_road() {
    let curve = straight(0.0, 0.0, 0.0, 500.0);
    let velocities = vec![20.0; 30];
    let ctx = PlanningContext {
        x0: LateralState::new(0.5, 0.0, 0.0, 0.0),
        positions: horizon_positions(0.0, &velocities, 0.1),
        velocities,
        est_curve: &curve,
        u_min: -0.02,
        u_max: 0.02,
        sample_time: 0.1,
    };
    let cfp = CostParams::new([1.0, 100.0, 1e3, 10.0, 1.0], 0.97).unwrap();
    let p = plan(&ctx, &cfp, &QpConfig::default()).unwrap();
    assert_eq!(p.predicted.len(), 31);
    assert!(p.inputs.iter().all(|u| u.abs() <= 0.02));
    assert!(p.inputs[0] < 0.0);
    assert!(p.predicted.last().unwrap().d < 0.5);
}

#[test]
fn nilpotent_integrator_chain() {
    let m = SystemMatrices::new(17.0, 0.1).unwrap();
    let n = m.a - nalgebra::Matrix4::identity();
    let n4 = n * n * n * n;
    assert!(n4.abs().max() == 0.0);
    assert!((m.b - Vector4::new(17.0 * 17.0 * 1e-4 / 24.0, 17.0 * 1e-3 / 6.0, 5e-3, 0.1)).abs().max() < 1e-15);
}
