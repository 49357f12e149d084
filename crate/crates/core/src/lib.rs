//! Closed-loop simulation and automatic cost-parameter tuning for a lateral
//! lane-keeping MPC planner that only sees a noisy estimate of the lane center.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: arc-length parametrized reference curves, frames, projection.
//! - [`kinematics`]: discrete linearized lateral kinematics in the road frame.
//! - [`qpsolver`]: dense box-constrained QP solver (primal active set).
//! - [`planner`]: condensed receding-horizon planner built on the two above.
//! - [`simulator`]: closed loop against the true lane center with reference switching.
//! - [`tuner`]: differential evolution over the planner's cost parameters.
//! - [`data`]: sections, synthetic scenarios, ingestion, smoothing, splitting.
//! - [`experiment`]: the multi-set tuning protocol and its report.

pub mod data;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod kinematics;
pub mod planner;
pub mod qpsolver;
pub mod simulator;
pub mod tuner;

pub use error::{Error, Result};
pub use geometry::{Curve, CurveFrame, CurveNode, Projection};
pub use kinematics::{LateralState, SystemMatrices};
pub use planner::{CostParams, Plan, PlanningContext};
pub use qpsolver::{BoxQp, QpConfig, QpSolution};
pub use simulator::{DesiredCostParams, SimConfig, SimulationCost, SimulationResult};
pub use tuner::{DeConfig, Genome, TuneOutcome};

/// Default sample time in seconds.
pub const DEFAULT_SAMPLE_TIME: f64 = 0.1;

/// Default planning horizon in steps.
pub const DEFAULT_HORIZON: usize = 30;
