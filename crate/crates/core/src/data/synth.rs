//! Synthetic lane-keeping scenarios.
//!
//! Roads are chains of straights, clothoid transitions and constant-curvature
//! arcs. Each step's estimated lane center is the true one displaced along its
//! normal by a smooth error field
//!
//! ```text
//! e_j(s) = σ_lat / √K · Σ_m (α_jm cos ω_m s + β_jm sin ω_m s)
//!        + b_j (s − s_j) + ½ c_j (s − s_j)²
//! ```
//!
//! where the spatial frequencies `ω_m ~ N(0, 1/L²)` are fixed per section
//! (random Fourier features of a squared-exponential field with length scale
//! `L`) and every coefficient follows its own Ornstein-Uhlenbeck process in
//! time. The offset, heading and curvature of the displaced curve are
//! evaluated in closed form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::noise::OrnsteinUhlenbeck;
use super::{Dataset, ProfilePoint, Section};
use crate::error::{Error, Result};
use crate::geometry::{Curve, CurveNode};
use crate::kinematics::LateralState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoadConfig {
    /// Node spacing of the sampled curves, m (at most 1).
    pub node_spacing: f64,
    /// Largest arc curvature, 1/m.
    pub max_curvature: f64,
    pub straight_length: [f64; 2],
    pub arc_length: [f64; 2],
    pub transition_length: [f64; 2],
    /// Bound on the absolute road heading, rad.
    pub max_heading: f64,
}

impl Default for RoadConfig {
    fn default() -> Self {
        Self {
            node_spacing: 1.0,
            max_curvature: 1.0 / 200.0,
            straight_length: [40.0, 250.0],
            arc_length: [40.0, 250.0],
            transition_length: [20.0, 100.0],
            max_heading: 2.0,
        }
    }
}

/// Perception error model for the estimated lane center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Stationary std of the lateral error at any point, m.
    pub lateral_sigma: f64,
    /// Std of the heading error about the vehicle position, rad.
    pub heading_sigma: f64,
    /// Std of the curvature error about the vehicle position, 1/m.
    pub curvature_sigma: f64,
    /// Temporal correlation time of all error coefficients, s.
    pub correlation_time: f64,
    /// Along-curve length scale of the lateral error field, m.
    pub correlation_length: f64,
    /// Forward extent of each estimate from the vehicle, m.
    pub lookahead: f64,
    /// Backward extent of each estimate from the vehicle, m.
    pub lookbehind: f64,
    /// Number of Fourier modes in the lateral error field.
    pub modes: usize,
    pub rng_seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            lateral_sigma: 0.15,
            heading_sigma: 0.003,
            curvature_sigma: 1e-4,
            correlation_time: 3.0,
            correlation_length: 40.0,
            lookahead: 120.0,
            lookbehind: 15.0,
            modes: 12,
            rng_seed: 1,
        }
    }
}

impl NoiseConfig {
    pub fn zero(rng_seed: u64) -> Self {
        Self {
            lateral_sigma: 0.0,
            heading_sigma: 0.0,
            curvature_sigma: 0.0,
            rng_seed,
            ..Self::default()
        }
    }

    fn is_silent(&self) -> bool {
        self.lateral_sigma == 0.0 && self.heading_sigma == 0.0 && self.curvature_sigma == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub road: RoadConfig,
    pub noise: NoiseConfig,
    pub n_sections: usize,
    /// Section duration range, s.
    pub duration_range: [f64; 2],
    /// Speed range, m/s.
    pub speed_range: [f64; 2],
    pub sample_time: f64,
    /// Planning horizon the estimates must cover, steps.
    pub horizon: usize,
    pub seed: u64,
    pub id_prefix: String,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            road: RoadConfig::default(),
            noise: NoiseConfig::default(),
            n_sections: 16,
            duration_range: [15.0, 45.0],
            speed_range: [40.0 / 3.6, 100.0 / 3.6],
            sample_time: crate::DEFAULT_SAMPLE_TIME,
            horizon: crate::DEFAULT_HORIZON,
            seed: 7,
            id_prefix: "sec".into(),
        }
    }
}

fn ordered_positive(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} must satisfy 0 < min <= max, got {r:?}")));
    }
    Ok(())
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let road = &self.road;
        let noise = &self.noise;
        if !(road.node_spacing > 0.0 && road.node_spacing <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "node spacing must be in (0, 1] m, got {}",
                road.node_spacing
            )));
        }
        if !(road.max_curvature >= 0.0) || !(road.max_heading > 0.0 && road.max_heading < 3.0) {
            return Err(Error::InvalidArgument("bad curvature or heading bound".into()));
        }
        ordered_positive("straight_length", road.straight_length)?;
        ordered_positive("arc_length", road.arc_length)?;
        ordered_positive("transition_length", road.transition_length)?;
        ordered_positive("duration_range", self.duration_range)?;
        ordered_positive("speed_range", self.speed_range)?;
        if self.n_sections == 0 || self.horizon == 0 || !(self.sample_time > 0.0) {
            return Err(Error::InvalidArgument(
                "need at least one section, a positive horizon and sample time".into(),
            ));
        }
        if [noise.lateral_sigma, noise.heading_sigma, noise.curvature_sigma]
            .iter()
            .any(|s| !(*s >= 0.0))
        {
            return Err(Error::InvalidArgument("noise sigmas must be nonnegative".into()));
        }
        if !(noise.correlation_time > 0.0 && noise.correlation_length > 0.0)
            || !(noise.lookbehind > 0.0)
            || noise.modes == 0
        {
            return Err(Error::InvalidArgument(
                "correlation time, correlation length, lookbehind and modes must be positive".into(),
            ));
        }
        let reach = self.speed_range[1] * self.horizon as f64 * self.sample_time;
        if noise.lookahead < reach + 2.0 * road.node_spacing {
            return Err(Error::InvalidArgument(format!(
                "lookahead {} m does not cover the planning horizon ({reach} m at top speed)",
                noise.lookahead
            )));
        }
        Ok(())
    }
}

/// Piecewise-linear curvature segment.
#[derive(Debug, Clone, Copy)]
struct Piece {
    start: f64,
    len: f64,
    k0: f64,
    k1: f64,
    theta0: f64,
}

impl Piece {
    fn kappa(&self, s: f64) -> f64 {
        self.k0 + (self.k1 - self.k0) * (s - self.start) / self.len
    }

    fn kappa_slope(&self) -> f64 {
        (self.k1 - self.k0) / self.len
    }

    fn theta(&self, s: f64) -> f64 {
        let u = s - self.start;
        self.theta0 + self.k0 * u + 0.5 * self.kappa_slope() * u * u
    }

    fn end(&self) -> f64 {
        self.start + self.len
    }
}

struct Road {
    pieces: Vec<Piece>,
}

impl Road {
    fn generate(cfg: &RoadConfig, length: f64, rng: &mut ChaCha8Rng) -> Self {
        let uniform = |rng: &mut ChaCha8Rng, r: [f64; 2]| {
            if r[1] > r[0] {
                rng.random_range(r[0]..r[1])
            } else {
                r[0]
            }
        };
        let mut pieces: Vec<Piece> = Vec::new();
        let mut s = 0.0;
        let mut theta = rng.random_range(-0.5..0.5);
        let push = |pieces: &mut Vec<Piece>, len: f64, k0: f64, k1: f64, s: &mut f64, theta: &mut f64| {
            if len <= 0.0 {
                return;
            }
            let p = Piece {
                start: *s,
                len,
                k0,
                k1,
                theta0: *theta,
            };
            *theta = p.theta(p.end());
            *s = p.end();
            pieces.push(p);
        };
        while s < length {
            let straight = uniform(rng, cfg.straight_length);
            push(&mut pieces, straight, 0.0, 0.0, &mut s, &mut theta);
            if s >= length || cfg.max_curvature == 0.0 {
                continue;
            }
            let k = cfg.max_curvature * rng.random_range(0.25..1.0);
            let sign = if theta.abs() > cfg.max_heading / 3.0 {
                -theta.signum()
            } else if rng.random_bool(0.5) {
                1.0
            } else {
                -1.0
            };
            let transition = uniform(rng, cfg.transition_length);
            let mut arc = uniform(rng, cfg.arc_length);
            let turn = k * (arc + transition);
            let limit = cfg.max_heading - 0.05;
            if (theta + sign * turn).abs() > limit {
                arc = ((limit - sign * theta) / k - transition).max(0.0);
            }
            push(&mut pieces, transition, 0.0, sign * k, &mut s, &mut theta);
            push(&mut pieces, arc, sign * k, sign * k, &mut s, &mut theta);
            push(&mut pieces, transition, sign * k, 0.0, &mut s, &mut theta);
        }
        Road { pieces }
    }

    fn piece(&self, s: f64) -> &Piece {
        let i = self.pieces.partition_point(|p| p.start <= s);
        &self.pieces[i.saturating_sub(1)]
    }
}

/// Node arrays of a sampled road, plus `dκ/ds` at each node.
struct SampledRoad {
    nodes: Vec<CurveNode>,
    kappa_slope: Vec<f64>,
}

fn sample_road(road: &Road, length: f64, ds: f64, speed_at: &dyn Fn(f64) -> f64) -> SampledRoad {
    let n = (length / ds).ceil() as usize + 1;
    let mut nodes = Vec::with_capacity(n);
    let mut slopes = Vec::with_capacity(n);
    let (mut x, mut y) = (0.0, 0.0);
    const SUB: usize = 4;
    for i in 0..n {
        let s = i as f64 * ds;
        if i > 0 {
            let s_prev = (i - 1) as f64 * ds;
            let h = (s - s_prev) / SUB as f64;
            for k in 0..SUB {
                let a = s_prev + k as f64 * h;
                let th = [a, a + 0.5 * h, a + h].map(|q| road.piece(q).theta(q));
                x += h / 6.0 * (th[0].cos() + 4.0 * th[1].cos() + th[2].cos());
                y += h / 6.0 * (th[0].sin() + 4.0 * th[1].sin() + th[2].sin());
            }
        }
        let p = road.piece(s);
        let slope = p.kappa_slope();
        nodes.push(CurveNode::new(s, x, y, p.theta(s), p.kappa(s), speed_at(s) * slope));
        slopes.push(slope);
    }
    SampledRoad {
        nodes,
        kappa_slope: slopes,
    }
}

/// Temporally evolving lateral error field of one section.
struct ErrorField {
    omegas: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    heading: f64,
    curvature: f64,
    unit: OrnsteinUhlenbeck,
    cfg: NoiseConfig,
}

impl ErrorField {
    fn new(cfg: &NoiseConfig, dt: f64, rng: &mut ChaCha8Rng) -> Self {
        let unit = OrnsteinUhlenbeck::new(1.0, cfg.correlation_time, dt);
        let omegas = (0..cfg.modes)
            .map(|_| {
                let w: f64 = StandardNormal.sample(rng);
                w / cfg.correlation_length
            })
            .collect();
        let alpha = (0..cfg.modes).map(|_| unit.initial(rng)).collect();
        let beta = (0..cfg.modes).map(|_| unit.initial(rng)).collect();
        let heading = unit.initial(rng);
        let curvature = unit.initial(rng);
        Self {
            omegas,
            alpha,
            beta,
            heading,
            curvature,
            unit,
            cfg: cfg.clone(),
        }
    }

    fn advance(&mut self, rng: &mut ChaCha8Rng) {
        for a in self.alpha.iter_mut() {
            *a = self.unit.next(*a, rng);
        }
        for b in self.beta.iter_mut() {
            *b = self.unit.next(*b, rng);
        }
        self.heading = self.unit.next(self.heading, rng);
        self.curvature = self.unit.next(self.curvature, rng);
    }

    /// `(e, de/ds, d²e/ds²)` at arc length `s` for a vehicle at `s_vehicle`.
    fn eval(&self, s: f64, s_vehicle: f64) -> (f64, f64, f64) {
        let amp = self.cfg.lateral_sigma / (self.cfg.modes as f64).sqrt();
        let (mut e, mut de, mut dde) = (0.0, 0.0, 0.0);
        for m in 0..self.omegas.len() {
            let w = self.omegas[m];
            let (sn, cs) = (w * s).sin_cos();
            let (a, b) = (self.alpha[m], self.beta[m]);
            e += a * cs + b * sn;
            de += w * (-a * sn + b * cs);
            dde -= w * w * (a * cs + b * sn);
        }
        let u = s - s_vehicle;
        let b = self.cfg.heading_sigma * self.heading;
        let c = self.cfg.curvature_sigma * self.curvature;
        (
            amp * e + b * u + 0.5 * c * u * u,
            amp * de + b + c * u,
            amp * dde + c,
        )
    }
}

/// Estimated curve over the node window `lo..=hi`, displaced by `field`.
fn displaced_curve(
    truth: &SampledRoad,
    lo: usize,
    hi: usize,
    field: &ErrorField,
    s_vehicle: f64,
    speed_at: &dyn Fn(f64) -> f64,
) -> Result<Curve> {
    let count = hi - lo + 1;
    let mut nodes = Vec::with_capacity(count);
    let mut speed_factor = Vec::with_capacity(count);
    let mut kappa_delta = Vec::with_capacity(count);
    for i in lo..=hi {
        let t = truth.nodes[i];
        let (e, de, dde) = field.eval(t.s, s_vehicle);
        let (sn, cs) = t.theta.sin_cos();
        let one = 1.0 - t.kappa * e;
        let speed = one.hypot(de);
        let kappa = (one * (one * t.kappa + dde) + de * (truth.kappa_slope[i] * e + 2.0 * t.kappa * de))
            / speed.powi(3);
        nodes.push(CurveNode::new(
            t.s,
            t.x - e * sn,
            t.y + e * cs,
            t.theta + de.atan2(one),
            kappa,
            0.0,
        ));
        speed_factor.push(speed - 1.0);
        kappa_delta.push(kappa - t.kappa);
    }
    // arc length of the displaced curve, exactly the true one when e == 0
    let mut correction = 0.0;
    for k in 1..count {
        let h = nodes[k].s - truth.nodes[lo + k - 1].s;
        correction += 0.5 * h * (speed_factor[k] + speed_factor[k - 1]);
        nodes[k].s += correction;
    }
    for k in 0..count {
        let (a, b) = (k.saturating_sub(1), (k + 1).min(count - 1));
        let s_true = truth.nodes[lo + k].s;
        let slope_delta = (kappa_delta[b] - kappa_delta[a]) / (truth.nodes[lo + b].s - truth.nodes[lo + a].s);
        nodes[k].kappa_dot = speed_at(s_true) * (truth.kappa_slope[lo + k] + slope_delta);
    }
    Curve::from_nodes(&nodes)
}

fn mix_seed(seed: u64, k: u64) -> u64 {
    // splitmix64 finalizer over (seed, index)
    let mut z = seed ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn generate_section(cfg: &GeneratorConfig, k: usize) -> Result<Section> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, k as u64));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.noise.rng_seed, k as u64));
    let ts = cfg.sample_time;
    let ds = cfg.road.node_spacing;

    let duration = rng.random_range(cfg.duration_range[0]..=cfg.duration_range[1]);
    let steps = ((duration / ts).round() as usize).max(1);
    let [v_lo, v_hi] = cfg.speed_range;
    let v_mean = rng.random_range(v_lo..=v_hi);
    let amplitude = rng.random_range(0.0..=1.0) * (v_mean - v_lo).min(v_hi - v_mean).min(3.0);
    let period = rng.random_range(15.0..60.0);
    let phase = rng.random_range(0.0..2.0 * PI);

    let mut profile = Vec::with_capacity(steps + 1);
    let mut s = cfg.noise.lookbehind + 5.0;
    for j in 0..=steps {
        let t = j as f64 * ts;
        let v = (v_mean + amplitude * (2.0 * PI * t / period + phase).sin()).clamp(v_lo, v_hi);
        profile.push(ProfilePoint { t, v, s });
        s += v * ts;
    }
    let length = profile[steps].s + cfg.noise.lookahead + 10.0 * ds + 10.0;
    let road = Road::generate(&cfg.road, length, &mut rng);

    let speed_at = |s: f64| -> f64 {
        let i = profile.partition_point(|p| p.s <= s);
        if i == 0 {
            profile[0].v
        } else if i == profile.len() {
            profile[profile.len() - 1].v
        } else {
            let (a, b) = (profile[i - 1], profile[i]);
            a.v + (b.v - a.v) * (s - a.s) / (b.s - a.s)
        }
    };
    let truth = sample_road(&road, length, ds, &speed_at);
    let true_curve = Curve::from_nodes(&truth.nodes)?;

    let mut field = ErrorField::new(&cfg.noise, ts, &mut noise_rng);
    let silent = cfg.noise.is_silent();
    let last_node = truth.nodes.len() - 1;
    let mut estimates = Vec::with_capacity(steps);
    for (j, p) in profile.iter().take(steps).enumerate() {
        if j > 0 {
            field.advance(&mut noise_rng);
        }
        let lo = ((p.s - cfg.noise.lookbehind) / ds).floor().max(0.0) as usize;
        let hi = (((p.s + cfg.noise.lookahead) / ds).ceil() as usize).min(last_node);
        let est = if silent {
            Curve::from_nodes(&truth.nodes[lo..=hi])?
        } else {
            displaced_curve(&truth, lo, hi, &field, p.s, &speed_at)?
        };
        estimates.push(est);
    }

    let f0 = true_curve.sample_at(profile[0].s)?;
    let section = Section {
        id: format!("{}{:03}", cfg.id_prefix, k),
        sample_time: ts,
        true_curve,
        estimates,
        profile,
        x0: LateralState::new(0.0, f0.theta_r, f0.kappa_r, f0.kappa_dot_r),
    };
    section.validate(cfg.horizon)?;
    Ok(section)
}

/// Generates `cfg.n_sections` independent sections. Deterministic in the seeds.
pub fn generate_synthetic_dataset(cfg: &GeneratorConfig) -> Result<Dataset> {
    cfg.validate()?;
    let sections = (0..cfg.n_sections)
        .into_par_iter()
        .map(|k| generate_section(cfg, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        sample_time: cfg.sample_time,
        sections,
        meta: serde_json::json!({
            "source": "synthetic",
            "generator": serde_json::to_value(cfg)?,
        }),
    })
}
