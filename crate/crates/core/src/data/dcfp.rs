//! Randomized desired cost parameters around a neutral weighting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::Section;
use crate::error::{Error, Result};
use crate::planner::CostParams;
use crate::simulator::{desired_trajectory, run_closed_loop, DesiredCostParams, SimConfig};

/// Range of the multiplicative factors applied to the neutral weights.
pub const FACTOR_RANGE: [f64; 2] = [0.25, 4.0];

/// `n_sets` weight vectors `neutral ⊙ f`, each factor log-uniform in [`FACTOR_RANGE`].
pub fn random_dcfp(rng_seed: u64, n_sets: usize, neutral: &[f64; 5]) -> Result<Vec<DesiredCostParams>> {
    DesiredCostParams::new(*neutral)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (lo, hi) = (FACTOR_RANGE[0].ln(), FACTOR_RANGE[1].ln());
    Ok((0..n_sets)
        .map(|_| {
            let mut psi = *neutral;
            for w in psi.iter_mut() {
                *w *= rng.random_range(lo..=hi).exp();
            }
            DesiredCostParams { psi }
        })
        .collect())
}

/// Planner weights used for the pilot runs of [`calibrate_neutral_weights`].
pub fn pilot_cfps() -> Vec<CostParams> {
    let base = [10.0, 1e4, 1e6, 1e5, 1e4];
    [
        (1.0, [1.0; 5]),
        (1.0, [10.0, 1.0, 1.0, 1.0, 1.0]),
        (1.0, [0.1, 1.0, 1.0, 1.0, 1.0]),
        (0.97, [1.0, 10.0, 1.0, 0.1, 1.0]),
        (0.97, [1.0, 0.1, 10.0, 10.0, 1.0]),
    ]
    .into_iter()
    .map(|(lambda, f)| CostParams {
        theta0: std::array::from_fn(|i| base[i] * f[i] / (base[4] * f[4])),
        lambda,
    })
    .collect()
}

/// Inverse mean squared deviation of each state from its desired value, and
/// of the input from zero, over closed-loop runs with each pilot CFP.
pub fn calibrate_neutral_weights(
    sections: &[Section],
    pilots: &[CostParams],
    cfg: &SimConfig,
) -> Result<[f64; 5]> {
    if sections.is_empty() || pilots.is_empty() {
        return Err(Error::InvalidArgument("calibration needs sections and pilot CFPs".into()));
    }
    let jobs: Vec<(&Section, &CostParams)> = pilots
        .iter()
        .flat_map(|c| sections.iter().map(move |s| (s, c)))
        .collect();
    let sums = jobs
        .par_iter()
        .map(|(section, cfp)| -> Result<([f64; 5], [usize; 2])> {
            let result = run_closed_loop(section, cfp, cfg)?;
            let desired = desired_trajectory(section)?;
            let mut acc = [0.0; 5];
            for (x, xd) in result.states.iter().zip(&desired) {
                let e = x.to_vector() - xd;
                for i in 0..4 {
                    acc[i] += e[i] * e[i];
                }
            }
            acc[4] = result.inputs.iter().map(|u| u * u).sum();
            Ok((acc, [result.states.len(), result.inputs.len()]))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = [0.0; 5];
    let mut counts = [0usize; 2];
    for (acc, n) in &sums {
        for i in 0..5 {
            total[i] += acc[i];
        }
        counts[0] += n[0];
        counts[1] += n[1];
    }
    let mut neutral = [0.0; 5];
    for i in 0..5 {
        let n = if i < 4 { counts[0] } else { counts[1] };
        let var = total[i] / n as f64;
        if !(var > 0.0) || !var.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "pilot runs show no deviation in component {i}; cannot calibrate"
            )));
        }
        neutral[i] = 1.0 / var;
    }
    Ok(neutral)
}
