//! Differential evolution over the planner's cost function parameters.
//!
//! The genome holds `log10` of the four state weights and the decay factor;
//! the input weight is fixed to 1 since scaling all weights leaves the plan
//! unchanged.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::data::Section;
use crate::error::{Error, Result};
use crate::planner::CostParams;
use crate::simulator::{prepare, run_prepared, simulation_cost, DesiredCostParams, PreparedSection, SimConfig};

pub const LOG_WEIGHT_BOUNDS: [f64; 2] = [-8.0, 8.0];
pub const LAMBDA_BOUNDS: [f64; 2] = [0.5, 1.0];

/// `[log10 w_d, log10 w_theta, log10 w_kappa, log10 w_kappa_dot, lambda]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Genome(pub [f64; 5]);

impl Genome {
    pub fn lower() -> [f64; 5] {
        let l = LOG_WEIGHT_BOUNDS[0];
        [l, l, l, l, LAMBDA_BOUNDS[0]]
    }

    pub fn upper() -> [f64; 5] {
        let u = LOG_WEIGHT_BOUNDS[1];
        [u, u, u, u, LAMBDA_BOUNDS[1]]
    }

    pub fn in_bounds(&self) -> bool {
        let (lo, hi) = (Self::lower(), Self::upper());
        (0..5).all(|i| self.0[i] >= lo[i] && self.0[i] <= hi[i])
    }

    pub fn clamped(&self) -> Self {
        let (lo, hi) = (Self::lower(), Self::upper());
        Genome(std::array::from_fn(|i| self.0[i].clamp(lo[i], hi[i])))
    }

    pub fn decode(&self) -> Result<CostParams> {
        if !self.in_bounds() {
            return Err(Error::InvalidArgument(format!("genome {:?} outside the search box", self.0)));
        }
        let g = &self.0;
        Ok(CostParams {
            theta0: [
                10f64.powf(g[0]),
                10f64.powf(g[1]),
                10f64.powf(g[2]),
                10f64.powf(g[3]),
                1.0,
            ],
            lambda: g[4],
        })
    }

    /// Genome of `cfp` after normalizing its input weight to 1. Errors when
    /// the normalized parameters fall outside the search box.
    pub fn encode(cfp: &CostParams) -> Result<Self> {
        cfp.validate()?;
        let wu = cfp.theta0[4];
        let t = &cfp.theta0;
        let g = Genome([
            (t[0] / wu).log10(),
            (t[1] / wu).log10(),
            (t[2] / wu).log10(),
            (t[3] / wu).log10(),
            cfp.lambda,
        ]);
        if !g.in_bounds() {
            return Err(Error::InvalidArgument(format!(
                "normalized parameters {:?} outside the search box",
                g.0
            )));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeConfig {
    pub population_size: usize,
    /// Differential weight.
    pub f: f64,
    /// Crossover probability.
    pub cr: f64,
    pub max_generations: usize,
    pub rng_seed: u64,
    /// Worker threads for fitness evaluation; 0 uses all cores.
    pub parallel_workers: usize,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            population_size: 50,
            f: 0.8,
            cr: 0.9,
            max_generations: 150,
            rng_seed: 0,
            parallel_workers: 0,
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(Error::InvalidArgument(format!(
                "population must have at least 4 members, got {}",
                self.population_size
            )));
        }
        if !(self.f > 0.0 && self.f <= 2.0) || !(0.0..=1.0).contains(&self.cr) {
            return Err(Error::InvalidArgument(format!(
                "need F in (0, 2] and CR in [0, 1], got F = {}, CR = {}",
                self.f, self.cr
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeResult {
    pub best: Vec<f64>,
    pub best_cost: f64,
    /// Best cost of the initial population, then after every generation.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

fn sanitize(c: f64) -> f64 {
    if c.is_nan() {
        f64::INFINITY
    } else {
        c
    }
}

/// DE/rand/1/bin with greedy one-to-one selection.
///
/// `seeds` are placed first in the initial population; the remaining members
/// are uniform in the box. Trial vectors are clamped to the box. All random
/// draws happen before the parallel evaluation of a generation, so the run
/// is independent of thread scheduling.
pub fn differential_evolution<F>(
    fitness: F,
    lower: &[f64],
    upper: &[f64],
    seeds: &[Vec<f64>],
    cfg: &DeConfig,
) -> Result<DeResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    let dim = lower.len();
    if upper.len() != dim || dim == 0 || (0..dim).any(|i| !(lower[i] <= upper[i])) {
        return Err(Error::InvalidArgument("bad search box".into()));
    }
    if seeds.len() > cfg.population_size || seeds.iter().any(|s| s.len() != dim) {
        return Err(Error::InvalidArgument("bad seed individuals".into()));
    }
    let clamp = |x: &mut Vec<f64>| {
        for i in 0..dim {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let np = cfg.population_size;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut pop: Vec<Vec<f64>> = seeds.to_vec();
    pop.iter_mut().for_each(clamp);
    while pop.len() < np {
        pop.push(
            (0..dim)
                .map(|i| {
                    if upper[i] > lower[i] {
                        rng.random_range(lower[i]..=upper[i])
                    } else {
                        lower[i]
                    }
                })
                .collect(),
        );
    }
    let mut cost: Vec<f64> = pop.par_iter().map(|x| sanitize(fitness(x))).collect();
    let mut evaluations = np;
    let best_of = |cost: &[f64]| {
        let mut b = 0;
        for i in 1..cost.len() {
            if cost[i] < cost[b] {
                b = i;
            }
        }
        b
    };
    let mut history = vec![cost[best_of(&cost)]];
    let others: Vec<usize> = (0..np).collect();

    for _ in 0..cfg.max_generations {
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let mut picks = [0usize; 3];
                let mut k = 0;
                while k < 3 {
                    let r = *others.choose(&mut rng).expect("population is nonempty");
                    if r != i && !picks[..k].contains(&r) {
                        picks[k] = r;
                        k += 1;
                    }
                }
                let [a, b, c] = picks.map(|r| &pop[r]);
                let j_rand = rng.random_range(0..dim);
                let mut trial = pop[i].clone();
                for j in 0..dim {
                    if j == j_rand || rng.random::<f64>() < cfg.cr {
                        trial[j] = a[j] + cfg.f * (b[j] - c[j]);
                    }
                }
                clamp(&mut trial);
                trial
            })
            .collect();
        let trial_cost: Vec<f64> = trials.par_iter().map(|x| sanitize(fitness(x))).collect();
        evaluations += np;
        for (i, (t, c)) in trials.into_iter().zip(trial_cost).enumerate() {
            if c <= cost[i] {
                pop[i] = t;
                cost[i] = c;
            }
        }
        history.push(cost[best_of(&cost)]);
    }
    let b = best_of(&cost);
    Ok(DeResult {
        best: pop[b].clone(),
        best_cost: cost[b],
        history,
        evaluations,
    })
}

/// Total simulation cost of one CFP over a set of sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEvaluation {
    /// Sum of the section costs; infinite if any section failed.
    pub total: f64,
    pub per_section: Vec<f64>,
    /// Ids and messages of failed sections.
    pub failures: Vec<(String, String)>,
    /// Set when there were no sections to evaluate.
    pub empty: bool,
}

pub fn prepare_sections<'a>(sections: &'a [Section], sim: &SimConfig) -> Result<Vec<PreparedSection<'a>>> {
    sections.par_iter().map(|s| prepare(s, sim)).collect()
}

pub fn evaluate_prepared(
    prepared: &[PreparedSection<'_>],
    cfp: &CostParams,
    dcfp: &DesiredCostParams,
    sim: &SimConfig,
) -> CostEvaluation {
    let outcomes: Vec<std::result::Result<f64, String>> = prepared
        .par_iter()
        .map(|p| {
            run_prepared(p, cfp, sim)
                .and_then(|r| simulation_cost(&r, p.section, dcfp))
                .map(|c| c.total)
                .map_err(|e| e.to_string())
        })
        .collect();
    let mut per_section = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (p, o) in prepared.iter().zip(outcomes) {
        match o {
            Ok(c) => per_section.push(c),
            Err(msg) => {
                per_section.push(f64::INFINITY);
                failures.push((p.section.id.clone(), msg));
            }
        }
    }
    let total = if failures.is_empty() {
        per_section.iter().sum()
    } else {
        f64::INFINITY
    };
    if prepared.is_empty() {
        log::warn!("evaluating a CFP on an empty set of sections");
    }
    CostEvaluation {
        total,
        per_section,
        failures,
        empty: prepared.is_empty(),
    }
}

/// Sum of the simulation costs of `cfp` over `sections`.
pub fn evaluate_cfp(
    sections: &[Section],
    cfp: &CostParams,
    dcfp: &DesiredCostParams,
    sim: &SimConfig,
) -> Result<CostEvaluation> {
    cfp.validate()?;
    dcfp.validate()?;
    let prepared = prepare_sections(sections, sim)?;
    Ok(evaluate_prepared(&prepared, cfp, dcfp, sim))
}

/// Starting individual: the desired weights normalized by their input
/// weight, clamped into the box, with no decay.
pub fn seed_genome(dcfp: &DesiredCostParams) -> Genome {
    let p = &dcfp.psi;
    Genome([
        (p[0] / p[4]).log10(),
        (p[1] / p[4]).log10(),
        (p[2] / p[4]).log10(),
        (p[3] / p[4]).log10(),
        1.0,
    ])
    .clamped()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub best_cfp: CostParams,
    pub best_genome: Genome,
    /// Training cost of the best individual.
    pub best_cost: f64,
    /// Training cost of the seed individual.
    pub seed_cost: f64,
    /// Best training cost per generation, starting with the initial population.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub failed_evaluations: usize,
    /// True when the run stopped on the generation limit.
    pub budget_exhausted: bool,
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Minimizes the total training cost over the CFP search box.
pub fn tune(train: &[Section], dcfp: &DesiredCostParams, de: &DeConfig, sim: &SimConfig) -> Result<TuneOutcome> {
    dcfp.validate()?;
    de.validate()?;
    sim.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("tuning needs at least one training section".into()));
    }
    with_workers(de.parallel_workers, || {
        let prepared = prepare_sections(train, sim)?;
        let failed = AtomicUsize::new(0);
        let fitness = |g: &[f64]| {
            let genome = Genome([g[0], g[1], g[2], g[3], g[4]]);
            let Ok(cfp) = genome.decode() else {
                failed.fetch_add(1, Ordering::Relaxed);
                return f64::INFINITY;
            };
            let eval = evaluate_prepared(&prepared, &cfp, dcfp, sim);
            if !eval.failures.is_empty() {
                failed.fetch_add(1, Ordering::Relaxed);
            }
            eval.total
        };
        let seed = seed_genome(dcfp);
        // evaluated undecoded so the tuned cost never exceeds the baseline bitwise
        let seed_cfp = match Genome::encode(&dcfp.normalized_cfp()) {
            Ok(_) => dcfp.normalized_cfp(),
            Err(_) => seed.decode()?,
        };
        let seed_cost = evaluate_prepared(&prepared, &seed_cfp, dcfp, sim).total;
        let result = differential_evolution(
            &fitness,
            &Genome::lower(),
            &Genome::upper(),
            &[seed.0.to_vec()],
            de,
        )?;
        if !result.best_cost.is_finite() {
            return Err(Error::Tuning("every evaluated CFP failed to simulate".into()));
        }
        let mut best_genome = Genome([result.best[0], result.best[1], result.best[2], result.best[3], result.best[4]]);
        let (mut best_cfp, mut best_cost) = (best_genome.decode()?, result.best_cost);
        if seed_cost <= best_cost {
            (best_genome, best_cfp, best_cost) = (seed, seed_cfp, seed_cost);
        }
        Ok(TuneOutcome {
            best_cfp,
            best_genome,
            best_cost,
            seed_cost,
            history: result.history,
            evaluations: result.evaluations + 1,
            failed_evaluations: failed.load(Ordering::Relaxed),
            budget_exhausted: true,
        })
    })?
}

/// JSON report of one tuning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub dcfp: DesiredCostParams,
    pub de: DeConfig,
    pub sim: SimConfig,
    pub train_sections: Vec<String>,
    #[serde(flatten)]
    pub outcome: TuneOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}
