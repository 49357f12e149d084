//! Multi-set tuning experiment: draw several desired weightings around a
//! calibrated neutral one, tune the planner for each on the training split
//! and compare against using the desired weights directly on both splits.

use serde::{Deserialize, Serialize};

use crate::data::dcfp::{calibrate_neutral_weights, pilot_cfps, random_dcfp};
use crate::data::{split_train_test, Dataset};
use crate::error::{Error, Result};
use crate::planner::CostParams;
use crate::simulator::{run_prepared, DesiredCostParams, SimConfig};
use crate::tuner::{evaluate_prepared, prepare_sections, tune, DeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_sets: usize,
    pub dcfp_seed: u64,
    pub test_fraction: f64,
    pub split_seed: u64,
    /// Neutral weights; calibrated from pilot runs on the training split when absent.
    pub neutral: Option<[f64; 5]>,
    /// DE seed of set `i` is `de.rng_seed + i`.
    pub de: DeConfig,
    pub sim: SimConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_sets: 10,
            dcfp_seed: 1,
            test_fraction: 0.15,
            split_seed: 1,
            neutral: None,
            de: DeConfig::default(),
            sim: SimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub label: String,
    pub dcfp: DesiredCostParams,
    /// Tuned parameters with unit input weight.
    pub optimized_cfp: CostParams,
    /// Tuned parameters rescaled to the input weight of the desired set.
    pub optimized_cfp_scaled: CostParams,
    pub train_cost_baseline: f64,
    pub train_cost_optimized: f64,
    pub test_cost_baseline: f64,
    pub test_cost_optimized: f64,
    pub train_change_pct: f64,
    pub test_change_pct: f64,
    /// Largest |d| over the test split with the tuned parameters.
    pub test_max_abs_d: f64,
    pub history: Vec<f64>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub train_sections: Vec<String>,
    pub test_sections: Vec<String>,
    pub train_duration: f64,
    pub test_duration: f64,
    pub neutral: [f64; 5],
    pub rows: Vec<ExperimentRow>,
    pub mean_train_change_pct: f64,
    pub mean_test_change_pct: f64,
}

/// `(opt - base) / base * 100`; negative is an improvement.
pub fn relative_change_pct(base: f64, opt: f64) -> Result<f64> {
    if !(base > 0.0) || !base.is_finite() {
        return Err(Error::InvalidArgument(format!("baseline cost must be positive, got {base}")));
    }
    Ok((opt - base) / base * 100.0)
}

fn set_label(i: usize) -> String {
    let mut label = String::new();
    let mut k = i;
    loop {
        label.insert(0, (b'A' + (k % 26) as u8) as char);
        if k < 26 {
            break;
        }
        k = k / 26 - 1;
    }
    label
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Runs the experiment on an already split dataset.
pub fn run_experiment_split(train: &Dataset, test: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if train.sections.is_empty() || test.sections.is_empty() {
        return Err(Error::InvalidDataset("experiment needs nonempty train and test splits".into()));
    }
    let neutral = match cfg.neutral {
        Some(n) => n,
        None => calibrate_neutral_weights(&train.sections, &pilot_cfps(), &cfg.sim)?,
    };
    let sets = random_dcfp(cfg.dcfp_seed, cfg.n_sets, &neutral)?;
    let train_prepared = prepare_sections(&train.sections, &cfg.sim)?;
    let test_prepared = prepare_sections(&test.sections, &cfg.sim)?;
    let total = |prepared, cfp: &CostParams, dcfp: &DesiredCostParams| -> Result<f64> {
        let eval = evaluate_prepared(prepared, cfp, dcfp, &cfg.sim);
        match eval.failures.first() {
            Some((id, msg)) => Err(Error::Tuning(format!("section '{id}': {msg}"))),
            None => Ok(eval.total),
        }
    };

    let mut rows = Vec::with_capacity(sets.len());
    for (i, dcfp) in sets.iter().enumerate() {
        let de = DeConfig {
            rng_seed: cfg.de.rng_seed.wrapping_add(i as u64),
            ..cfg.de
        };
        let outcome = tune(&train.sections, dcfp, &de, &cfg.sim)?;
        let baseline = dcfp.normalized_cfp();
        let train_base = total(&train_prepared, &baseline, dcfp)?;
        let test_base = total(&test_prepared, &baseline, dcfp)?;
        let test_opt = total(&test_prepared, &outcome.best_cfp, dcfp)?;
        let mut max_d: f64 = 0.0;
        for p in &test_prepared {
            let r = run_prepared(p, &outcome.best_cfp, &cfg.sim)?;
            max_d = r.states.iter().fold(max_d, |m, x| m.max(x.d.abs()));
        }
        log::info!(
            "set {}: train {:.6e} -> {:.6e}, test {:.6e} -> {:.6e}",
            set_label(i),
            train_base,
            outcome.best_cost,
            test_base,
            test_opt
        );
        rows.push(ExperimentRow {
            label: set_label(i),
            dcfp: *dcfp,
            optimized_cfp: outcome.best_cfp,
            optimized_cfp_scaled: outcome.best_cfp.scaled(dcfp.psi[4]),
            train_cost_baseline: train_base,
            train_cost_optimized: outcome.best_cost,
            test_cost_baseline: test_base,
            test_cost_optimized: test_opt,
            train_change_pct: relative_change_pct(train_base, outcome.best_cost)?,
            test_change_pct: relative_change_pct(test_base, test_opt)?,
            test_max_abs_d: max_d,
            history: outcome.history,
            evaluations: outcome.evaluations,
        });
    }
    Ok(ExperimentReport {
        config: cfg.clone(),
        train_sections: train.sections.iter().map(|s| s.id.clone()).collect(),
        test_sections: test.sections.iter().map(|s| s.id.clone()).collect(),
        train_duration: train.total_duration(),
        test_duration: test.total_duration(),
        neutral,
        mean_train_change_pct: mean(rows.iter().map(|r| r.train_change_pct)),
        mean_test_change_pct: mean(rows.iter().map(|r| r.test_change_pct)),
        rows,
    })
}

/// Splits `dataset` per the configuration and runs the experiment.
pub fn run_experiment(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let (train, test) = split_train_test(dataset, cfg.test_fraction, cfg.split_seed)?;
    run_experiment_split(&train, &test, cfg)
}
