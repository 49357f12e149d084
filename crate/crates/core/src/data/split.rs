//! Section-level train/test split with matched summary statistics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, SectionStats};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
struct Pooled {
    duration: f64,
    speed_sum: f64,
    speed_sq_sum: f64,
    kappa_sum: f64,
}

impl Pooled {
    fn add(&mut self, s: &SectionStats) {
        self.duration += s.duration;
        self.speed_sum += s.duration * s.speed_mean;
        self.speed_sq_sum += s.duration * (s.speed_std.powi(2) + s.speed_mean.powi(2));
        self.kappa_sum += s.duration * s.abs_kappa_mean;
    }

    fn minus(&self, o: &Pooled) -> Pooled {
        Pooled {
            duration: self.duration - o.duration,
            speed_sum: self.speed_sum - o.speed_sum,
            speed_sq_sum: self.speed_sq_sum - o.speed_sq_sum,
            kappa_sum: self.kappa_sum - o.kappa_sum,
        }
    }

    /// (speed mean, speed std, |kappa| mean)
    fn moments(&self) -> [f64; 3] {
        let mean = self.speed_sum / self.duration;
        let var = (self.speed_sq_sum / self.duration - mean * mean).max(0.0);
        [mean, var.sqrt(), self.kappa_sum / self.duration]
    }
}

fn divergence(all: &Pooled, test: &Pooled) -> f64 {
    let train = all.minus(test);
    let (a, b, c) = (all.moments(), train.moments(), test.moments());
    (0..3)
        .map(|i| (b[i] - c[i]).abs() / (a[i].abs() + 1e-12))
        .sum()
}

/// Splits whole sections so the test duration approaches `test_fraction` of
/// the total while the speed and curvature statistics of both parts stay
/// close. Candidates are visited in a seeded order so ties break
/// deterministically.
pub fn split_train_test(dataset: &Dataset, test_fraction: f64, rng_seed: u64) -> Result<(Dataset, Dataset)> {
    let n = dataset.sections.len();
    if n < 2 {
        return Err(Error::InvalidDataset(format!("splitting needs at least 2 sections, got {n}")));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let stats: Vec<SectionStats> = dataset.sections.iter().map(|s| s.stats()).collect();
    let mut all = Pooled::default();
    stats.iter().for_each(|s| all.add(s));
    let target = test_fraction * all.duration;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));

    let mut in_test = vec![false; n];
    let mut test = Pooled::default();
    let mut count = 0;
    while count < n - 1 {
        let gap = (test.duration - target).abs();
        let mut best: Option<(f64, f64, usize, Pooled)> = None;
        for &i in &order {
            if in_test[i] {
                continue;
            }
            let mut cand = test;
            cand.add(&stats[i]);
            let cand_gap = (cand.duration - target).abs();
            let score = cand_gap / target + divergence(&all, &cand);
            if best.as_ref().is_none_or(|b| score < b.0) {
                best = Some((score, cand_gap, i, cand));
            }
        }
        let Some((_, cand_gap, i, cand)) = best else { break };
        if count > 0 && cand_gap >= gap {
            break;
        }
        in_test[i] = true;
        test = cand;
        count += 1;
    }

    let ids = |want: bool| -> Vec<String> {
        dataset
            .sections
            .iter()
            .zip(&in_test)
            .filter(|(_, t)| **t == want)
            .map(|(s, _)| s.id.clone())
            .collect()
    };
    let tag = |mut d: Dataset, role: &str| {
        if let Some(obj) = d.meta.as_object_mut() {
            obj.insert(
                "split".into(),
                serde_json::json!({ "role": role, "test_fraction": test_fraction, "seed": rng_seed }),
            );
        }
        d
    };
    Ok((
        tag(dataset.subset(&ids(false)), "train"),
        tag(dataset.subset(&ids(true)), "test"),
    ))
}
