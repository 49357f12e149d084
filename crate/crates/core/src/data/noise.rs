//! Correlated noise used to synthesize perception errors.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stationary Ornstein-Uhlenbeck process sampled on a fixed time grid.
///
/// Uses the exact discretization `x' = rho x + sigma sqrt(1 - rho^2) w` with
/// `rho = exp(-dt / tau)`, so the stationary standard deviation is `sigma`
/// and the autocorrelation at lag `k dt` is `rho^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrnsteinUhlenbeck {
    rho: f64,
    sigma: f64,
}

impl OrnsteinUhlenbeck {
    /// `tau` is the correlation time, `dt` the sample interval.
    pub fn new(sigma: f64, tau: f64, dt: f64) -> Self {
        Self {
            rho: (-dt / tau).exp(),
            sigma,
        }
    }

    pub fn correlation(&self) -> f64 {
        self.rho
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Draw from the stationary distribution.
    pub fn initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let w: f64 = StandardNormal.sample(rng);
        self.sigma * w
    }

    pub fn next<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let w: f64 = StandardNormal.sample(rng);
        self.rho * x + self.sigma * (1.0 - self.rho * self.rho).sqrt() * w
    }

    /// A path of `n` samples started from the stationary distribution.
    pub fn path<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        if n == 0 {
            return out;
        }
        let mut x = self.initial(rng);
        out.push(x);
        for _ in 1..n {
            x = self.next(x, rng);
            out.push(x);
        }
        out
    }
}
