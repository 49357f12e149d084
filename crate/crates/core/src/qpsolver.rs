//! Dense convex QP with box constraints:
//!
//! ```text
//! minimize   ½ uᵀ H u + gᵀ u
//! subject to lb ≤ u ≤ ub
//! ```
//!
//! Solved with a primal active-set method. Every iterate is feasible, the
//! objective never increases and the method is deterministic. The reduced
//! Newton system on the free variables is refactorized with a dense Cholesky
//! at every working-set change, which is cheap at the horizon lengths used
//! here (N around 30).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Condensed box-constrained QP.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
    /// Constant dropped from the objective; `value` adds it back.
    pub constant: f64,
}

impl BoxQp {
    pub fn new(h: DMatrix<f64>, g: DVector<f64>, lb: DVector<f64>, ub: DVector<f64>) -> Self {
        Self {
            h,
            g,
            lb,
            ub,
            constant: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    /// `½ uᵀHu + gᵀu`.
    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.h * u)) + self.g.dot(u)
    }

    /// Objective including the dropped constant.
    pub fn value(&self, u: &DVector<f64>) -> f64 {
        self.objective(u) + self.constant
    }

    pub fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.h * u + &self.g
    }

    /// `max(1, max_i H_ii)`. Residuals are measured on the objective divided
    /// by this, so they do not grow with the overall weight magnitude.
    pub fn scale(&self) -> f64 {
        (0..self.dim()).map(|i| self.h[(i, i)]).fold(1.0, f64::max)
    }

    /// `‖u − Π(u − ∇f(u) / scale)‖∞`, zero exactly at the optimum.
    pub fn kkt_residual(&self, u: &DVector<f64>) -> f64 {
        let grad = self.gradient(u);
        let scale = self.scale();
        (0..self.dim())
            .map(|i| (u[i] - (u[i] - grad[i] / scale).clamp(self.lb[i], self.ub[i])).abs())
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.h.nrows() != n || self.h.ncols() != n || self.lb.len() != n || self.ub.len() != n
        {
            return Err(Error::DimensionMismatch(format!(
                "H is {}x{}, g {}, lb {}, ub {}",
                self.h.nrows(),
                self.h.ncols(),
                n,
                self.lb.len(),
                self.ub.len()
            )));
        }
        for i in 0..n {
            if !(self.lb[i] <= self.ub[i]) {
                return Err(Error::InvalidArgument(format!(
                    "bound {i}: lb {} > ub {}",
                    self.lb[i], self.ub[i]
                )));
            }
            if !self.g[i].is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite g[{i}]")));
            }
            for j in 0..i {
                let (a, b) = (self.h[(i, j)], self.h[(j, i)]);
                if !a.is_finite() || (a - b).abs() > 1e-12 * (a.abs() + b.abs()) {
                    return Err(Error::InvalidArgument(format!("H not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QpConfig {
    pub tol_kkt: f64,
    pub max_iter: usize,
}

impl Default for QpConfig {
    fn default() -> Self {
        Self {
            tol_kkt: 1e-9,
            max_iter: 10_000,
        }
    }
}

impl QpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_kkt > 0.0) || self.max_iter < 1 {
            return Err(Error::InvalidArgument(format!("bad QP config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: DVector<f64>,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    /// Objective after each accepted iterate, starting from the initial point.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Reusable scratch buffers. One workspace per worker.
#[derive(Debug, Default, Clone)]
pub struct QpWorkspace {
    chol: Vec<f64>,
    rhs: Vec<f64>,
    free: Vec<usize>,
    status: Vec<Bound>,
}

impl QpWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Solves `qp`, optionally starting from `warm` (clamped into the box).
    pub fn solve(
        &mut self,
        qp: &BoxQp,
        cfg: &QpConfig,
        warm: Option<&[f64]>,
    ) -> Result<QpSolution> {
        qp.validate()?;
        cfg.validate()?;
        let n = qp.dim();
        if let Some(w) = warm {
            if w.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "warm start has {} entries, QP has {n}",
                    w.len()
                )));
            }
        }
        let mut u = DVector::from_fn(n, |i, _| {
            warm.map_or(0.0, |w| w[i]).clamp(qp.lb[i], qp.ub[i])
        });
        self.status.clear();
        self.status.extend((0..n).map(|i| {
            if u[i] == qp.lb[i] {
                Bound::Lower
            } else if u[i] == qp.ub[i] {
                Bound::Upper
            } else {
                Bound::Free
            }
        }));

        // multipliers within this margin count as nonnegative
        let release_tol = 1e-2 * cfg.tol_kkt * qp.scale();
        let mut trace = vec![qp.objective(&u)];
        let mut at_subspace_optimum = false;
        let mut refinements = 0usize;
        let mut iterations = 0usize;
        // the Cholesky factor matches the current free set
        let mut factored = false;

        while iterations < cfg.max_iter {
            iterations += 1;
            let grad = qp.gradient(&u);
            if at_subspace_optimum {
                let free_err = (0..n)
                    .filter(|&i| self.status[i] == Bound::Free)
                    .map(|i| grad[i].abs())
                    .fold(0.0, f64::max);
                if free_err > release_tol && refinements < 3 {
                    refinements += 1;
                    at_subspace_optimum = false;
                    continue;
                }
                // most violated multiplier, lowest index on ties
                let mut worst: Option<(usize, f64)> = None;
                for i in 0..n {
                    let violation = match self.status[i] {
                        Bound::Lower if qp.lb[i] < qp.ub[i] => -grad[i],
                        Bound::Upper if qp.lb[i] < qp.ub[i] => grad[i],
                        _ => continue,
                    };
                    if violation > release_tol && worst.is_none_or(|(_, w)| violation > w) {
                        worst = Some((i, violation));
                    }
                }
                match worst {
                    None => break,
                    Some((i, _)) => {
                        self.status[i] = Bound::Free;
                        factored = false;
                        at_subspace_optimum = false;
                        refinements = 0;
                        continue;
                    }
                }
            }

            // Newton step on the free variables
            self.free.clear();
            self.free
                .extend((0..n).filter(|&i| self.status[i] == Bound::Free));
            let nf = self.free.len();
            if nf == 0 {
                at_subspace_optimum = true;
                continue;
            }
            if !factored {
                self.factor_free(qp)?;
                factored = true;
            }
            self.rhs.clear();
            self.rhs.extend(self.free.iter().map(|&i| -grad[i]));
            self.cholesky_solve();

            let mut alpha = 1.0;
            let mut blocking: Option<(usize, Bound)> = None;
            for (k, &i) in self.free.iter().enumerate() {
                let p = self.rhs[k];
                let (limit, side) = if p < 0.0 {
                    ((qp.lb[i] - u[i]) / p, Bound::Lower)
                } else if p > 0.0 {
                    ((qp.ub[i] - u[i]) / p, Bound::Upper)
                } else {
                    continue;
                };
                if limit < alpha {
                    alpha = limit.max(0.0);
                    blocking = Some((i, side));
                }
            }
            for (k, &i) in self.free.iter().enumerate() {
                u[i] = (u[i] + alpha * self.rhs[k]).clamp(qp.lb[i], qp.ub[i]);
            }
            match blocking {
                Some((i, side)) => {
                    u[i] = if side == Bound::Lower { qp.lb[i] } else { qp.ub[i] };
                    self.status[i] = side;
                    factored = false;
                    at_subspace_optimum = false;
                    refinements = 0;
                }
                None => at_subspace_optimum = true,
            }
            trace.push(qp.objective(&u));
        }

        let residual = qp.kkt_residual(&u);
        if residual > cfg.tol_kkt || !residual.is_finite() {
            return Err(Error::QpNotConverged {
                iterations,
                residual,
                best: u.iter().copied().collect(),
            });
        }
        Ok(QpSolution {
            objective: qp.objective(&u),
            u,
            iterations,
            kkt_residual: residual,
            objective_trace: trace,
        })
    }

    /// Cholesky factor (lower, row-major, `nf x nf`) of `H[free, free]`.
    fn factor_free(&mut self, qp: &BoxQp) -> Result<()> {
        let nf = self.free.len();
        self.chol.clear();
        self.chol.resize(nf * nf, 0.0);
        for r in 0..nf {
            for c in 0..=r {
                let mut sum = qp.h[(self.free[r], self.free[c])];
                for k in 0..c {
                    sum -= self.chol[r * nf + k] * self.chol[c * nf + k];
                }
                if r == c {
                    if !(sum > 0.0) {
                        return Err(Error::NotPositiveDefinite);
                    }
                    self.chol[r * nf + r] = sum.sqrt();
                } else {
                    self.chol[r * nf + c] = sum / self.chol[c * nf + c];
                }
            }
        }
        Ok(())
    }

    fn cholesky_solve(&mut self) {
        let nf = self.free.len();
        for r in 0..nf {
            let mut sum = self.rhs[r];
            for k in 0..r {
                sum -= self.chol[r * nf + k] * self.rhs[k];
            }
            self.rhs[r] = sum / self.chol[r * nf + r];
        }
        for r in (0..nf).rev() {
            let mut sum = self.rhs[r];
            for k in r + 1..nf {
                sum -= self.chol[k * nf + r] * self.rhs[k];
            }
            self.rhs[r] = sum / self.chol[r * nf + r];
        }
    }
}

/// Solves a box QP from a cold start.
pub fn solve_box_qp(qp: &BoxQp, cfg: &QpConfig) -> Result<QpSolution> {
    QpWorkspace::new().solve(qp, cfg, None)
}
