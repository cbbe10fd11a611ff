//! Self-adapting Gaussian search: N(mean, sigma^2 C) with cumulative step-size
//! adaptation and rank-1 plus rank-mu covariance updates.
//!
//! The engine is objective-agnostic. Callers hand back ranking keys for each
//! sampled candidate (higher is better); the update consumes ranks only, so it
//! is invariant to any monotone transformation of the scores. Exact ties share
//! the average of the recombination weights their rank positions span, which
//! makes the update independent of how a sort happens to order equal keys.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest eigenvalue admitted when factorizing the covariance.
const EIG_FLOOR: f64 = 1e-18;
/// Ridge added (scaled by mean eigenvalue) when factorization degenerates.
const REGULARIZATION: f64 = 1e-12;

// --- strategy constants ---

/// Population and recombination constants, fixed for a given (dim, lambda).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaParams {
    pub lambda: usize,
    pub mu: usize,
    /// Positive recombination weights for the best `mu` ranks, summing to 1.
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c1: f64,
    pub c_mu: f64,
    /// E||N(0, I)|| for the search dimension.
    pub chi_n: f64,
}

impl CmaParams {
    /// Default population size 4 + floor(3 ln d).
    pub fn default_lambda(dim: usize) -> usize {
        4 + (3.0 * (dim as f64).ln()).floor() as usize
    }

    pub fn new(dim: usize, lambda: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("search dimension must be positive".into()));
        }
        if lambda < 2 {
            return Err(Error::Config(format!("population size {lambda} below minimum of 2")));
        }
        let d = dim as f64;
        let mu = lambda / 2;
        let mut weights: Vec<f64> =
            (0..mu).map(|i| ((mu as f64) + 0.5).ln() - ((i + 1) as f64).ln()).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (d + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (d + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / d) / (d + 4.0 + 2.0 * mu_eff / d);
        let c1 = 2.0 / ((d + 1.3) * (d + 1.3) + mu_eff);
        let c_mu = (1.0 - c1)
            .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((d + 2.0) * (d + 2.0) + mu_eff));
        let chi_n = d.sqrt() * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d));

        Ok(Self { lambda, mu, weights, mu_eff, c_sigma, d_sigma, c_c, c1, c_mu, chi_n })
    }
}

// --- evolving state ---

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaState {
    dim: usize,
    params: CmaParams,
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    path_sigma: DVector<f64>,
    path_c: DVector<f64>,
    generation: u64,
    restart_flagged: bool,
}

impl CmaState {
    pub fn new(mean: &[f64], sigma: f64, lambda: Option<usize>) -> Result<Self> {
        let dim = mean.len();
        let lambda = lambda.unwrap_or_else(|| CmaParams::default_lambda(dim));
        let params = CmaParams::new(dim, lambda)?;
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::Config(format!("initial step size {sigma} must be positive")));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("initial mean".into()));
        }
        Ok(Self {
            dim,
            params,
            mean: DVector::from_column_slice(mean),
            sigma,
            cov: DMatrix::identity(dim, dim),
            path_sigma: DVector::zeros(dim),
            path_c: DVector::zeros(dim),
            generation: 0,
            restart_flagged: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &CmaParams {
        &self.params
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn restart_flagged(&self) -> bool {
        self.restart_flagged
    }

    /// Ratio of extreme covariance eigenvalues (1 for the identity).
    pub fn condition_number(&self) -> f64 {
        let eig = self.cov.clone().symmetric_eigen();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in eig.eigenvalues.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo <= 0.0 || !hi.is_finite() {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// Draw lambda candidates x = mean + sigma * B sqrt(D) z.
    ///
    /// A degenerate covariance is regularized once with a small ridge; if it
    /// still fails to factor the state is flagged for restart and sampling
    /// falls back to the identity covariance so callers always get a batch.
    pub fn sample(&mut self, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
        let factor = match self.factorize() {
            Some(f) => f,
            None => {
                self.regularize();
                match self.factorize() {
                    Some(f) => f,
                    None => {
                        self.restart_flagged = true;
                        DMatrix::identity(self.dim, self.dim)
                    }
                }
            }
        };
        if !self.sigma.is_finite() || self.sigma <= 0.0 {
            self.restart_flagged = true;
            self.sigma = 1.0;
        }
        (0..self.params.lambda)
            .map(|_| {
                let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                &self.mean + self.sigma * (&factor * z)
            })
            .collect()
    }

    /// B sqrt(D) with eigenvalues clamped to the admissible floor, or None if
    /// the covariance is not usable.
    fn factorize(&self) -> Option<DMatrix<f64>> {
        if self.cov.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let eig = self.cov.clone().symmetric_eigen();
        let max_ev = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max_ev.is_finite() || max_ev <= 0.0 {
            return None;
        }
        // Tiny negative eigenvalues are symmetrization noise and are clamped;
        // substantially negative ones mean the matrix is genuinely broken.
        if eig.eigenvalues.iter().any(|&v| v < -1e-8 * max_ev) {
            return None;
        }
        let sqrt_d =
            DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(EIG_FLOOR).sqrt()));
        Some(&eig.eigenvectors * sqrt_d)
    }

    fn regularize(&mut self) {
        let ridge = REGULARIZATION * (self.cov.trace() / self.dim as f64).abs().max(1.0);
        for i in 0..self.dim {
            self.cov[(i, i)] += ridge;
        }
    }

    /// Update from a batch and per-candidate ranking keys.
    ///
    /// Keys order candidates by `(primary, secondary)` descending; exact key
    /// ties are resolved by averaging the recombination weights across the
    /// tied rank positions, so equal-scored candidates contribute identically
    /// regardless of batch order.
    pub fn update_by_scores(&mut self, batch: &[DVector<f64>], keys: &[(f64, f64)]) -> Result<()> {
        let lambda = self.params.lambda;
        if batch.len() != lambda || keys.len() != lambda {
            return Err(Error::DimensionMismatch {
                expected: lambda,
                got: batch.len().min(keys.len()),
                context: "update batch",
            });
        }
        for x in batch {
            if x.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: x.len(),
                    context: "candidate dimension",
                });
            }
        }

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| {
            keys[b]
                .0
                .total_cmp(&keys[a].0)
                .then(keys[b].1.total_cmp(&keys[a].1))
                .then(a.cmp(&b))
        });

        // Per-candidate effective weights: positional weights, averaged
        // within maximal runs of exactly equal keys.
        let positional =
            |pos: usize| if pos < self.params.mu { self.params.weights[pos] } else { 0.0 };
        let mut w_eff = vec![0.0; lambda];
        let mut start = 0;
        while start < lambda {
            let mut end = start + 1;
            while end < lambda && keys[order[end]] == keys[order[start]] {
                end += 1;
            }
            let avg: f64 = (start..end).map(positional).sum::<f64>() / (end - start) as f64;
            for pos in start..end {
                w_eff[order[pos]] = avg;
            }
            start = end;
        }

        let old_mean = self.mean.clone();
        let mut new_mean = DVector::zeros(self.dim);
        for (i, x) in batch.iter().enumerate() {
            if w_eff[i] > 0.0 {
                new_mean += w_eff[i] * x;
            }
        }
        let y_w = (&new_mean - &old_mean) / self.sigma;

        // C^{-1/2} from the pre-update covariance.
        let eig = self.cov.clone().symmetric_eigen();
        let inv_sqrt = DMatrix::from_diagonal(
            &eig.eigenvalues.map(|v| 1.0 / v.max(EIG_FLOOR).sqrt()),
        );
        let c_inv_sqrt = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();

        let p = &self.params;
        self.generation += 1;
        self.path_sigma = (1.0 - p.c_sigma) * &self.path_sigma
            + (p.c_sigma * (2.0 - p.c_sigma) * p.mu_eff).sqrt() * (&c_inv_sqrt * &y_w);

        let ps_norm = self.path_sigma.norm();
        let decay = 1.0 - (1.0 - p.c_sigma).powi(2 * self.generation as i32);
        let h_sigma = if ps_norm / decay.sqrt() < (1.4 + 2.0 / (self.dim as f64 + 1.0)) * p.chi_n
        {
            1.0
        } else {
            0.0
        };

        self.sigma *= ((p.c_sigma / p.d_sigma) * (ps_norm / p.chi_n - 1.0)).exp();

        self.path_c = (1.0 - p.c_c) * &self.path_c
            + h_sigma * (p.c_c * (2.0 - p.c_c) * p.mu_eff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::zeros(self.dim, self.dim);
        for (i, x) in batch.iter().enumerate() {
            if w_eff[i] > 0.0 {
                let y = (x - &old_mean) / self.sigma;
                rank_mu += w_eff[i] * (&y * y.transpose());
            }
        }
        let delta_h = (1.0 - h_sigma) * p.c_c * (2.0 - p.c_c);
        self.cov = (1.0 - p.c1 - p.c_mu + p.c1 * delta_h) * &self.cov
            + p.c1 * (&self.path_c * self.path_c.transpose())
            + p.c_mu * rank_mu;
        // Keep C exactly symmetric against drift.
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;

        self.mean = new_mean;

        if !self.sigma.is_finite()
            || self.mean.iter().any(|v| !v.is_finite())
            || self.cov.iter().any(|v| !v.is_finite())
        {
            self.restart_flagged = true;
        }
        Ok(())
    }

    /// Update from candidates already sorted best-first.
    pub fn update_ranked(&mut self, ranked: &[DVector<f64>]) -> Result<()> {
        let keys: Vec<(f64, f64)> =
            (0..ranked.len()).map(|i| ((ranked.len() - i) as f64, 0.0)).collect();
        self.update_by_scores(ranked, &keys)
    }

    /// Whether the strategy should be re-anchored: numerical failure, a
    /// generation with no archive improvement, collapsed step size, or an
    /// ill-conditioned covariance.
    pub fn should_restart(&self, improvements: &[f64]) -> bool {
        self.restart_flagged
            || improvements.iter().all(|&d| d <= 0.0)
            || self.sigma < 1e-12
            || self.condition_number() > 1e14
    }
}
