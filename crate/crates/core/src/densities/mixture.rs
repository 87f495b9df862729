use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::error::{input, Result};
use crate::linalg::{log_sum_exp, sym_eigs};
use crate::rng::{standard_normal, StreamRng};

/// Finite Gaussian mixture Σ w_i N(μ_i, Σ_i), with cached precisions and
/// Cholesky factors.
#[derive(Clone, Debug)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    precisions: Vec<DMatrix<f64>>,
    chol: Vec<DMatrix<f64>>,
    log_norm: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>, covariances: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return input("mixture needs at least one component");
        }
        if means.len() != n || covariances.len() != n {
            return input(format!("mixture has {n} weights but {} means and {} covariances", means.len(), covariances.len()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return input("mixture weights must be finite and nonnegative");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return input(format!("mixture weights sum to {total}, expected 1 within 1e-12"));
        }
        let d = means[0].len();
        if d == 0 {
            return input("mixture dimension must be positive");
        }
        let mut precisions = Vec::with_capacity(n);
        let mut chol = Vec::with_capacity(n);
        let mut log_norm = Vec::with_capacity(n);
        for (i, (m, c)) in means.iter().zip(&covariances).enumerate() {
            if m.len() != d || c.nrows() != d || c.ncols() != d {
                return input(format!("component {i} has inconsistent dimension"));
            }
            if m.iter().chain(c.iter()).any(|v| !v.is_finite()) {
                return input(format!("component {i} has non-finite parameters"));
            }
            let eig = sym_eigs(c)?;
            if eig.min() <= 0.0 {
                return input(format!("covariance {i} is not positive definite (min eigenvalue {})", eig.min()));
            }
            let Some(ch) = Cholesky::<f64, Dyn>::new(c.clone()) else {
                return input(format!("covariance {i} failed Cholesky factorization"));
            };
            let logdet: f64 = 2.0 * ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            log_norm.push(-0.5 * d as f64 * (2.0 * PI).ln() - 0.5 * logdet);
            precisions.push(ch.inverse());
            chol.push(ch.l());
        }
        Ok(Self { weights, means, covariances, precisions, chol, log_norm })
    }

    pub fn gaussian(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![covariance])
    }

    pub fn standard(dim: usize) -> Self {
        Self::gaussian(DVector::zeros(dim), DMatrix::identity(dim, dim)).expect("identity covariance is valid")
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn precisions(&self) -> &[DMatrix<f64>] {
        &self.precisions
    }

    /// Weight-averaged mean.
    pub fn mean(&self) -> DVector<f64> {
        self.weights.iter().zip(&self.means).fold(DVector::zeros(self.dim()), |acc, (w, m)| acc + m * *w)
    }

    /// Log of w_i N(x; μ_i, Σ_i) for every component.
    pub fn component_logs(&self, x: &DVector<f64>) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let dx = x - &self.means[i];
                let q = dx.dot(&(&self.precisions[i] * &dx));
                self.weights[i].ln() + self.log_norm[i] - 0.5 * q
            })
            .collect()
    }

    /// Normalized log-density.
    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        log_sum_exp(&self.component_logs(x))
    }

    /// Posterior component responsibilities at x.
    pub fn responsibilities(&self, x: &DVector<f64>) -> Vec<f64> {
        let logs = self.component_logs(x);
        let lse = log_sum_exp(&logs);
        logs.iter().map(|l| (l - lse).exp()).collect()
    }

    /// ∇ log p(x) = Σ π_i(x) g_i with g_i = −Σ_i⁻¹(x − μ_i).
    pub fn grad_log_pdf(&self, x: &DVector<f64>) -> DVector<f64> {
        let resp = self.responsibilities(x);
        let mut g = DVector::zeros(self.dim());
        for (i, r) in resp.iter().enumerate() {
            if *r > 0.0 {
                g -= (&self.precisions[i] * (x - &self.means[i])) * *r;
            }
        }
        g
    }

    /// ∇² log p(x) = Σ π_i (g_i g_iᵀ − Σ_i⁻¹) − ḡ ḡᵀ, symmetrized.
    pub fn hessian_log_pdf(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let resp = self.responsibilities(x);
        let mut gbar = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        for (i, r) in resp.iter().enumerate() {
            if *r == 0.0 {
                continue;
            }
            let g = -(&self.precisions[i] * (x - &self.means[i]));
            h += (&g * g.transpose() - &self.precisions[i]) * *r;
            gbar += g * *r;
        }
        h -= &gbar * gbar.transpose();
        (&h + h.transpose()) * 0.5
    }

    pub fn sample(&self, rng: &mut StreamRng) -> DVector<f64> {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut k = self.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        &self.means[k] + &self.chol[k] * standard_normal(rng, self.dim())
    }
}
