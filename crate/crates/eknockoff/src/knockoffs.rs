//! Gaussian model-X knockoff construction.
//!
//! A [`CovarianceModel`] holds the mean and covariance of the covariates,
//! either supplied or estimated from data. A [`KnockoffSampler`] precomputes
//! the conditional transform `A = I - Sigma^{-1} diag{s}` and a Cholesky
//! factor of the conditional covariance
//! `V = 2 diag{s} - diag{s} Sigma^{-1} diag{s}`, then draws knockoff rows as
//! `x~ = mu + (x - mu) A + z L^T` with standard normal `z`. The joint
//! covariance of `(x, x~)` is
//! `G = [[Sigma, Sigma - diag{s}], [Sigma - diag{s}, Sigma]]`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::DataMatrix;
use crate::error::{Error, Result};

/// Default minimum-eigenvalue floor applied when estimating a covariance.
pub const DEFAULT_MIN_EIG_FLOOR: f64 = 1e-6;

/// Uniform shrink applied to the equicorrelated swap vector so the
/// conditional covariance stays strictly factorizable.
const S_SHRINK: f64 = 1.0 - 1e-6;

/// Absolute tolerance for the symmetry check on supplied covariances.
const SYMMETRY_TOL: f64 = 1e-10;

/// Largest allowed reconstruction error of the stored Cholesky factor.
const FACTOR_TOL: f64 = 1e-8;

/// Mean and covariance of the covariate distribution.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    mean: DVector<f64>,
    sigma: DMatrix<f64>,
    regularization: f64,
}

impl CovarianceModel {
    /// Validates and wraps a covariance model. `sigma` must be square with
    /// finite entries, symmetric within `1e-10`, and positive definite.
    pub fn new(mean: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        Self::with_regularization(mean, sigma, 0.0)
    }

    /// Like [`CovarianceModel::new`], recording the diagonal inflation that
    /// was already applied to `sigma`.
    pub fn with_regularization(
        mean: DVector<f64>,
        sigma: DMatrix<f64>,
        regularization: f64,
    ) -> Result<Self> {
        let p = sigma.nrows();
        if p == 0 || sigma.ncols() != p {
            return Err(Error::InvalidInput(format!(
                "covariance must be square and non-empty, got {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if mean.len() != p {
            return Err(Error::InvalidInput(format!(
                "mean length {} does not match covariance dimension {p}",
                mean.len()
            )));
        }
        if mean.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "covariance model contains non-finite entries".into(),
            ));
        }
        if regularization < 0.0 || !regularization.is_finite() {
            return Err(Error::InvalidInput(
                "regularization must be non-negative".into(),
            ));
        }
        let asym = (&sigma - sigma.transpose()).abs().max();
        if asym > SYMMETRY_TOL {
            return Err(Error::InvalidInput(format!(
                "covariance is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        if Cholesky::new(sigma.clone()).is_none() {
            return Err(Error::Construction(
                "covariance is not positive definite".into(),
            ));
        }
        Ok(Self {
            mean,
            sigma,
            regularization,
        })
    }

    /// Estimates mean and covariance from data. The covariance is
    /// `(1/n) Xc^T Xc` with centered columns `Xc`; if its smallest eigenvalue
    /// falls below `min_eig_floor`, the diagonal is inflated just enough to
    /// reach the floor.
    pub fn estimate(x: &DataMatrix, min_eig_floor: f64) -> Result<Self> {
        if min_eig_floor < 0.0 || !min_eig_floor.is_finite() {
            return Err(Error::InvalidInput(
                "minimum-eigenvalue floor must be a non-negative real".into(),
            ));
        }
        let n = x.nrows();
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "covariance estimation needs at least 2 rows, got {n}"
            )));
        }
        let mean = x.column_means();
        let mut centered = x.as_matrix().clone();
        for j in 0..centered.ncols() {
            centered.column_mut(j).add_scalar_mut(-mean[j]);
        }
        let mut raw = centered.transpose() * &centered / n as f64;
        symmetrize(&mut raw);
        let lambda_min = raw
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let delta = (min_eig_floor - lambda_min).max(0.0);
        if delta > 0.0 {
            for j in 0..raw.nrows() {
                raw[(j, j)] += delta;
            }
        }
        Self::with_regularization(mean, raw, delta)
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Diagonal inflation applied during estimation (zero for supplied models).
    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    /// Equicorrelated swap vector: on the correlation scale every feature
    /// gets `min(2 lambda_min, 1)` shrunk by `1 - 1e-6`, rescaled by the
    /// marginal variances. This keeps the conditional covariance positive
    /// semidefinite without a semidefinite-programming solver.
    pub fn equicorrelated_s(&self) -> Result<DVector<f64>> {
        let p = self.dim();
        let inv_sd = DVector::from_fn(p, |j, _| 1.0 / self.sigma[(j, j)].sqrt());
        let mut corr = self.sigma.clone();
        for j in 0..p {
            for i in 0..p {
                corr[(i, j)] *= inv_sd[i] * inv_sd[j];
            }
        }
        let lambda_min = corr
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if lambda_min <= 0.0 {
            return Err(Error::Internal(format!(
                "correlation matrix has non-positive smallest eigenvalue {lambda_min:.3e}"
            )));
        }
        let s_corr = (2.0 * lambda_min).min(1.0) * S_SHRINK;
        Ok(DVector::from_fn(p, |j, _| s_corr * self.sigma[(j, j)]))
    }
}

/// Immutable Gaussian knockoff generator.
#[derive(Debug, Clone)]
pub struct KnockoffSampler {
    model: CovarianceModel,
    s: DVector<f64>,
    cond_transform: DMatrix<f64>,
    cond_cov_factor: DMatrix<f64>,
}

impl KnockoffSampler {
    /// Precomputes the conditional transform and the Cholesky factor of the
    /// conditional covariance. If the factorization fails, diagonal jitter of
    /// `1e-10 * trace(V) / p` is added and escalated tenfold at most three
    /// times before giving up.
    pub fn new(model: CovarianceModel, s: DVector<f64>) -> Result<Self> {
        let p = model.dim();
        if s.len() != p {
            return Err(Error::InvalidInput(format!(
                "swap vector length {} does not match dimension {p}",
                s.len()
            )));
        }
        if s.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
            return Err(Error::Construction(
                "swap vector entries must be strictly positive".into(),
            ));
        }
        let sigma_inv = Cholesky::new(model.sigma().clone())
            .ok_or_else(|| Error::Construction("covariance failed factorization".into()))?
            .inverse();
        // A = I - Sigma^{-1} diag{s}, applied on the right of row vectors.
        let mut cond_transform = DMatrix::identity(p, p);
        for j in 0..p {
            for i in 0..p {
                cond_transform[(i, j)] -= sigma_inv[(i, j)] * s[j];
            }
        }
        // V = 2 diag{s} - diag{s} Sigma^{-1} diag{s}
        let mut v = DMatrix::from_fn(p, p, |i, j| -s[i] * sigma_inv[(i, j)] * s[j]);
        for j in 0..p {
            v[(j, j)] += 2.0 * s[j];
        }
        symmetrize(&mut v);

        let base_jitter = 1e-10 * v.trace() / p as f64;
        let mut factor = None;
        for attempt in 0..4 {
            let mut candidate = v.clone();
            if attempt > 0 {
                let jitter = base_jitter * 10f64.powi(attempt - 1);
                for j in 0..p {
                    candidate[(j, j)] += jitter;
                }
            }
            if let Some(chol) = Cholesky::new(candidate.clone()) {
                let l = chol.l();
                let recon_err = (&l * l.transpose() - &candidate).abs().max();
                if recon_err <= FACTOR_TOL {
                    factor = Some(l);
                    break;
                }
            }
        }
        let cond_cov_factor = factor.ok_or_else(|| {
            let lambda_min = v
                .symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            Error::Construction(format!(
                "conditional covariance failed factorization; smallest eigenvalue {lambda_min:.6e}"
            ))
        })?;

        Ok(Self {
            model,
            s,
            cond_transform,
            cond_cov_factor,
        })
    }

    pub fn model(&self) -> &CovarianceModel {
        &self.model
    }

    pub fn s(&self) -> &DVector<f64> {
        &self.s
    }

    /// The matrix `A = I - Sigma^{-1} diag{s}`.
    pub fn cond_transform(&self) -> &DMatrix<f64> {
        &self.cond_transform
    }

    /// Lower-triangular `L` with `L L^T = V`.
    pub fn cond_cov_factor(&self) -> &DMatrix<f64> {
        &self.cond_cov_factor
    }

    /// Samples the knockoff copy of every row of `x`:
    /// `x~_i = mu + (x_i - mu) A + z_i L^T` with `z_i` standard normal.
    /// The same `(sampler, x, rng state)` always yields the same matrix.
    pub fn sample<R: Rng + ?Sized>(&self, x: &DataMatrix, rng: &mut R) -> Result<DataMatrix> {
        let p = self.model.dim();
        if x.ncols() != p {
            return Err(Error::InvalidInput(format!(
                "data has {} columns but the sampler expects {p}",
                x.ncols()
            )));
        }
        let n = x.nrows();
        let mean = self.model.mean();
        let mut centered = x.as_matrix().clone();
        for j in 0..p {
            centered.column_mut(j).add_scalar_mut(-mean[j]);
        }
        let mut knock = centered * &self.cond_transform;
        for j in 0..p {
            knock.column_mut(j).add_scalar_mut(mean[j]);
        }
        // Noise drawn row-major so output is independent of matrix layout.
        let z: DMatrix<f64> =
            DMatrix::from_row_iterator(n, p, (0..n * p).map(|_| rng.sample(StandardNormal)));
        knock += z * self.cond_cov_factor.transpose();
        DataMatrix::new(knock)
    }

    /// Joint covariance of `(x, x~)`:
    /// `[[Sigma, Sigma - diag{s}], [Sigma - diag{s}, Sigma]]`.
    pub fn joint_covariance(&self) -> DMatrix<f64> {
        let p = self.model.dim();
        let sigma = self.model.sigma();
        let mut g = DMatrix::zeros(2 * p, 2 * p);
        for j in 0..p {
            for i in 0..p {
                let off = sigma[(i, j)] - if i == j { self.s[i] } else { 0.0 };
                g[(i, j)] = sigma[(i, j)];
                g[(i + p, j + p)] = sigma[(i, j)];
                g[(i, j + p)] = off;
                g[(i + p, j)] = off;
            }
        }
        g
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for j in 0..p {
        for i in 0..j {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}
