//! Per-feature importance statistics and exact binomial p-values.
//!
//! The error-difference statistic counts, over a held-out split of size
//! `n2`, how often swapping one feature for its knockoff increases the
//! absolute prediction error: `W_j = (#{T_i^j > 0}) / n2 - 0.5`. Under the
//! null the count is Binomial(n2, 1/2), which yields exact two-sided
//! sign-test p-values. The lasso-coefficient-difference statistic
//! `|beta_j| - |beta_{j+p}|` from a fit on the original-knockoff
//! concatenation is provided as the coefficient-based alternative.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::{DataMatrix, ResponseVector};
use crate::error::{Error, Result};
use crate::predictors::{FittedPredictor, PredictorSpec};
use crate::seeds::derive_seed;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Tolerance for the `n2 (w + 0.5)` integrality check.
const GRANULARITY_TOL: f64 = 1e-9;

/// Which statistic a [`ImportanceVector`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    ErrorBased,
    Lcd,
}

/// Per-feature importance values. Error-based values lie in `[-0.5, 0.5]`
/// with granularity `1/n2`; lasso-coefficient differences are unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceVector {
    values: DVector<f64>,
    kind: StatisticKind,
    n2: Option<usize>,
}

impl ImportanceVector {
    pub fn error_based(values: DVector<f64>, n2: usize) -> Result<Self> {
        if n2 == 0 {
            return Err(Error::InvalidInput("scoring-split size must be positive".into()));
        }
        for (j, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < -0.5 || *v > 0.5 {
                return Err(Error::InvalidInput(format!(
                    "importance value {v} at feature {j} is outside [-0.5, 0.5]"
                )));
            }
            let count = n2 as f64 * (v + 0.5);
            if (count - count.round()).abs() > GRANULARITY_TOL {
                return Err(Error::InvalidInput(format!(
                    "importance value {v} at feature {j} is not on the 1/{n2} grid"
                )));
            }
        }
        Ok(Self {
            values,
            kind: StatisticKind::ErrorBased,
            n2: Some(n2),
        })
    }

    pub fn lcd(values: DVector<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "importance vector contains non-finite values".into(),
            ));
        }
        Ok(Self {
            values,
            kind: StatisticKind::Lcd,
            n2: None,
        })
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn kind(&self) -> StatisticKind {
        self.kind
    }

    /// Scoring-split size; present only for the error-based statistic.
    pub fn n2(&self) -> Option<usize> {
        self.n2
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-feature p-values in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueVector {
    values: DVector<f64>,
}

impl PValueVector {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        for (j, v) in values.iter().enumerate() {
            if !(*v > 0.0 && *v <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "p-value {v} at feature {j} is outside (0, 1]"
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How to count observations where the error difference is exactly at the
/// tolerance boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMode {
    /// A tied observation counts as a fair-coin success, restoring the exact
    /// Binomial(n2, 1/2) null even for predictors that ignore a feature.
    Randomized,
    /// A tied observation never counts (the strict `T > 0` indicator).
    Strict,
}

/// Tie handling for the error-difference statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TieRule {
    pub mode: TieMode,
    /// Differences within `[-tolerance, tolerance]` are treated as ties.
    pub tolerance: f64,
}

impl Default for TieRule {
    fn default() -> Self {
        TieRule {
            mode: TieMode::Randomized,
            tolerance: 0.0,
        }
    }
}

impl TieRule {
    pub fn strict() -> Self {
        TieRule {
            mode: TieMode::Strict,
            tolerance: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tolerance < 0.0 || !self.tolerance.is_finite() {
            return Err(Error::InvalidInput(
                "tie tolerance must be a non-negative real".into(),
            ));
        }
        Ok(())
    }
}

/// Returns `x` with column `j` replaced by the matching knockoff column.
pub fn replace_feature(x: &DataMatrix, x_knock: &DataMatrix, j: usize) -> Result<DataMatrix> {
    if x.nrows() != x_knock.nrows() || x.ncols() != x_knock.ncols() {
        return Err(Error::InvalidInput(format!(
            "data is {}x{} but the knockoff copy is {}x{}",
            x.nrows(),
            x.ncols(),
            x_knock.nrows(),
            x_knock.ncols()
        )));
    }
    if j >= x.ncols() {
        return Err(Error::InvalidInput(format!(
            "feature index {j} out of range for {} columns",
            x.ncols()
        )));
    }
    let mut m = x.as_matrix().clone();
    m.set_column(j, &x_knock.as_matrix().column(j));
    DataMatrix::new(m)
}

/// Error-difference importance over the scoring split. For each feature the
/// rows are scored with that feature swapped for its knockoff, and `W_j` is
/// the centered fraction of rows whose absolute error grew. Per-feature loops
/// run on rayon when the `parallel` feature is enabled; each feature draws
/// tie-breaking coins from its own derived stream, so results are identical
/// regardless of scheduling.
pub fn error_importance<R: Rng + ?Sized>(
    f: &FittedPredictor,
    x2: &DataMatrix,
    y2: &ResponseVector,
    x2_knock: &DataMatrix,
    tie_rule: TieRule,
    rng: &mut R,
) -> Result<ImportanceVector> {
    error_importance_impl(f, x2, y2, x2_knock, tie_rule, rng, true)
}

/// Sequential variant of [`error_importance`]; same results.
pub fn error_importance_sequential<R: Rng + ?Sized>(
    f: &FittedPredictor,
    x2: &DataMatrix,
    y2: &ResponseVector,
    x2_knock: &DataMatrix,
    tie_rule: TieRule,
    rng: &mut R,
) -> Result<ImportanceVector> {
    error_importance_impl(f, x2, y2, x2_knock, tie_rule, rng, false)
}

fn error_importance_impl<R: Rng + ?Sized>(
    f: &FittedPredictor,
    x2: &DataMatrix,
    y2: &ResponseVector,
    x2_knock: &DataMatrix,
    tie_rule: TieRule,
    rng: &mut R,
    parallel: bool,
) -> Result<ImportanceVector> {
    tie_rule.validate()?;
    let n2 = x2.nrows();
    let p = x2.ncols();
    if x2_knock.nrows() != n2 || x2_knock.ncols() != p {
        return Err(Error::InvalidInput("knockoff copy shape mismatch".into()));
    }
    if y2.len() != n2 {
        return Err(Error::InvalidInput("response length mismatch".into()));
    }
    if f.n_features() != p {
        return Err(Error::InvalidInput(format!(
            "predictor expects {} features but data has {p}",
            f.n_features()
        )));
    }

    let base = f.predict_matrix(x2.as_matrix())?;
    if base.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite baseline prediction".into()));
    }
    let xi = DVector::from_fn(n2, |i, _| (base[i] - y2.as_vector()[i]).abs());
    let tie_base: u64 = rng.random();

    let worker = |j: usize| -> Result<f64> {
        let replaced_preds = match f.linear_coefficients() {
            Some((coef, _)) => {
                // linear models shift by coef_j * (knockoff - original)
                let xj = x2.as_matrix().column(j);
                let kj = x2_knock.as_matrix().column(j);
                DVector::from_fn(n2, |i, _| base[i] + coef[j] * (kj[i] - xj[i]))
            }
            None => {
                let replaced = replace_feature(x2, x2_knock, j)?;
                f.predict_matrix(replaced.as_matrix())?
            }
        };
        let mut count = 0usize;
        let mut tie_rng: Option<ChaCha8Rng> = None;
        for i in 0..n2 {
            let pred = replaced_preds[i];
            if !pred.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite prediction for feature {j}"
                )));
            }
            let t = (pred - y2.as_vector()[i]).abs() - xi[i];
            if t > tie_rule.tolerance {
                count += 1;
            } else if t >= -tie_rule.tolerance {
                if let TieMode::Randomized = tie_rule.mode {
                    let r = tie_rng
                        .get_or_insert_with(|| ChaCha8Rng::seed_from_u64(derive_seed(tie_base, j as u64)));
                    if r.random::<bool>() {
                        count += 1;
                    }
                }
            }
        }
        Ok(count as f64 / n2 as f64 - 0.5)
    };

    let values = map_features(p, parallel, worker)?;
    ImportanceVector::error_based(DVector::from_vec(values), n2)
}

#[cfg(feature = "parallel")]
fn map_features<F>(p: usize, parallel: bool, worker: F) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    if parallel {
        (0..p).into_par_iter().map(worker).collect()
    } else {
        (0..p).map(worker).collect()
    }
}

#[cfg(not(feature = "parallel"))]
fn map_features<F>(p: usize, _parallel: bool, worker: F) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<f64>,
{
    (0..p).map(worker).collect()
}

/// Upper tail of Binomial(n, 1/2): `sum_{i=m}^{n} C(n, i) / 2^n`, accumulated
/// in the log domain so it stays accurate up to n around 10^6.
fn binomial_upper_tail_half(n: usize, m: usize) -> f64 {
    if m == 0 {
        return 1.0;
    }
    if m > n {
        return 0.0;
    }
    let nf = n as f64;
    let mut ln_term = ln_gamma(nf + 1.0)
        - ln_gamma(m as f64 + 1.0)
        - ln_gamma((n - m) as f64 + 1.0)
        - nf * std::f64::consts::LN_2;
    let mut sum = ln_term.exp();
    for i in m..n {
        ln_term += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        sum += ln_term.exp();
    }
    sum.min(1.0)
}

fn count_from_w(w: f64, n2: usize) -> Result<usize> {
    if n2 == 0 {
        return Err(Error::InvalidInput("scoring-split size must be positive".into()));
    }
    if !w.is_finite() {
        return Err(Error::InvalidInput("importance value must be finite".into()));
    }
    let c = n2 as f64 * (w + 0.5);
    let k = c.round();
    if (c - k).abs() > GRANULARITY_TOL {
        return Err(Error::InvalidInput(format!(
            "n2 (w + 0.5) = {c} is not an integer within {GRANULARITY_TOL:e}"
        )));
    }
    if k < 0.0 || k > n2 as f64 {
        return Err(Error::InvalidInput(format!(
            "count {k} outside [0, {n2}]"
        )));
    }
    Ok(k as usize)
}

/// Exact two-sided sign-test p-value for one error-based importance value:
/// with `M = max(n2 (w + 0.5), n2 (0.5 - w))`,
/// `min(1, 2 sum_{i=M}^{n2} C(n2, i) / 2^{n2})`.
pub fn pvalue(w: f64, n2: usize) -> Result<f64> {
    let k = count_from_w(w, n2)?;
    let m = k.max(n2 - k);
    Ok((2.0 * binomial_upper_tail_half(n2, m)).min(1.0))
}

/// One-sided (upper tail) variant: `sum_{i=K}^{n2} C(n2, i) / 2^{n2}` with
/// `K = n2 (w + 0.5)`. Large positive `w` is significant.
pub fn pvalue_one_sided(w: f64, n2: usize) -> Result<f64> {
    let k = count_from_w(w, n2)?;
    Ok(binomial_upper_tail_half(n2, k))
}

/// Elementwise [`pvalue`] over an error-based importance vector.
pub fn pvalues(w: &ImportanceVector) -> Result<PValueVector> {
    pvalues_inner(w, pvalue)
}

/// Elementwise [`pvalue_one_sided`] over an error-based importance vector.
pub fn pvalues_one_sided(w: &ImportanceVector) -> Result<PValueVector> {
    pvalues_inner(w, pvalue_one_sided)
}

fn pvalues_inner(
    w: &ImportanceVector,
    scalar: fn(f64, usize) -> Result<f64>,
) -> Result<PValueVector> {
    if w.kind() != StatisticKind::ErrorBased {
        return Err(Error::UnsupportedStatistic(
            "p-values are defined only for the error-based statistic".into(),
        ));
    }
    let n2 = w
        .n2()
        .ok_or_else(|| Error::Internal("error-based vector lost its n2".into()))?;
    let mut out = DVector::zeros(w.len());
    for (j, v) in w.values().iter().enumerate() {
        out[j] = scalar(*v, n2)?;
    }
    PValueVector::new(out)
}

/// Lasso-coefficient-difference importance: fits the given lasso spec on the
/// column concatenation `[x, x_knock]` and returns
/// `W_j = |beta_j| - |beta_{j+p}|` on the standardized scale.
pub fn lcd_importance<R: Rng + ?Sized>(
    x: &DataMatrix,
    x_knock: &DataMatrix,
    y: &ResponseVector,
    spec: &PredictorSpec,
    rng: &mut R,
) -> Result<ImportanceVector> {
    if !spec.is_lasso() {
        return Err(Error::InvalidInput(
            "the coefficient-difference statistic requires a lasso predictor".into(),
        ));
    }
    if x.nrows() != x_knock.nrows() || x.ncols() != x_knock.ncols() {
        return Err(Error::InvalidInput("knockoff copy shape mismatch".into()));
    }
    if y.len() != x.nrows() {
        return Err(Error::InvalidInput("response length mismatch".into()));
    }
    let n = x.nrows();
    let p = x.ncols();
    let mut concat = DMatrix::zeros(n, 2 * p);
    concat.view_mut((0, 0), (n, p)).copy_from(x.as_matrix());
    concat
        .view_mut((0, p), (n, p))
        .copy_from(x_knock.as_matrix());
    let fit = spec.fit(&DataMatrix::new(concat)?, y, rng)?;
    let beta = fit
        .standardized_coefficients()
        .ok_or_else(|| Error::Internal("lasso fit returned a non-linear model".into()))?;
    let w = DVector::from_fn(p, |j, _| beta[j].abs() - beta[j + p].abs());
    ImportanceVector::lcd(w)
}
