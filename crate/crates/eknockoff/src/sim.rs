//! Synthetic benchmark generator and the seeded multi-trial experiment runner.
//!
//! Covariates are drawn from a zero-mean Gaussian whose precision matrix has
//! entries `rho^|j-k|`; the response follows the single-index model
//! `Y = g(x beta) + eps` with `g(a) = sqrt(|a|) + a + a^2 + sin(a) + arctan(a)`
//! and `beta_j = 1/|S0|` on the informative support. Each trial derives its
//! own random streams from `(master_seed, trial_index)`, so the runner may
//! execute trials in parallel and still aggregate identical results in
//! trial-index order.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::data::{DataMatrix, ResponseVector};
use crate::error::{Error, Result};
use crate::knockoffs::{CovarianceModel, KnockoffSampler, DEFAULT_MIN_EIG_FLOOR};
use crate::predictors::PredictorSpec;
use crate::seeds::derive_seed;
use crate::selection::{select_fdp, select_fdr, select_kfwer, SelectionResult, Targets};
use crate::stats::{
    error_importance, lcd_importance, pvalues, pvalues_one_sided, TieRule,
};

/// Per-trial random streams, derived from `(master_seed, trial_index)`.
const STREAM_DATA: u64 = 0;
const STREAM_SPLIT: u64 = 1;
const STREAM_FIT: u64 = 2;
const STREAM_KNOCKOFF: u64 = 3;
const STREAM_STAT: u64 = 4;

/// Which guarantee the experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Error-based statistic, knockoff+ threshold.
    Fdr,
    /// Error-based p-values, k-FWER stepdown.
    Kfwer,
    /// Error-based p-values, FDP-exceedance stepdown.
    Fdp,
    /// Lasso-coefficient-difference statistic, knockoff+ threshold.
    LcdFdr,
}

impl Method {
    fn needs_fitted_predictor(self) -> bool {
        !matches!(self, Method::LcdFdr)
    }
}

/// Where the covariance used by the knockoff sampler comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceMode {
    /// The true generating covariance.
    Known,
    /// Estimated from the training split.
    Estimated,
}

/// Full specification of one simulation experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: usize,
    pub s0_size: usize,
    pub split_n1: usize,
    pub split_n2: usize,
    pub rho: f64,
    pub noise_var: f64,
    pub predictor: PredictorSpec,
    pub covariance_mode: CovarianceMode,
    pub method: Method,
    pub targets: Targets,
    pub tie_rule: TieRule,
    pub trials: usize,
    pub master_seed: u64,
    /// Eigenvalue floor for estimated covariances.
    pub min_eig_floor: f64,
    /// Split the rows in order instead of shuffling first.
    pub ordered_split: bool,
    /// Place the informative support at random coordinates instead of the
    /// first `s0_size`.
    pub shuffle_support: bool,
    /// Use upper-tail p-values instead of two-sided ones.
    pub one_sided: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 200,
            p: 10,
            s0_size: 2,
            split_n1: 100,
            split_n2: 100,
            rho: 0.5,
            noise_var: 0.01,
            predictor: PredictorSpec::lasso_cv(),
            covariance_mode: CovarianceMode::Known,
            method: Method::Fdr,
            targets: Targets {
                q: Some(0.2),
                alpha: None,
                k: None,
            },
            tie_rule: TieRule::default(),
            trials: 10,
            master_seed: 0,
            min_eig_floor: DEFAULT_MIN_EIG_FLOOR,
            ordered_split: false,
            shuffle_support: false,
            one_sided: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidInput("n and p must be positive".into()));
        }
        if self.split_n1 + self.split_n2 != self.n {
            return Err(Error::InvalidInput(format!(
                "split sizes {} + {} must add up to n = {}",
                self.split_n1, self.split_n2, self.n
            )));
        }
        if self.split_n2 == 0 {
            return Err(Error::InvalidInput("the scoring split must be non-empty".into()));
        }
        if self.s0_size > self.p {
            return Err(Error::InvalidInput(format!(
                "support size {} exceeds p = {}",
                self.s0_size, self.p
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        if self.rho.is_nan() || self.rho.abs() >= 1.0 {
            return Err(Error::InvalidInput("|rho| must be below 1".into()));
        }
        if self.noise_var < 0.0 || !self.noise_var.is_finite() {
            return Err(Error::InvalidInput(
                "noise variance must be a non-negative real".into(),
            ));
        }
        if self.min_eig_floor < 0.0 || !self.min_eig_floor.is_finite() {
            return Err(Error::InvalidInput(
                "minimum-eigenvalue floor must be a non-negative real".into(),
            ));
        }
        self.predictor.validate()?;
        self.tie_rule.validate()?;
        if self.method.needs_fitted_predictor() && self.split_n1 == 0 {
            return Err(Error::InvalidInput(
                "error-based methods need a non-empty training split".into(),
            ));
        }
        if self.covariance_mode == CovarianceMode::Estimated && self.split_n1 < 2 {
            return Err(Error::InvalidInput(
                "covariance estimation needs at least 2 training rows".into(),
            ));
        }
        let need_q = matches!(self.method, Method::Fdr | Method::Fdp | Method::LcdFdr);
        if need_q {
            match self.targets.q {
                Some(q) if q > 0.0 && q < 1.0 => {}
                _ => {
                    return Err(Error::InvalidInput(
                        "this method needs a target q in (0, 1)".into(),
                    ))
                }
            }
        }
        let need_alpha = matches!(self.method, Method::Kfwer | Method::Fdp);
        if need_alpha {
            match self.targets.alpha {
                Some(a) if a > 0.0 && a < 1.0 => {}
                _ => {
                    return Err(Error::InvalidInput(
                        "this method needs a target alpha in (0, 1)".into(),
                    ))
                }
            }
        }
        if self.method == Method::Kfwer {
            match self.targets.k {
                Some(k) if k >= 1 && k <= self.p => {}
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "k-FWER needs k in [1, {}]",
                        self.p
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Outcome of one trial, scored against the generating support.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    /// Selected features, 0-based, sorted.
    pub selected: Vec<usize>,
    /// False discoveries divided by `max(|selected|, 1)`.
    pub fdp: f64,
    /// Number of selected features outside the support.
    pub false_count: usize,
    /// Recovered fraction of the support (zero when the support is empty).
    pub power: f64,
    /// The derived seed this trial ran with.
    pub seed: u64,
}

/// Aggregated metrics over all trials of one experiment.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsSummary {
    /// Mean FDP.
    pub fdr_hat: f64,
    pub fdp_max: f64,
    /// Largest false-discovery count over the trials.
    pub fd_max: usize,
    pub power_mean: f64,
    /// Fraction of trials with FDP above the target q (when q is set).
    pub exceed_prob: Option<f64>,
    /// Fraction of trials with at least k false discoveries (when k is set).
    pub kfwer_hat: Option<f64>,
    pub trial_outcomes: Vec<TrialOutcome>,
}

/// Covariance of the benchmark covariates: the inverse of the precision
/// matrix `(rho^|j-k|)`, with zero mean.
pub fn ar_covariance(p: usize, rho: f64) -> Result<CovarianceModel> {
    if p == 0 {
        return Err(Error::InvalidInput("p must be positive".into()));
    }
    if rho.is_nan() || rho.abs() >= 1.0 {
        return Err(Error::InvalidInput("|rho| must be below 1".into()));
    }
    let precision = DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()));
    let chol = Cholesky::new(precision.clone())
        .ok_or_else(|| Error::Numerical("precision matrix failed factorization".into()))?;
    let mut sigma = chol.inverse();
    let residual = (&sigma * &precision - DMatrix::identity(p, p)).abs().max();
    if residual > 1e-8 {
        return Err(Error::Numerical(format!(
            "precision inversion residual {residual:.3e} exceeds 1e-8"
        )));
    }
    // kill round-off asymmetry before the model validates symmetry
    for j in 0..p {
        for i in 0..j {
            let avg = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
            sigma[(i, j)] = avg;
            sigma[(j, i)] = avg;
        }
    }
    CovarianceModel::new(DVector::zeros(p), sigma)
}

/// The single-index link `g(a) = sqrt(|a|) + a + a^2 + sin(a) + arctan(a)`.
pub fn single_index_link(a: f64) -> f64 {
    a.abs().sqrt() + a + a * a + a.sin() + a.atan()
}

/// Draws `(X, y, support)` for one trial: rows i.i.d. from the benchmark
/// Gaussian, `beta_j = 1/|S0|` on the support, `Y = g(x beta) + eps` with
/// `eps ~ N(0, noise_var)`. Deterministic per rng state.
pub fn gen_single_index<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    rng: &mut R,
) -> Result<(DataMatrix, ResponseVector, Vec<usize>)> {
    let model = ar_covariance(cfg.p, cfg.rho)?;
    let chol = Cholesky::new(model.sigma().clone())
        .ok_or_else(|| Error::Numerical("benchmark covariance failed factorization".into()))?;
    let lt = chol.l().transpose();

    let mut support: Vec<usize> = (0..cfg.p).collect();
    if cfg.shuffle_support {
        support.shuffle(rng);
    }
    support.truncate(cfg.s0_size);
    support.sort_unstable();

    let mut beta = DVector::zeros(cfg.p);
    if cfg.s0_size > 0 {
        for &j in &support {
            beta[j] = 1.0 / cfg.s0_size as f64;
        }
    }

    let n = cfg.n;
    let z: DMatrix<f64> =
        DMatrix::from_row_iterator(n, cfg.p, (0..n * cfg.p).map(|_| rng.sample(StandardNormal)));
    let x = z * lt;
    let index: DVector<f64> = &x * &beta;
    let noise_sd = cfg.noise_var.sqrt();
    let y = DVector::from_fn(n, |i, _| {
        single_index_link(index[i]) + noise_sd * rng.sample::<f64, _>(StandardNormal)
    });
    Ok((DataMatrix::new(x)?, ResponseVector::new(y)?, support))
}

fn split_indices(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..cfg.n).collect();
    if !cfg.ordered_split {
        idx.shuffle(rng);
    }
    let second = idx.split_off(cfg.split_n1);
    (idx, second)
}

fn run_selection(
    cfg: &ExperimentConfig,
    x1: Option<(&DataMatrix, &ResponseVector)>,
    x2: &DataMatrix,
    y2: &ResponseVector,
    x2_knock: &DataMatrix,
    fit_rng: &mut ChaCha8Rng,
    stat_rng: &mut ChaCha8Rng,
) -> Result<SelectionResult> {
    match cfg.method {
        Method::LcdFdr => {
            let q = cfg.targets.q.expect("validated");
            let w = lcd_importance(x2, x2_knock, y2, &cfg.predictor, stat_rng)?;
            select_fdr(&w, q)
        }
        _ => {
            let (x1, y1) = x1.expect("validated: error-based methods have a training split");
            let fitted = cfg.predictor.fit(x1, y1, fit_rng)?;
            let w = error_importance(&fitted, x2, y2, x2_knock, cfg.tie_rule, stat_rng)?;
            match cfg.method {
                Method::Fdr => select_fdr(&w, cfg.targets.q.expect("validated")),
                Method::Kfwer => {
                    let p_values = if cfg.one_sided {
                        pvalues_one_sided(&w)?
                    } else {
                        pvalues(&w)?
                    };
                    select_kfwer(
                        &p_values,
                        cfg.targets.k.expect("validated"),
                        cfg.targets.alpha.expect("validated"),
                    )
                }
                Method::Fdp => {
                    let p_values = if cfg.one_sided {
                        pvalues_one_sided(&w)?
                    } else {
                        pvalues(&w)?
                    };
                    select_fdp(
                        &p_values,
                        cfg.targets.q.expect("validated"),
                        cfg.targets.alpha.expect("validated"),
                    )
                }
                Method::LcdFdr => unreachable!(),
            }
        }
    }
}

/// Scores a selected set against the generating support.
pub fn score_selection(selected: &[usize], support: &[usize], seed: u64) -> TrialOutcome {
    let false_count = selected.iter().filter(|j| !support.contains(j)).count();
    let true_count = selected.len() - false_count;
    let fdp = false_count as f64 / selected.len().max(1) as f64;
    let power = if support.is_empty() {
        0.0
    } else {
        true_count as f64 / support.len() as f64
    };
    TrialOutcome {
        selected: selected.to_vec(),
        fdp,
        false_count,
        power,
        seed,
    }
}

/// Runs one trial: generate data, split, fit, sample knockoffs, compute the
/// statistic, select, and score. Identical `(cfg, trial_index)` always yields
/// the identical outcome.
pub fn run_trial(cfg: &ExperimentConfig, trial_index: usize) -> Result<TrialOutcome> {
    cfg.validate()?;
    let trial_seed = derive_seed(cfg.master_seed, trial_index as u64);
    let context = format!("trial {trial_index}");
    run_trial_seeded(cfg, trial_seed).map_err(|e| e.with_context(&context))
}

fn run_trial_seeded(cfg: &ExperimentConfig, trial_seed: u64) -> Result<TrialOutcome> {
    let mut data_rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, STREAM_DATA));
    let mut split_rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, STREAM_SPLIT));
    let mut fit_rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, STREAM_FIT));
    let mut knockoff_rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, STREAM_KNOCKOFF));
    let mut stat_rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, STREAM_STAT));

    let (x, y, support) = gen_single_index(cfg, &mut data_rng)?;
    let (idx1, idx2) = split_indices(cfg, &mut split_rng);
    debug_assert!(idx1.iter().all(|i| !idx2.contains(i)), "splits overlap");

    let first = if cfg.split_n1 > 0 {
        Some((x.select_rows(&idx1), y.select(&idx1)))
    } else {
        None
    };
    let x2 = x.select_rows(&idx2);
    let y2 = y.select(&idx2);

    let model = match cfg.covariance_mode {
        CovarianceMode::Known => ar_covariance(cfg.p, cfg.rho)?,
        CovarianceMode::Estimated => {
            let (x1, _) = first.as_ref().expect("validated: estimation needs split 1");
            CovarianceModel::estimate(x1, cfg.min_eig_floor)?
        }
    };
    let s = model.equicorrelated_s()?;
    let sampler = KnockoffSampler::new(model, s)?;
    let x2_knock = sampler.sample(&x2, &mut knockoff_rng)?;

    let selection = run_selection(
        cfg,
        first.as_ref().map(|(a, b)| (a, b)),
        &x2,
        &y2,
        &x2_knock,
        &mut fit_rng,
        &mut stat_rng,
    )?;
    Ok(score_selection(&selection.selected, &support, trial_seed))
}

fn summarize(cfg: &ExperimentConfig, trial_outcomes: Vec<TrialOutcome>) -> MetricsSummary {
    let t = trial_outcomes.len() as f64;
    let fdr_hat = trial_outcomes.iter().map(|o| o.fdp).sum::<f64>() / t;
    let fdp_max = trial_outcomes.iter().map(|o| o.fdp).fold(0.0, f64::max);
    let fd_max = trial_outcomes.iter().map(|o| o.false_count).max().unwrap_or(0);
    let power_mean = trial_outcomes.iter().map(|o| o.power).sum::<f64>() / t;
    let exceed_prob = cfg.targets.q.map(|q| {
        trial_outcomes.iter().filter(|o| o.fdp > q).count() as f64 / t
    });
    let kfwer_hat = cfg.targets.k.map(|k| {
        trial_outcomes.iter().filter(|o| o.false_count >= k).count() as f64 / t
    });
    MetricsSummary {
        fdr_hat,
        fdp_max,
        fd_max,
        power_mean,
        exceed_prob,
        kfwer_hat,
        trial_outcomes,
    }
}

/// Runs all trials (in parallel when the `parallel` feature is enabled) and
/// aggregates in trial-index order. Thread count never changes the result.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsSummary> {
    cfg.validate()?;
    let outcomes = run_trials(cfg)?;
    Ok(summarize(cfg, outcomes))
}

/// Sequential twin of [`run_experiment`]; same results.
pub fn run_experiment_sequential(cfg: &ExperimentConfig) -> Result<MetricsSummary> {
    cfg.validate()?;
    let outcomes: Result<Vec<TrialOutcome>> =
        (0..cfg.trials).map(|i| run_trial(cfg, i)).collect();
    Ok(summarize(cfg, outcomes?))
}

#[cfg(feature = "parallel")]
fn run_trials(cfg: &ExperimentConfig) -> Result<Vec<TrialOutcome>> {
    (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(cfg, i))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_trials(cfg: &ExperimentConfig) -> Result<Vec<TrialOutcome>> {
    (0..cfg.trials).map(|i| run_trial(cfg, i)).collect()
}

/// A histogram over `[0, 1]` with uniform bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` edges from 0 to 1.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Bins values from `[0, 1]`; the top edge is inclusive.
    pub fn from_unit_values<I: IntoIterator<Item = f64>>(values: I, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidInput("bin count must be positive".into()));
        }
        let edges: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        let mut counts = vec![0usize; bins];
        for v in values {
            let bin = ((v * bins as f64).floor() as usize).min(bins - 1);
            counts[bin] += 1;
        }
        Ok(Histogram { edges, counts })
    }
}

/// Runs the experiment and bins the per-trial FDP values uniformly over
/// `[0, 1]`. Only meaningful for the knockoff+ methods.
pub fn fdp_histogram(cfg: &ExperimentConfig, bins: usize) -> Result<Histogram> {
    if !matches!(cfg.method, Method::Fdr | Method::LcdFdr) {
        return Err(Error::InvalidInput(
            "the FDP histogram is defined for the fdr and lcd-fdr methods".into(),
        ));
    }
    let summary = run_experiment(cfg)?;
    Histogram::from_unit_values(summary.trial_outcomes.iter().map(|o| o.fdp), bins)
}

/// One experiment per training-split size, with the scoring split fixed.
/// Requires the estimated-covariance mode, whose quality the sweep probes.
pub fn robustness_sweep(cfg: &ExperimentConfig, n1_values: &[usize]) -> Result<Vec<MetricsSummary>> {
    if cfg.covariance_mode != CovarianceMode::Estimated {
        return Err(Error::InvalidInput(
            "the robustness sweep requires the estimated covariance mode".into(),
        ));
    }
    n1_values
        .iter()
        .map(|&n1| {
            let mut c = cfg.clone();
            c.split_n1 = n1;
            c.n = n1 + c.split_n2;
            run_experiment(&c)
        })
        .collect()
}

/// One experiment per scoring-split size, with the training split fixed.
pub fn power_sweep(cfg: &ExperimentConfig, n2_values: &[usize]) -> Result<Vec<MetricsSummary>> {
    n2_values
        .iter()
        .map(|&n2| {
            let mut c = cfg.clone();
            c.split_n2 = n2;
            c.n = c.split_n1 + n2;
            run_experiment(&c)
        })
        .collect()
}
