//! Flat TOML configuration schema. Keys mirror the experiment-config fields;
//! command-line flags override file values.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use eknockoff::knockoffs::DEFAULT_MIN_EIG_FLOOR;
use eknockoff::predictors::{PredictorSpec, DEFAULT_FOLDS, DEFAULT_GRID_SIZE};
use eknockoff::sim::Method;
use eknockoff::stats::{TieMode, TieRule};

use crate::SharedArgs;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub s0_size: Option<usize>,
    pub split_n1: Option<usize>,
    pub split_n2: Option<usize>,
    pub rho: Option<f64>,
    pub noise_var: Option<f64>,
    pub predictor: Option<String>,
    pub grid_size: Option<usize>,
    pub folds: Option<usize>,
    pub covariance_mode: Option<String>,
    pub method: Option<String>,
    pub q: Option<f64>,
    pub alpha: Option<f64>,
    pub k: Option<usize>,
    pub tie_rule: Option<String>,
    pub tie_tolerance: Option<f64>,
    pub trials: Option<usize>,
    pub master_seed: Option<u64>,
    pub min_eig_floor: Option<f64>,
    pub ordered_split: Option<bool>,
    pub shuffle_support: Option<bool>,
    pub one_sided: Option<bool>,
    pub response: Option<String>,
    pub label: Option<String>,
    pub n1_sweep: Option<Vec<usize>>,
    pub n2_sweep: Option<Vec<usize>>,
    pub histogram_bins: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }

    pub fn load_opt(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(FileConfig::default()),
        }
    }
}

pub fn parse_method(s: &str) -> Result<Method> {
    match s {
        "fdr" => Ok(Method::Fdr),
        "kfwer" => Ok(Method::Kfwer),
        "fdp" => Ok(Method::Fdp),
        "lcd-fdr" => Ok(Method::LcdFdr),
        other => bail!("unknown method '{other}' (expected fdr, kfwer, fdp, or lcd-fdr)"),
    }
}

pub fn method_name(m: Method) -> &'static str {
    match m {
        Method::Fdr => "fdr",
        Method::Kfwer => "kfwer",
        Method::Fdp => "fdp",
        Method::LcdFdr => "lcd-fdr",
    }
}

/// Covariance source resolved from the shared `--covariance` syntax.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceSource {
    Estimated,
    /// The benchmark's own generating covariance (simulate only).
    Known,
    /// A covariance loaded from a CSV file.
    KnownFile(String),
}

pub fn parse_covariance(s: &str) -> Result<CovarianceSource> {
    if s == "estimated" {
        Ok(CovarianceSource::Estimated)
    } else if s == "known" {
        Ok(CovarianceSource::Known)
    } else if let Some(path) = s.strip_prefix("known:") {
        if path.is_empty() {
            bail!("missing path in 'known:<path>'");
        }
        Ok(CovarianceSource::KnownFile(path.to_string()))
    } else {
        bail!("unknown covariance '{s}' (expected estimated, known, or known:<path>)")
    }
}

pub fn covariance_name(c: &CovarianceSource) -> String {
    match c {
        CovarianceSource::Estimated => "estimated".into(),
        CovarianceSource::Known => "known".into(),
        CovarianceSource::KnownFile(p) => format!("known:{p}"),
    }
}

pub fn parse_predictor(s: &str, grid_size: usize, folds: usize) -> Result<PredictorSpec> {
    if s == "lasso-cv" {
        return Ok(PredictorSpec::LassoCv { grid_size, folds });
    }
    if let Some(rest) = s.strip_prefix("lasso:") {
        let lambda: f64 = rest
            .parse()
            .with_context(|| format!("invalid lasso penalty '{rest}'"))?;
        return Ok(PredictorSpec::LassoFixed { lambda });
    }
    if let Some(rest) = s.strip_prefix("krr:") {
        let ridge: f64 = rest
            .parse()
            .with_context(|| format!("invalid ridge penalty '{rest}'"))?;
        return Ok(PredictorSpec::kernel_ridge(ridge));
    }
    bail!("unknown predictor '{s}' (expected lasso-cv, lasso:<lambda>, or krr:<ridge>)")
}

pub fn predictor_name(spec: &PredictorSpec) -> String {
    match spec {
        PredictorSpec::LassoCv { grid_size, folds } => {
            format!("lasso-cv(grid={grid_size},folds={folds})")
        }
        PredictorSpec::LassoFixed { lambda } => format!("lasso:{lambda}"),
        PredictorSpec::KernelRidgeSigmoid { ridge, .. } => format!("krr:{ridge}"),
    }
}

pub fn parse_tie_rule(s: &str, tolerance: f64) -> Result<TieRule> {
    let mode = match s {
        "randomized" => TieMode::Randomized,
        "strict" => TieMode::Strict,
        other => bail!("unknown tie rule '{other}' (expected randomized or strict)"),
    };
    Ok(TieRule { mode, tolerance })
}

pub fn tie_rule_name(rule: TieRule) -> &'static str {
    match rule.mode {
        TieMode::Randomized => "randomized",
        TieMode::Strict => "strict",
    }
}

/// Settings shared by the pipeline commands after merging flags over the
/// config file over defaults.
pub struct Resolved {
    pub seed: u64,
    pub method: Method,
    pub q: Option<f64>,
    pub alpha: Option<f64>,
    pub k: Option<usize>,
    pub predictor: PredictorSpec,
    pub covariance: CovarianceSource,
    pub tie_rule: TieRule,
    pub one_sided: bool,
    pub min_eig_floor: f64,
    pub ordered_split: bool,
}

pub fn resolve(shared: &SharedArgs, file: &FileConfig, default_covariance: CovarianceSource) -> Result<Resolved> {
    let method = match shared.method.as_deref().or(file.method.as_deref()) {
        Some(s) => parse_method(s)?,
        None => Method::Fdr,
    };
    let grid_size = file.grid_size.unwrap_or(DEFAULT_GRID_SIZE);
    let folds = file.folds.unwrap_or(DEFAULT_FOLDS);
    let predictor = match shared.predictor.as_deref().or(file.predictor.as_deref()) {
        Some(s) => parse_predictor(s, grid_size, folds)?,
        None => PredictorSpec::LassoCv { grid_size, folds },
    };
    let covariance = match shared.covariance.as_deref().or(file.covariance_mode.as_deref()) {
        Some(s) => parse_covariance(s)?,
        None => default_covariance,
    };
    let tolerance = file.tie_tolerance.unwrap_or(0.0);
    let mut tie_rule = match shared.tie_rule.as_deref().or(file.tie_rule.as_deref()) {
        Some(s) => parse_tie_rule(s, tolerance)?,
        None => TieRule {
            mode: TieMode::Randomized,
            tolerance,
        },
    };
    let mut one_sided = shared.one_sided || file.one_sided.unwrap_or(false);
    if shared.paper_literal {
        tie_rule.mode = TieMode::Strict;
        one_sided = false;
    }
    Ok(Resolved {
        seed: shared.seed.or(file.master_seed).unwrap_or(0),
        method,
        q: shared.q.or(file.q),
        alpha: shared.alpha.or(file.alpha),
        k: shared.k.or(file.k),
        predictor,
        covariance,
        tie_rule,
        one_sided,
        min_eig_floor: file.min_eig_floor.unwrap_or(DEFAULT_MIN_EIG_FLOOR),
        ordered_split: file.ordered_split.unwrap_or(false),
    })
}
