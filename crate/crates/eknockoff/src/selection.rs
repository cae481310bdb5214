//! Selection procedures with FDR, k-FWER, and FDP-exceedance guarantees.
//!
//! The knockoff+ rule selects `{j : W_j >= tau}` where `tau` is the smallest
//! positive candidate with `(1 + #{W_j <= -tau}) / max(#{W_j >= tau}, 1) <= q`.
//! The stepdown procedures sort p-values, compare them to a non-decreasing
//! threshold ladder, and keep the longest passing prefix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{ImportanceVector, PValueVector};

/// Which guarantee produced a [`SelectionResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    KnockoffFdr,
    StepdownKfwer,
    StepdownFdp,
}

/// Target levels a procedure was run at; unused targets stay `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub q: Option<f64>,
    pub alpha: Option<f64>,
    pub k: Option<usize>,
}

/// A selected feature set plus procedure metadata. Indices are 0-based and
/// sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub selected: Vec<usize>,
    pub procedure: Procedure,
    /// Knockoff threshold; `f64::INFINITY` when no candidate qualified.
    /// `None` for stepdown procedures.
    pub threshold_tau: Option<f64>,
    /// Number of features kept by the stepdown scan; `None` for knockoff+.
    pub stepdown_m: Option<usize>,
    pub targets: Targets,
}

fn check_open_unit(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::InvalidInput(format!(
            "{name} must lie strictly between 0 and 1, got {v}"
        )));
    }
    Ok(())
}

/// Knockoff+ threshold: the smallest attained positive magnitude `t` with
/// `(1 + #{j : W_j <= -t}) / max(#{j : W_j >= t}, 1) <= q`, or `+inf` when no
/// candidate qualifies. Candidates are the distinct `|W_j|` over non-zero
/// entries, so zero statistics can never be selected.
pub fn knockoff_threshold(w: &ImportanceVector, q: f64) -> Result<f64> {
    check_open_unit("q", q)?;
    let values = w.values();
    let mut candidates: Vec<f64> = values
        .iter()
        .filter(|v| **v != 0.0)
        .map(|v| v.abs())
        .collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    for &t in &candidates {
        let negatives = values.iter().filter(|v| **v <= -t).count();
        let positives = values.iter().filter(|v| **v >= t).count();
        if (1 + negatives) as f64 / positives.max(1) as f64 <= q {
            return Ok(t);
        }
    }
    Ok(f64::INFINITY)
}

/// Knockoff+ selection at FDR level `q`.
pub fn select_fdr(w: &ImportanceVector, q: f64) -> Result<SelectionResult> {
    let tau = knockoff_threshold(w, q)?;
    let selected: Vec<usize> = if tau.is_finite() {
        w.values()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v >= tau)
            .map(|(j, _)| j)
            .collect()
    } else {
        Vec::new()
    };
    Ok(SelectionResult {
        selected,
        procedure: Procedure::KnockoffFdr,
        threshold_tau: Some(tau),
        stepdown_m: None,
        targets: Targets {
            q: Some(q),
            alpha: None,
            k: None,
        },
    })
}

/// Stepdown ladder controlling the probability of `k` or more false
/// discoveries at level `alpha`:
/// `alpha_j = k alpha / p` for `j <= k` and `k alpha / (p + k - j)` after.
pub fn kfwer_thresholds(p: usize, k: usize, alpha: f64) -> Result<Vec<f64>> {
    check_open_unit("alpha", alpha)?;
    if k < 1 || k > p {
        return Err(Error::InvalidInput(format!(
            "k must lie in [1, {p}], got {k}"
        )));
    }
    Ok((1..=p)
        .map(|j| {
            if j <= k {
                k as f64 * alpha / p as f64
            } else {
                k as f64 * alpha / (p + k - j) as f64
            }
        })
        .collect())
}

/// Stepdown ladder controlling `Prob{FDP > q}` at level `alpha`:
/// `alpha_j = (floor(q j) + 1) alpha / (p + floor(q j) + 1 - j)`.
pub fn fdp_thresholds(p: usize, q: f64, alpha: f64) -> Result<Vec<f64>> {
    check_open_unit("q", q)?;
    check_open_unit("alpha", alpha)?;
    if p == 0 {
        return Err(Error::InvalidInput("p must be positive".into()));
    }
    Ok((1..=p)
        .map(|j| {
            let m = (q * j as f64).floor();
            (m + 1.0) * alpha / (p as f64 + m + 1.0 - j as f64)
        })
        .collect())
}

/// Stepdown scan: sort p-values ascending (ties broken by ascending feature
/// index) and keep the longest prefix where the j-th smallest p-value is at
/// most `thresholds[j]`. Returns the kept features sorted by index; empty is
/// a valid outcome.
pub fn stepdown_select(p_values: &PValueVector, thresholds: &[f64]) -> Result<Vec<usize>> {
    let p = p_values.len();
    if thresholds.len() != p {
        return Err(Error::InvalidInput(format!(
            "{p} p-values but {} thresholds",
            thresholds.len()
        )));
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        p_values.values()[a]
            .partial_cmp(&p_values.values()[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut m = 0;
    for (rank, &feature) in order.iter().enumerate() {
        if p_values.values()[feature] <= thresholds[rank] {
            m = rank + 1;
        } else {
            break;
        }
    }
    let mut selected: Vec<usize> = order[..m].to_vec();
    selected.sort_unstable();
    Ok(selected)
}

/// Stepdown selection under the k-FWER ladder.
pub fn select_kfwer(p_values: &PValueVector, k: usize, alpha: f64) -> Result<SelectionResult> {
    let thresholds = kfwer_thresholds(p_values.len(), k, alpha)?;
    let selected = stepdown_select(p_values, &thresholds)?;
    Ok(SelectionResult {
        stepdown_m: Some(selected.len()),
        selected,
        procedure: Procedure::StepdownKfwer,
        threshold_tau: None,
        targets: Targets {
            q: None,
            alpha: Some(alpha),
            k: Some(k),
        },
    })
}

/// Stepdown selection under the FDP-exceedance ladder.
pub fn select_fdp(p_values: &PValueVector, q: f64, alpha: f64) -> Result<SelectionResult> {
    let thresholds = fdp_thresholds(p_values.len(), q, alpha)?;
    let selected = stepdown_select(p_values, &thresholds)?;
    Ok(SelectionResult {
        stepdown_m: Some(selected.len()),
        selected,
        procedure: Procedure::StepdownFdp,
        threshold_tau: None,
        targets: Targets {
            q: Some(q),
            alpha: Some(alpha),
            k: None,
        },
    })
}
