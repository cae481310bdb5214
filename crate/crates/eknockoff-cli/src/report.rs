//! Run reports: a JSON document with the full resolved configuration and a
//! per-feature CSV that round-trips exactly.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// One row per feature. `index` is 1-based for human-facing output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub index: usize,
    pub label: String,
    pub w: f64,
    pub p_value: Option<f64>,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTargets {
    pub q: Option<f64>,
    pub alpha: Option<f64>,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportProcedure {
    pub kind: String,
    /// Knockoff threshold; absent when no finite threshold exists or the
    /// procedure is a stepdown.
    pub threshold_tau: Option<f64>,
    pub stepdown_m: Option<usize>,
}

/// The full machine-readable report for one `select` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub dataset: String,
    pub response: String,
    pub n: usize,
    pub p: usize,
    pub n1: usize,
    pub n2: usize,
    pub method: String,
    pub covariance: String,
    pub predictor: String,
    pub tie_rule: String,
    pub tie_tolerance: f64,
    pub one_sided: bool,
    pub ordered_split: bool,
    pub targets: ReportTargets,
    pub procedure: ReportProcedure,
    pub selected_count: usize,
    pub features: Vec<FeatureRecord>,
}

impl RunReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
    }
}

/// Writes the per-feature table. Floats use the shortest round-tripping
/// representation, so re-reading reproduces the records exactly.
pub fn write_feature_csv(path: &Path, records: &[FeatureRecord]) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    for record in records {
        writer.serialize(record)?;
    }
    writer.flush()?;
    Ok(())
}
