//! The three subcommands: select, simulate, knockoffs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use eknockoff::knockoffs::{CovarianceModel, KnockoffSampler};
use eknockoff::seeds::derive_seed;
use eknockoff::selection::{select_fdp, select_fdr, select_kfwer, SelectionResult};
use eknockoff::sim::{
    fdp_histogram, power_sweep, robustness_sweep, run_experiment, CovarianceMode,
    ExperimentConfig, Histogram, Method, MetricsSummary,
};
use eknockoff::stats::{
    error_importance, lcd_importance, pvalues, pvalues_one_sided, PValueVector,
};

use crate::config::{
    covariance_name, method_name, predictor_name, resolve, tie_rule_name, CovarianceSource,
    FileConfig, Resolved,
};
use crate::csvio::{read_covariance, read_dataset, write_matrix_csv};
use crate::report::{FeatureRecord, ReportProcedure, ReportTargets, RunReport};
use crate::SharedArgs;

/// Random-stream indices shared with the simulation runner's layout.
const STREAM_SPLIT: u64 = 1;
const STREAM_FIT: u64 = 2;
const STREAM_KNOCKOFF: u64 = 3;
const STREAM_STAT: u64 = 4;

fn out_base(shared: &SharedArgs, default: &str) -> PathBuf {
    shared
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(default))
}

fn require_q(resolved: &Resolved) -> Result<f64> {
    match resolved.q {
        Some(q) if q > 0.0 && q < 1.0 => Ok(q),
        Some(q) => bail!("--q must lie strictly between 0 and 1, got {q}"),
        None => bail!("method '{}' needs --q", method_name(resolved.method)),
    }
}

fn require_alpha(resolved: &Resolved) -> Result<f64> {
    match resolved.alpha {
        Some(a) if a > 0.0 && a < 1.0 => Ok(a),
        Some(a) => bail!("--alpha must lie strictly between 0 and 1, got {a}"),
        None => bail!("method '{}' needs --alpha", method_name(resolved.method)),
    }
}

fn require_k(resolved: &Resolved) -> Result<usize> {
    match resolved.k {
        Some(k) if k >= 1 => Ok(k),
        Some(_) => bail!("--k must be at least 1"),
        None => bail!("method 'kfwer' needs --k"),
    }
}

pub fn select(data: &Path, response_flag: Option<&str>, shared: &SharedArgs) -> Result<()> {
    let started = Instant::now();
    let file = FileConfig::load_opt(shared.config.as_deref())?;
    let resolved = resolve(shared, &file, CovarianceSource::Estimated)?;
    let response = match response_flag.or(file.response.as_deref()) {
        Some(r) => r.to_string(),
        None => bail!("select needs --response <column> (or a 'response' config key)"),
    };

    let dataset = read_dataset(data, Some(&response))?;
    let y = dataset.y.as_ref().expect("response requested");
    let n = dataset.x.nrows();
    let p = dataset.x.ncols();
    let n1 = shared.n1.or(file.split_n1).unwrap_or(n / 2);
    if n1 >= n {
        bail!("training split {n1} must leave at least one scoring row of {n}");
    }
    let needs_fit = resolved.method != Method::LcdFdr;
    if needs_fit && n1 == 0 {
        bail!("method '{}' needs a non-empty training split", method_name(resolved.method));
    }
    if resolved.covariance == CovarianceSource::Estimated && n1 < 2 {
        bail!("estimated covariance needs a training split of at least 2 rows");
    }
    if resolved.covariance == CovarianceSource::Known {
        bail!("select needs an explicit covariance file: use --covariance known:<path>");
    }

    // split
    let mut split_rng = ChaCha8Rng::seed_from_u64(derive_seed(resolved.seed, STREAM_SPLIT));
    let mut idx: Vec<usize> = (0..n).collect();
    if !resolved.ordered_split {
        idx.shuffle(&mut split_rng);
    }
    let idx2 = idx.split_off(n1);
    let idx1 = idx;
    let x2 = dataset.x.select_rows(&idx2);
    let y2 = y.select(&idx2);
    let first = if n1 > 0 {
        Some((dataset.x.select_rows(&idx1), y.select(&idx1)))
    } else {
        None
    };

    // covariance model: mean always comes from the data
    let model = match &resolved.covariance {
        CovarianceSource::Estimated => {
            let (x1, _) = first.as_ref().expect("validated above");
            CovarianceModel::estimate(x1, resolved.min_eig_floor)?
        }
        CovarianceSource::KnownFile(path) => {
            let sigma = read_covariance(Path::new(path), p)?;
            let mean = match &first {
                Some((x1, _)) => x1.column_means(),
                None => x2.column_means(),
            };
            CovarianceModel::new(mean, sigma)?
        }
        CovarianceSource::Known => unreachable!("rejected above"),
    };
    let s = model.equicorrelated_s()?;
    let sampler = KnockoffSampler::new(model, s)?;
    let mut knockoff_rng = ChaCha8Rng::seed_from_u64(derive_seed(resolved.seed, STREAM_KNOCKOFF));
    let x2_knock = sampler.sample(&x2, &mut knockoff_rng)?;

    // statistic and selection
    let mut fit_rng = ChaCha8Rng::seed_from_u64(derive_seed(resolved.seed, STREAM_FIT));
    let mut stat_rng = ChaCha8Rng::seed_from_u64(derive_seed(resolved.seed, STREAM_STAT));
    let (w_values, p_values, selection): (DVector<f64>, Option<PValueVector>, SelectionResult) =
        match resolved.method {
            Method::LcdFdr => {
                let q = require_q(&resolved)?;
                let w = lcd_importance(&x2, &x2_knock, &y2, &resolved.predictor, &mut stat_rng)?;
                let sel = select_fdr(&w, q)?;
                (w.values().clone(), None, sel)
            }
            method => {
                let (x1, y1) = first.as_ref().expect("validated above");
                let fitted = resolved.predictor.fit(x1, y1, &mut fit_rng)?;
                let w = error_importance(
                    &fitted,
                    &x2,
                    &y2,
                    &x2_knock,
                    resolved.tie_rule,
                    &mut stat_rng,
                )?;
                let p_values = if resolved.one_sided {
                    pvalues_one_sided(&w)?
                } else {
                    pvalues(&w)?
                };
                let sel = match method {
                    Method::Fdr => select_fdr(&w, require_q(&resolved)?)?,
                    Method::Kfwer => {
                        select_kfwer(&p_values, require_k(&resolved)?, require_alpha(&resolved)?)?
                    }
                    Method::Fdp => {
                        select_fdp(&p_values, require_q(&resolved)?, require_alpha(&resolved)?)?
                    }
                    Method::LcdFdr => unreachable!(),
                };
                (w.values().clone(), Some(p_values), sel)
            }
        };

    let features: Vec<FeatureRecord> = (0..p)
        .map(|j| FeatureRecord {
            index: j + 1,
            label: dataset.labels[j].clone(),
            w: w_values[j],
            p_value: p_values.as_ref().map(|pv| pv.values()[j]),
            selected: selection.selected.contains(&j),
        })
        .collect();
    let report = RunReport {
        seed: resolved.seed,
        dataset: data.display().to_string(),
        response,
        n,
        p,
        n1,
        n2: n - n1,
        method: method_name(resolved.method).to_string(),
        covariance: covariance_name(&resolved.covariance),
        predictor: predictor_name(&resolved.predictor),
        tie_rule: tie_rule_name(resolved.tie_rule).to_string(),
        tie_tolerance: resolved.tie_rule.tolerance,
        one_sided: resolved.one_sided,
        ordered_split: resolved.ordered_split,
        targets: ReportTargets {
            q: resolved.q,
            alpha: resolved.alpha,
            k: resolved.k,
        },
        procedure: ReportProcedure {
            kind: serde_json::to_value(selection.procedure)?
                .as_str()
                .expect("procedure serializes to a string")
                .to_string(),
            threshold_tau: selection.threshold_tau.filter(|t| t.is_finite()),
            stepdown_m: selection.stepdown_m,
        },
        selected_count: selection.selected.len(),
        features,
    };

    let base = out_base(shared, "report");
    let json_path = base.with_extension("json");
    let csv_path = base.with_extension("csv");
    report.write_json(&json_path)?;
    crate::report::write_feature_csv(&csv_path, &report.features)?;

    let selected_labels: Vec<&str> = report
        .features
        .iter()
        .filter(|f| f.selected)
        .map(|f| f.label.as_str())
        .collect();
    println!(
        "selected {} of {} features: [{}]",
        report.selected_count,
        p,
        selected_labels.join(", ")
    );
    println!("seed: {}", resolved.seed);
    println!("report: {} and {}", json_path.display(), csv_path.display());
    eprintln!("elapsed: {:.3?}", started.elapsed());
    Ok(())
}

fn build_experiment_config(file: &FileConfig, shared: &SharedArgs) -> Result<ExperimentConfig> {
    let resolved = resolve(shared, file, CovarianceSource::Known)?;
    let n = file.n.context("config needs 'n'")?;
    let p = file.p.context("config needs 'p'")?;
    let s0_size = file.s0_size.context("config needs 's0_size'")?;
    let trials = file.trials.context("config needs 'trials'")?;
    let split_n1 = shared.n1.or(file.split_n1).unwrap_or(n / 2);
    let split_n2 = match file.split_n2 {
        Some(n2) if shared.n1.is_none() => n2,
        _ => n.saturating_sub(split_n1),
    };
    let covariance_mode = match resolved.covariance {
        CovarianceSource::Estimated => CovarianceMode::Estimated,
        CovarianceSource::Known => CovarianceMode::Known,
        CovarianceSource::KnownFile(_) => {
            bail!("simulate uses the generating covariance; use 'known' or 'estimated'")
        }
    };
    let cfg = ExperimentConfig {
        n,
        p,
        s0_size,
        split_n1,
        split_n2,
        rho: file.rho.unwrap_or(0.5),
        noise_var: file.noise_var.unwrap_or(0.01),
        predictor: resolved.predictor.clone(),
        covariance_mode,
        method: resolved.method,
        targets: eknockoff::selection::Targets {
            q: resolved.q,
            alpha: resolved.alpha,
            k: resolved.k,
        },
        tie_rule: resolved.tie_rule,
        trials,
        master_seed: resolved.seed,
        min_eig_floor: resolved.min_eig_floor,
        ordered_split: resolved.ordered_split,
        shuffle_support: file.shuffle_support.unwrap_or(false),
        one_sided: resolved.one_sided,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn metrics_csv_row(label: &str, cfg: &ExperimentConfig, s: &MetricsSummary) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    vec![
        label.to_string(),
        cfg.n.to_string(),
        cfg.p.to_string(),
        cfg.s0_size.to_string(),
        cfg.split_n1.to_string(),
        cfg.split_n2.to_string(),
        method_name(cfg.method).to_string(),
        predictor_name(&cfg.predictor),
        cfg.trials.to_string(),
        cfg.master_seed.to_string(),
        format!("{}", s.fdr_hat),
        format!("{}", s.fdp_max),
        s.fd_max.to_string(),
        format!("{}", s.power_mean),
        opt(s.exceed_prob),
        opt(s.kfwer_hat),
    ]
}

const METRICS_HEADER: [&str; 16] = [
    "label",
    "n",
    "p",
    "s0_size",
    "n1",
    "n2",
    "method",
    "predictor",
    "trials",
    "seed",
    "fdr",
    "fdp_max",
    "fd_max",
    "power",
    "exceed_prob",
    "kfwer_hat",
];

fn write_histogram_csv(path: &Path, h: &Histogram) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    writer.write_record(["bin_start", "bin_end", "count"])?;
    for (i, count) in h.counts.iter().enumerate() {
        writer.write_record([
            format!("{}", h.edges[i]),
            format!("{}", h.edges[i + 1]),
            count.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn simulate(config_path: Option<&Path>, shared: &SharedArgs) -> Result<()> {
    let started = Instant::now();
    let path = config_path
        .or(shared.config.as_deref())
        .context("simulate needs a config file (positional or --config)")?;
    let file = FileConfig::load(path)?;
    let cfg = build_experiment_config(&file, shared)?;
    let label = file.label.clone().unwrap_or_else(|| "run".to_string());

    if file.n1_sweep.is_some() && file.n2_sweep.is_some() {
        bail!("config sets both n1_sweep and n2_sweep; pick one");
    }

    // (configuration per row, summary per row)
    let mut rows: Vec<(ExperimentConfig, MetricsSummary)> = Vec::new();
    if let Some(n1_values) = &file.n1_sweep {
        let summaries = robustness_sweep(&cfg, n1_values)?;
        for (n1, s) in n1_values.iter().zip(summaries) {
            let mut c = cfg.clone();
            c.split_n1 = *n1;
            c.n = n1 + c.split_n2;
            rows.push((c, s));
        }
    } else if let Some(n2_values) = &file.n2_sweep {
        let summaries = power_sweep(&cfg, n2_values)?;
        for (n2, s) in n2_values.iter().zip(summaries) {
            let mut c = cfg.clone();
            c.split_n2 = *n2;
            c.n = c.split_n1 + n2;
            rows.push((c, s));
        }
    } else {
        let s = run_experiment(&cfg)?;
        rows.push((cfg.clone(), s));
    }

    let base = out_base(shared, "metrics");
    let csv_path = base.with_extension("csv");
    let mut writer = csv::Writer::from_path(&csv_path)
        .with_context(|| format!("cannot create {}", csv_path.display()))?;
    writer.write_record(METRICS_HEADER)?;
    for (c, s) in &rows {
        writer.write_record(metrics_csv_row(&label, c, s))?;
    }
    writer.flush()?;

    // structured text report
    let txt_path = base.with_extension("txt");
    let mut text = String::new();
    text.push_str(&format!("experiment: {label}\n"));
    text.push_str(&format!("seed: {}\n", cfg.master_seed));
    text.push_str(&format!("method: {}\n", method_name(cfg.method)));
    text.push_str(&format!("predictor: {}\n", predictor_name(&cfg.predictor)));
    let mut target_parts: Vec<String> = Vec::new();
    if let Some(q) = cfg.targets.q {
        target_parts.push(format!("q={q}"));
    }
    if let Some(alpha) = cfg.targets.alpha {
        target_parts.push(format!("alpha={alpha}"));
    }
    if let Some(k) = cfg.targets.k {
        target_parts.push(format!("k={k}"));
    }
    text.push_str(&format!("targets: {}\n", target_parts.join(" ")));
    text.push_str(&format!("tie rule: {}\n", tie_rule_name(cfg.tie_rule)));
    text.push_str("\nrows:\n");
    for (c, s) in &rows {
        text.push_str(&format!(
            "  n1={} n2={} trials={}: fdr={:.6} fdp_max={:.6} fd_max={} power={:.6}",
            c.split_n1, c.split_n2, c.trials, s.fdr_hat, s.fdp_max, s.fd_max, s.power_mean
        ));
        if let Some(e) = s.exceed_prob {
            text.push_str(&format!(" exceed_prob={e:.6}"));
        }
        if let Some(k) = s.kfwer_hat {
            text.push_str(&format!(" kfwer_hat={k:.6}"));
        }
        text.push('\n');
    }
    std::fs::write(&txt_path, &text)?;

    if let Some(bins) = file.histogram_bins {
        if rows.len() != 1 {
            bail!("histogram_bins is only supported for non-sweep runs");
        }
        let h = fdp_histogram(&cfg, bins)?;
        let hist_path = base.with_extension("hist.csv");
        write_histogram_csv(&hist_path, &h)?;
        println!("histogram: {}", hist_path.display());
    }

    print!("{text}");
    println!("metrics: {} and {}", csv_path.display(), txt_path.display());
    eprintln!("elapsed: {:.3?}", started.elapsed());
    Ok(())
}

pub fn knockoffs(data: &Path, response: Option<&str>, shared: &SharedArgs) -> Result<()> {
    let started = Instant::now();
    let file = FileConfig::load_opt(shared.config.as_deref())?;
    let resolved = resolve(shared, &file, CovarianceSource::Estimated)?;
    let dataset = read_dataset(data, response.or(file.response.as_deref()))?;
    let p = dataset.x.ncols();

    let model = match &resolved.covariance {
        CovarianceSource::Estimated => CovarianceModel::estimate(&dataset.x, resolved.min_eig_floor)?,
        CovarianceSource::KnownFile(path) => {
            let sigma = read_covariance(Path::new(path), p)?;
            CovarianceModel::new(dataset.x.column_means(), sigma)?
        }
        CovarianceSource::Known => {
            bail!("knockoffs needs an explicit covariance file: use --covariance known:<path>")
        }
    };
    let s = model.equicorrelated_s()?;
    let sampler = KnockoffSampler::new(model, s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(resolved.seed, STREAM_KNOCKOFF));
    let knock = sampler.sample(&dataset.x, &mut rng)?;

    let base = out_base(shared, "knockoffs");
    let out_path = if base.extension().is_some() {
        base
    } else {
        base.with_extension("csv")
    };
    let headers: Vec<String> = dataset
        .labels
        .iter()
        .map(|l| format!("{l}_knockoff"))
        .collect();
    write_matrix_csv(&out_path, &headers, knock.as_matrix())?;
    println!(
        "wrote {} rows x {} knockoff columns to {}",
        knock.nrows(),
        knock.ncols(),
        out_path.display()
    );
    println!("seed: {}", resolved.seed);
    eprintln!("elapsed: {:.3?}", started.elapsed());
    Ok(())
}

