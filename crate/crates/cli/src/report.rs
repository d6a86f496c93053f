//! Report files: per-bag estimation rows, per-repeat rows, summaries and
//! the config echo.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use bagprior::ccpe::Pair;
use bagprior::prior_est::EstimatorKind;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, PriorSource, Trainer};
use crate::pipeline::{RepeatOutcome, TestPriorMode};

pub const CONFIG_FILE: &str = "config.toml";
pub const ESTIMATION_FILE: &str = "estimation.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationRow {
    pub variant: String,
    pub repeat: usize,
    pub seed: u64,
    /// 1-based.
    pub bag: usize,
    pub true_prior: f64,
    pub estimated_prior: f64,
    pub abs_error: f64,
    pub side1: Option<f64>,
    pub side2: Option<f64>,
    pub method: EstimatorKind,
    pub one_sided: bool,
    pub flagged: bool,
    /// Contributing pairs as `a>b`, 1-based, `;`-separated.
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRow {
    pub variant: String,
    pub repeat: usize,
    pub seed: u64,
    pub status: String,
    pub trainer: Trainer,
    pub priors: PriorSource,
    pub test_prior_mode: Option<TestPriorMode>,
    pub test_prior: Option<f64>,
    pub mae_x100: Option<f64>,
    pub accuracy: Option<f64>,
    pub declared_pair_used: Option<bool>,
    pub skipped_pairs: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub repeats: usize,
    pub accuracy_mean: Option<f64>,
    pub accuracy_std: Option<f64>,
    pub mae_x100_mean: Option<f64>,
    pub mae_x100_std: Option<f64>,
}

fn pair_text(p: Pair) -> String {
    format!("{}>{}", p.0 + 1, p.1 + 1)
}

pub fn estimation_rows(o: &RepeatOutcome) -> Vec<EstimationRow> {
    let Some(v) = &o.estimates else {
        return Vec::new();
    };
    v.estimates
        .iter()
        .enumerate()
        .map(|(j, e)| EstimationRow {
            variant: o.variant.name().into(),
            repeat: o.repeat,
            seed: o.seed,
            bag: j + 1,
            true_prior: o.truth[j],
            estimated_prior: e.value,
            abs_error: (e.value - o.truth[j]).abs(),
            side1: e.side1,
            side2: e.side2,
            method: e.method,
            one_sided: e.one_sided,
            flagged: v.flagged[j],
            provenance: v.provenance[j].iter().map(|&p| pair_text(p)).collect::<Vec<_>>().join(";"),
        })
        .collect()
}

pub fn repeat_row(cfg: &ExperimentConfig, variant: &str, repeat: usize, r: &Result<RepeatOutcome>) -> RepeatRow {
    let mut row = RepeatRow {
        variant: variant.into(),
        repeat,
        seed: cfg.repeat_seed(repeat),
        status: "ok".into(),
        trainer: cfg.trainer,
        priors: cfg.priors,
        test_prior_mode: None,
        test_prior: None,
        mae_x100: None,
        accuracy: None,
        declared_pair_used: None,
        skipped_pairs: String::new(),
        error: String::new(),
    };
    match r {
        Ok(o) => {
            row.test_prior = o.test_prior.map(|t| t.0);
            row.test_prior_mode = o.test_prior.map(|t| t.1);
            row.mae_x100 = o.mae().map(|m| m * 100.0);
            row.accuracy = o.accuracy;
            if let Some(v) = &o.estimates {
                row.declared_pair_used = Some(v.declared_included);
                row.skipped_pairs = v
                    .skipped_pairs
                    .iter()
                    .map(|(p, e)| format!("{}: {e}", pair_text(*p)))
                    .collect::<Vec<_>>()
                    .join("; ");
            }
        }
        Err(e) => {
            row.status = "failed".into();
            row.error = format!("{e:#}");
        }
    }
    row
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, std))
}

/// Summary rows per variant, in first-appearance order.
pub fn summarize(rows: &[RepeatRow]) -> Vec<SummaryRow> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.variant.as_str()) {
            order.push(&r.variant);
        }
    }
    let mut out = Vec::new();
    for variant in order {
        let mine: Vec<&RepeatRow> = rows.iter().filter(|r| r.variant == variant).collect();
        let metrics: [(&str, Vec<f64>); 2] = [
            ("mae_x100", mine.iter().filter_map(|r| r.mae_x100).collect()),
            ("accuracy", mine.iter().filter_map(|r| r.accuracy).collect()),
        ];
        for (metric, values) in metrics {
            if let Some((mean, std)) = mean_std(&values) {
                out.push(SummaryRow {
                    variant: variant.into(),
                    metric: metric.into(),
                    mean,
                    std,
                    n: values.len(),
                });
            }
        }
        let failed = mine.iter().filter(|r| r.status != "ok").count();
        out.push(SummaryRow {
            variant: variant.into(),
            metric: "failed".into(),
            mean: failed as f64,
            std: 0.0,
            n: mine.len(),
        });
    }
    out
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn write_config_echo(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    fs::write(dir.join(CONFIG_FILE), cfg.to_toml()?)?;
    Ok(())
}

/// Everything a report directory holds.
#[derive(Debug)]
pub struct ReportDir {
    pub config: ExperimentConfig,
    pub estimation: Vec<EstimationRow>,
    /// `(file stem, rows)` for each per-repeat file present.
    pub repeats: Vec<(String, Vec<RepeatRow>)>,
    pub sweep: Vec<SweepRow>,
}

pub const REPEAT_FILES: [&str; 3] = ["repeats", "accuracy", "ablation"];

impl ReportDir {
    pub fn read(dir: &Path) -> Result<Self> {
        let config = ExperimentConfig::load(&dir.join(CONFIG_FILE))?;
        let est_path = dir.join(ESTIMATION_FILE);
        let estimation = if est_path.exists() { read_csv(&est_path)? } else { Vec::new() };
        let mut repeats = Vec::new();
        for stem in REPEAT_FILES {
            let p = dir.join(format!("{stem}.csv"));
            if p.exists() {
                repeats.push((stem.to_string(), read_csv(&p)?));
            }
        }
        let sweep_path = dir.join(SWEEP_FILE);
        let sweep = if sweep_path.exists() { read_csv(&sweep_path)? } else { Vec::new() };
        if repeats.is_empty() && sweep.is_empty() {
            bail!("{} holds no report files", dir.display());
        }
        Ok(Self {
            config,
            estimation,
            repeats,
            sweep,
        })
    }

    /// Recomputes each repeat's MAE from the per-bag rows and compares it
    /// with the recorded value.
    pub fn check_mae(&self) -> Result<()> {
        let mut by_key: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
        for e in &self.estimation {
            by_key.entry((e.variant.clone(), e.repeat)).or_default().push(e.abs_error);
        }
        for (_, rows) in &self.repeats {
            for r in rows {
                let Some(recorded) = r.mae_x100 else { continue };
                let Some(errs) = by_key.get(&(r.variant.clone(), r.repeat)) else {
                    bail!("no estimation rows for {} repeat {}", r.variant, r.repeat);
                };
                let mae = errs.iter().sum::<f64>() / errs.len() as f64 * 100.0;
                if (mae - recorded).abs() > 1e-9 * recorded.abs().max(1.0) {
                    bail!("{} repeat {}: recorded MAE x100 {recorded}, rows give {mae}", r.variant, r.repeat);
                }
            }
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment {} (seed {}, {} repeats)", self.config.name, self.config.seed, self.config.repeats);
        for (stem, rows) in &self.repeats {
            let _ = writeln!(s, "\n{stem}:");
            let _ = writeln!(s, "  {:<26} {:>16} {:>18} {:>7}", "variant", "MAE x100", "accuracy", "failed");
            for sum in summarize(rows).chunk_by(|a, b| a.variant == b.variant) {
                let pick = |m: &str| sum.iter().find(|r| r.metric == m);
                let fmt = |r: Option<&SummaryRow>, scale: f64| match r {
                    Some(r) => format!("{:.2} ± {:.2}", r.mean * scale, r.std * scale),
                    None => "-".into(),
                };
                let failed = pick("failed").map_or(0.0, |r| r.mean);
                let _ = writeln!(
                    s,
                    "  {:<26} {:>16} {:>18} {:>7}",
                    sum[0].variant,
                    fmt(pick("mae_x100"), 1.0),
                    fmt(pick("accuracy"), 100.0),
                    failed
                );
            }
        }
        if !self.sweep.is_empty() {
            let _ = writeln!(s, "\nset-number sweep:");
            for r in &self.sweep {
                let acc = r.accuracy_mean.map_or("-".into(), |a| format!("{:.2}", a * 100.0));
                let _ = writeln!(s, "  m = {:>3}  accuracy {acc}", r.m);
            }
        }
        s
    }
}
