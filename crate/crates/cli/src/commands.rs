//! The subcommands, callable as library functions.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bagprior::data::{load_csv_pool, write_csv as write_features};
use bagprior::scorer::{accuracy, Scorer};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, PriorSource, Trainer};
use crate::pipeline::{bag_spec, build_data, run_all, RepeatOutcome, Source, Variant};
use crate::report::{
    estimation_rows, mean_std, repeat_row, summarize, write_config_echo, write_csv, EstimationRow, ReportDir,
    RepeatRow, SummaryRow, SweepRow, ESTIMATION_FILE, SUMMARY_FILE, SWEEP_FILE,
};

/// Result of a multi-repeat command.
#[derive(Debug)]
pub struct Report {
    pub dir: PathBuf,
    pub rows: Vec<RepeatRow>,
    pub estimation: Vec<EstimationRow>,
    pub summary: Vec<SummaryRow>,
    pub outcomes: Vec<RepeatOutcome>,
}

impl Report {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.status == "ok")
    }

    /// Per-repeat values of `metric` ("mae" or "accuracy") for `variant`,
    /// in repeat order, skipping failed repeats.
    pub fn values(&self, variant: Variant, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.variant == variant.name())
            .filter_map(|r| match metric {
                "mae" => r.mae_x100.map(|v| v / 100.0),
                _ => r.accuracy,
            })
            .collect()
    }
}

fn prepare_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn run_variants(cfg: &ExperimentConfig, variants: &[Variant], repeat_file: &str) -> Result<Report> {
    let dir = prepare_dir(cfg)?;
    let source = Source::load(cfg)?;
    let mut rows = Vec::new();
    let mut estimation = Vec::new();
    let mut outcomes = Vec::new();
    for &v in variants {
        for (r, res) in run_all(cfg, &source, v) {
            if let Err(e) = &res {
                log::error!("{} repeat {r} failed: {e:#}", v.name());
            }
            rows.push(repeat_row(cfg, v.name(), r, &res));
            if let Ok(o) = res {
                estimation.extend(estimation_rows(&o));
                outcomes.push(o);
            }
        }
    }
    let summary = summarize(&rows);
    write_csv(&dir.join(format!("{repeat_file}.csv")), &rows)?;
    write_csv(&dir.join(ESTIMATION_FILE), &estimation)?;
    write_csv(&dir.join(SUMMARY_FILE), &summary)?;
    write_config_echo(&dir, cfg)?;
    Ok(Report {
        dir,
        rows,
        estimation,
        summary,
        outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub m: usize,
    /// 1-based, larger prior first.
    pub pair: (usize, usize),
    pub files: Vec<String>,
    pub sizes: Vec<usize>,
    pub priors: Vec<f64>,
    pub empirical_priors: Vec<f64>,
    pub test_file: Option<String>,
}

/// Writes the first repeat's bags as per-bag feature CSVs plus a manifest.
pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<Manifest> {
    let dir = prepare_dir(cfg)?;
    let seed = cfg.repeat_seed(0);
    let source = Source::load(cfg)?;
    let spec = bag_spec(cfg, seed)?;
    let (bags, test) = build_data(cfg, &source, seed)?;
    let bag_dir = dir.join("bags");
    fs::create_dir_all(&bag_dir)?;
    let mut files = Vec::new();
    for j in 0..bags.m() {
        let name = format!("bags/bag-{:02}.csv", j + 1);
        write_features(BufWriter::new(File::create(dir.join(&name))?), bags.bag(j), None)?;
        files.push(name);
    }
    let test_file = match &test {
        Some(t) => {
            write_features(BufWriter::new(File::create(dir.join("test.csv"))?), t.features(), Some(t.labels()))?;
            Some("test.csv".to_string())
        }
        None => None,
    };
    let (a, b) = bags.pair();
    let manifest = Manifest {
        name: cfg.name.clone(),
        seed,
        m: bags.m(),
        pair: (a + 1, b + 1),
        files,
        sizes: bags.sizes(),
        priors: spec.priors.clone(),
        empirical_priors: bags.empirical_priors().expect("sampled bags keep hidden labels"),
        test_file,
    };
    fs::write(dir.join("manifest.toml"), toml::to_string(&manifest)?)?;
    write_config_echo(&dir, cfg)?;
    Ok(manifest)
}

/// Estimates every bag prior, once per repeat.
pub fn cmd_estimate(cfg: &ExperimentConfig) -> Result<Report> {
    let run_cfg = ExperimentConfig {
        trainer: Trainer::None,
        priors: PriorSource::Estimated,
        ..cfg.clone()
    };
    let mut report = run_variants(&run_cfg, &[Variant::Full], "repeats")?;
    write_config_echo(&report.dir, cfg)?;
    report.dir = cfg.output_dir();
    Ok(report)
}

/// Full pipeline per repeat; writes a checkpoint per repeat.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Report> {
    let report = run_variants(cfg, &[Variant::Full], "accuracy")?;
    let ck = report.dir.join("checkpoints");
    fs::create_dir_all(&ck)?;
    for o in &report.outcomes {
        if let Some(f) = &o.scorer {
            f.save(BufWriter::new(File::create(ck.join(format!("repeat-{:02}.plsc", o.repeat)))?))?;
        }
    }
    Ok(report)
}

/// The full method plus each requested ablation on the same seeds.
pub fn cmd_ablate(cfg: &ExperimentConfig, drops: &[Variant]) -> Result<Report> {
    let mut variants = vec![Variant::Full];
    variants.extend(drops.iter().copied().filter(|&v| v != Variant::Full));
    run_variants(cfg, &variants, "ablation")
}

/// Trains at each bag count in `ms` with evenly spread priors; each `m`
/// gets its own subdirectory and one row of the plot file.
pub fn cmd_sweep(cfg: &ExperimentConfig, ms: &[usize]) -> Result<Vec<SweepRow>> {
    let dir = prepare_dir(cfg)?;
    let mut rows = Vec::new();
    for &m in ms {
        let mut c = cfg.clone();
        c.bags.m = m;
        c.bags.priors = None;
        c.bags.sizes = None;
        c.bags.pair = None;
        c.output = dir.join(format!("m-{m:02}"));
        c.validate()?;
        let r = cmd_train(&c)?;
        let acc = mean_std(&r.values(Variant::Full, "accuracy"));
        let mae = mean_std(&r.values(Variant::Full, "mae").iter().map(|v| v * 100.0).collect::<Vec<_>>());
        rows.push(SweepRow {
            m,
            repeats: cfg.repeats,
            accuracy_mean: acc.map(|a| a.0),
            accuracy_std: acc.map(|a| a.1),
            mae_x100_mean: mae.map(|a| a.0),
            mae_x100_std: mae.map(|a| a.1),
        });
    }
    write_csv(&dir.join(SWEEP_FILE), &rows)?;
    write_config_echo(&dir, cfg)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub checkpoint: String,
    pub test: String,
    pub rows: usize,
    pub accuracy: f64,
}

/// Accuracy of a saved scorer on a labeled CSV, or on the configured test
/// pool of the first repeat.
pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint: &Path, test: Option<&Path>) -> Result<EvalRow> {
    let f = Scorer::load(File::open(checkpoint).with_context(|| format!("opening {}", checkpoint.display()))?)?;
    let (pool, test_name) = match test {
        Some(p) => (load_csv_pool(p)?, p.display().to_string()),
        None => {
            let source = Source::load(cfg)?;
            let (_, t) = build_data(cfg, &source, cfg.repeat_seed(0))?;
            (t.context("the configured dataset has no test pool")?, "configured".to_string())
        }
    };
    let row = EvalRow {
        checkpoint: checkpoint.display().to_string(),
        test: test_name,
        rows: pool.len(),
        accuracy: accuracy(&f, pool.features(), pool.labels())?,
    };
    let dir = prepare_dir(cfg)?;
    write_csv(&dir.join("eval.csv"), std::slice::from_ref(&row))?;
    Ok(row)
}

/// Reads a report directory back, verifies it, and renders a summary.
pub fn cmd_report(dir: &Path) -> Result<String> {
    let r = ReportDir::read(dir)?;
    r.check_mae()?;
    Ok(r.render())
}
