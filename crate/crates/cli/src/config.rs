//! Experiment configuration, read from and echoed to TOML.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bagprior::ccpe::CcpeConfig;
use bagprior::classify::TestPrior;
use bagprior::data::{PoolSource, SizeShift};
use bagprior::scorer::ScorerConfig;
use serde::{Deserialize, Serialize};

/// Environment variable naming the root that relative output directories
/// resolve against.
pub const OUTPUT_ROOT_VAR: &str = "BAGPRIOR_OUTPUT_ROOT";

/// Final-training epochs before `--desk` scaling.
pub const FULL_EPOCHS: usize = 300;
pub const DESK_EPOCHS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Ccpe,
    #[default]
    Eccpe,
    /// Pairwise mutual-model estimates averaged over the top pairs.
    MosM,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Trainer {
    #[default]
    Umssc,
    Mcm,
    None,
}

/// Which priors feed the trainer. `True` is the oracle ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PriorSource {
    #[default]
    Estimated,
    True,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    /// Unit-variance Gaussian classes whose means are `separation` apart.
    Gaussian {
        dim: usize,
        separation: f64,
        test_size: usize,
        /// Positive fraction of the generated test pool.
        test_positive_fraction: f64,
    },
    /// Labeled pools on disk. The training pool is sampled without
    /// replacement into bags.
    Pool {
        train: PoolSource,
        test: Option<PoolSource>,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Gaussian {
            dim: 2,
            separation: 4.0,
            test_size: 5000,
            test_positive_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeShiftConfig {
    pub mode: SizeShift,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BagsConfig {
    pub m: usize,
    /// Priors spread evenly over this range unless `priors` is given.
    pub prior_range: (f64, f64),
    pub priors: Option<Vec<f64>>,
    /// Rows per bag unless `sizes` is given.
    pub bag_size: usize,
    pub sizes: Option<Vec<usize>>,
    /// Declared pair as 1-based bag numbers, larger prior first. Defaults
    /// to the largest-prior bag against the smallest.
    pub pair: Option<(usize, usize)>,
    pub size_shift: Option<SizeShiftConfig>,
}

impl Default for BagsConfig {
    fn default() -> Self {
        Self {
            m: 10,
            prior_range: (0.1, 0.9),
            priors: None,
            bag_size: 2000,
            sizes: None,
            pair: None,
            size_shift: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Repeat `r` runs with seed `seed + r`.
    pub seed: u64,
    pub repeats: usize,
    pub output: PathBuf,
    pub algorithm: Algorithm,
    pub trainer: Trainer,
    pub priors: PriorSource,
    pub test_prior: TestPrior,
    pub dataset: DatasetSpec,
    pub bags: BagsConfig,
    pub ccpe: CcpeConfig,
    /// Final classifier training.
    pub training: ScorerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seed: 0,
            repeats: 1,
            output: PathBuf::from("runs/experiment"),
            algorithm: Algorithm::default(),
            trainer: Trainer::default(),
            priors: PriorSource::default(),
            test_prior: TestPrior::Given(0.5),
            dataset: DatasetSpec::default(),
            bags: BagsConfig::default(),
            ccpe: CcpeConfig::default(),
            training: ScorerConfig {
                epochs: FULL_EPOCHS,
                ..ScorerConfig::default()
            },
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing experiment config")
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            bail!("repeats must be at least 1");
        }
        self.ccpe.validate()?;
        self.training.validate()?;
        if let TestPrior::Given(v) = self.test_prior {
            if !(v > 0.0 && v < 1.0) {
                bail!("given test prior must lie in (0, 1), got {v}");
            }
        }
        match &self.dataset {
            DatasetSpec::Gaussian {
                dim,
                test_size,
                test_positive_fraction,
                ..
            } => {
                if *dim == 0 || *test_size == 0 {
                    bail!("gaussian dataset needs dim >= 1 and test_size >= 1");
                }
                if !(0.0..=1.0).contains(test_positive_fraction) {
                    bail!("test_positive_fraction must lie in [0, 1]");
                }
            }
            DatasetSpec::Pool { .. } => {}
        }
        let b = &self.bags;
        if b.m < 2 {
            bail!("need m >= 2 bags, got {}", b.m);
        }
        if let Some((alpha, beta)) = b.pair {
            if alpha == 0 || beta == 0 || alpha > b.m || beta > b.m {
                bail!("declared pair ({alpha}, {beta}) must name bags 1..={}", b.m);
            }
        }
        Ok(())
    }

    /// Applies the desk-scale epoch reduction (300 → 50, proportional for
    /// other values).
    pub fn desk(&mut self) {
        let e = self.training.epochs;
        self.training.epochs = (e * DESK_EPOCHS).div_ceil(FULL_EPOCHS).max(1);
    }

    /// Output directory after resolving against the output-root variable.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if self.output.is_relative() => PathBuf::from(root).join(&self.output),
            _ => self.output.clone(),
        }
    }

    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        self.seed.wrapping_add(repeat as u64)
    }
}
