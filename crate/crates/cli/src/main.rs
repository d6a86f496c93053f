use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use bagprior::classify::TestPrior;
use bagprior::confident::SelectorKind;
use bagprior::prior_est::EstimatorKind;
use bagprior_cli::commands::{cmd_ablate, cmd_estimate, cmd_eval, cmd_report, cmd_sweep, cmd_synth, cmd_train, Report};
use bagprior_cli::config::{Algorithm, ExperimentConfig, PriorSource, Trainer};
use bagprior_cli::pipeline::Variant;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bagprior", version, about = "Class priors and classifiers from unlabeled bags")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Selector {
    Loss,
    ConfidentJoint,
    Alignment,
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    Standard,
    Rempe,
    Bbe,
    Mutual,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Drop {
    PriorEstimation,
    ConfidentCollection,
    Warmup,
}

/// Overrides applied on top of the config file.
#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Relative paths resolve against $BAGPRIOR_OUTPUT_ROOT when set.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    bag_size: Option<usize>,
    #[arg(long, value_enum)]
    algorithm: Option<Algorithm>,
    #[arg(long, value_enum)]
    trainer: Option<Trainer>,
    #[arg(long, value_enum)]
    selector: Option<Selector>,
    #[arg(long, value_enum)]
    estimator: Option<Estimator>,
    /// Number of top-ranked pairs averaged (γ).
    #[arg(long)]
    gamma: Option<usize>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    /// Final-training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// A value in (0, 1), or `estimate`.
    #[arg(long)]
    test_prior: Option<String>,
    /// Train on the true bag priors.
    #[arg(long)]
    true_priors: bool,
    /// Scale final-training epochs down to desk size (300 → 50).
    #[arg(long)]
    desk: bool,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.name {
            cfg.name = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.repeats {
            cfg.repeats = v;
        }
        if let Some(v) = &self.output {
            cfg.output = v.clone();
        }
        if let Some(v) = self.m {
            cfg.bags.m = v;
        }
        if let Some(v) = self.bag_size {
            cfg.bags.bag_size = v;
        }
        if let Some(v) = self.algorithm {
            cfg.algorithm = v;
        }
        if let Some(v) = self.trainer {
            cfg.trainer = v;
        }
        if let Some(v) = self.selector {
            cfg.ccpe.selector.kind = match v {
                Selector::Loss => SelectorKind::Loss,
                Selector::ConfidentJoint => SelectorKind::ConfidentJoint,
                Selector::Alignment => SelectorKind::Alignment,
            };
        }
        if let Some(v) = self.estimator {
            cfg.ccpe.estimator.kind = match v {
                Estimator::Standard => EstimatorKind::Standard,
                Estimator::Rempe => EstimatorKind::Rempe,
                Estimator::Bbe => EstimatorKind::Bbe,
                Estimator::Mutual => EstimatorKind::Mutual,
            };
        }
        if let Some(v) = self.gamma {
            cfg.ccpe.pair_selection_count = v;
        }
        if let Some(v) = self.warmup_epochs {
            cfg.ccpe.warmup.epochs = v;
        }
        if let Some(v) = self.epochs {
            cfg.training.epochs = v;
        }
        if let Some(v) = &self.test_prior {
            cfg.test_prior = match v.as_str() {
                "estimate" => TestPrior::Estimate,
                s => match s.parse::<f64>() {
                    Ok(x) => TestPrior::Given(x),
                    Err(_) => bail!("--test-prior takes a number or `estimate`, got {s}"),
                },
            };
        }
        if self.true_priors {
            cfg.priors = PriorSource::True;
        }
        if self.desk {
            cfg.desk();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the first repeat's bags and a manifest.
    Synth(Common),
    /// Estimate bag priors over all repeats.
    Estimate(Common),
    /// Estimate, train and evaluate over all repeats.
    Train {
        #[command(flatten)]
        common: Common,
        /// Run a set-number sweep over these bag counts instead.
        #[arg(long, value_delimiter = ',')]
        sweep_m: Vec<usize>,
    },
    /// Accuracy of a saved checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Labeled CSV; the configured test pool is used otherwise.
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Compare the full method with ablated variants on the same seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Component to drop; repeatable. All three by default.
        #[arg(long, value_enum)]
        drop: Vec<Drop>,
    },
    /// Verify and summarize a report directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn finish(r: &Report) -> bool {
    println!("report written to {}", r.dir.display());
    for s in &r.summary {
        println!("{:<26} {:<9} mean {:.6} std {:.6} n {}", s.variant, s.metric, s.mean, s.std, s.n);
    }
    r.all_ok()
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    Ok(match cli.command {
        Command::Synth(c) => {
            let cfg = c.resolve()?;
            let m = cmd_synth(&cfg)?;
            println!("wrote {} bags to {}", m.m, cfg.output_dir().display());
            true
        }
        Command::Estimate(c) => finish(&cmd_estimate(&c.resolve()?)?),
        Command::Train { common, sweep_m } => {
            let cfg = common.resolve()?;
            if sweep_m.is_empty() {
                finish(&cmd_train(&cfg)?)
            } else {
                let rows = cmd_sweep(&cfg, &sweep_m)?;
                for r in &rows {
                    println!("m {:>3} accuracy {:?}", r.m, r.accuracy_mean);
                }
                rows.iter().all(|r| r.accuracy_mean.is_some())
            }
        }
        Command::Eval {
            common,
            checkpoint,
            test,
        } => {
            let r = cmd_eval(&common.resolve()?, &checkpoint, test.as_deref())?;
            println!("accuracy {} on {} rows", r.accuracy, r.rows);
            true
        }
        Command::Ablate { common, drop } => {
            let drops = if drop.is_empty() {
                vec![Drop::PriorEstimation, Drop::ConfidentCollection, Drop::Warmup]
            } else {
                drop
            };
            let variants: Vec<Variant> = drops
                .into_iter()
                .map(|d| match d {
                    Drop::PriorEstimation => Variant::NoPriorEstimation,
                    Drop::ConfidentCollection => Variant::NoConfidentCollection,
                    Drop::Warmup => Variant::NoWarmup,
                })
                .collect();
            finish(&cmd_ablate(&common.resolve()?, &variants)?)
        }
        Command::Report { dir } => {
            print!("{}", cmd_report(&dir)?);
            true
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
