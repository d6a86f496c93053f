//! One repeat of an experiment: build bags, estimate priors, train and
//! evaluate.

use anyhow::{bail, Context, Result};
use bagprior::ccpe::{
    collect_confident, run_ccpe_detailed, run_eccpe_detailed, run_mos_m, run_pair, CcpeConfig, PairRun, PriorVector,
};
use bagprior::classify::{estimate_test_prior, train_mcm, train_umssc, TestPrior};
use bagprior::data::{
    apply_size_shift, even_priors, gaussian_pool, gaussian_test_pool, load_pool, positive_count, sample_bags,
    BagCollection, BagSpec, LabeledPool,
};
use bagprior::prior_est::{EstimatorConfig, EstimatorKind};
use bagprior::scorer::{accuracy, train_binary, Scorer};
use bagprior::seed::derive;
use ndarray::concatenate;
use ndarray::Axis;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Algorithm, DatasetSpec, ExperimentConfig, PriorSource, Trainer};

/// Seed-derivation tags mixed into each repeat seed.
pub const TAG_POOL: u64 = 1;
pub const TAG_TEST: u64 = 2;
pub const TAG_BAGS: u64 = 3;
pub const TAG_ESTIMATE: u64 = 4;
pub const TAG_TRAIN: u64 = 5;
pub const TAG_SHIFT: u64 = 6;
pub const TAG_TEST_PRIOR: u64 = 7;

/// Keeps an estimated test prior away from the endpoints, where the
/// transition degenerates.
const TEST_PRIOR_CLAMP: f64 = 1e-3;

/// The full method or one of its ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    /// Train a plain binary scorer on the declared pair's confident sets.
    NoPriorEstimation,
    /// Hand the raw pseudo-labeled bags to the estimator.
    NoConfidentCollection,
    /// Select with a selector scorer trained ten times longer.
    NoWarmup,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoPriorEstimation => "no-prior-estimation",
            Variant::NoConfidentCollection => "no-confident-collection",
            Variant::NoWarmup => "no-warmup",
        }
    }

    fn ccpe(self, base: &CcpeConfig) -> CcpeConfig {
        let mut c = base.clone();
        match self {
            Variant::NoConfidentCollection => c.confident_collection = false,
            Variant::NoWarmup => c.warmup.epochs *= 10,
            _ => {}
        }
        c
    }
}

/// Labeled data behind every repeat.
pub enum Source {
    Gaussian {
        dim: usize,
        separation: f64,
        test_size: usize,
        test_positive_fraction: f64,
    },
    Pool {
        train: LabeledPool,
        test: Option<LabeledPool>,
    },
}

impl Source {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(match &cfg.dataset {
            DatasetSpec::Gaussian {
                dim,
                separation,
                test_size,
                test_positive_fraction,
            } => Source::Gaussian {
                dim: *dim,
                separation: *separation,
                test_size: *test_size,
                test_positive_fraction: *test_positive_fraction,
            },
            DatasetSpec::Pool { train, test } => Source::Pool {
                train: load_pool(train).context("loading training pool")?,
                test: test.as_ref().map(load_pool).transpose().context("loading test pool")?,
            },
        })
    }
}

/// Bag recipe for a repeat seed, with bag indices converted to 0-based.
pub fn bag_spec(cfg: &ExperimentConfig, seed: u64) -> Result<BagSpec> {
    let b = &cfg.bags;
    let priors = match &b.priors {
        Some(p) => {
            if p.len() != b.m {
                bail!("{} priors given for m = {}", p.len(), b.m);
            }
            p.clone()
        }
        None => even_priors(b.m, b.prior_range.0, b.prior_range.1)?,
    };
    let sizes = match &b.sizes {
        Some(s) => s.clone(),
        None => vec![b.bag_size; b.m],
    };
    let pair = match b.pair {
        Some((a, c)) => (a - 1, c - 1),
        None => {
            let arg = |better: fn(f64, f64) -> bool| {
                (0..priors.len()).fold(0, |k, j| if better(priors[j], priors[k]) { j } else { k })
            };
            (arg(|x, y| x > y), arg(|x, y| x < y))
        }
    };
    let spec = BagSpec::new(priors, sizes, pair, derive(seed, &[TAG_BAGS]))?;
    Ok(match b.size_shift {
        Some(s) => apply_size_shift(&spec, s.tau, s.mode, derive(seed, &[TAG_SHIFT]))?,
        None => spec,
    })
}

/// Bags (with hidden labels) and the labeled test pool for one repeat.
pub fn build_data(cfg: &ExperimentConfig, source: &Source, seed: u64) -> Result<(BagCollection, Option<LabeledPool>)> {
    let spec = bag_spec(cfg, seed)?;
    match source {
        Source::Gaussian {
            dim,
            separation,
            test_size,
            test_positive_fraction,
        } => {
            let n_pos: usize = spec.priors.iter().zip(&spec.sizes).map(|(&p, &n)| positive_count(p, n)).sum();
            let n_neg = spec.sizes.iter().sum::<usize>() - n_pos;
            let pool = gaussian_pool(n_pos, n_neg, *dim, *separation, derive(seed, &[TAG_POOL]))?;
            let test = gaussian_test_pool(
                *test_size,
                *test_positive_fraction,
                *dim,
                *separation,
                derive(seed, &[TAG_TEST]),
            )?;
            Ok((sample_bags(&pool, &spec)?, Some(test)))
        }
        Source::Pool { train, test } => Ok((sample_bags(train, &spec)?, test.clone())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestPriorMode {
    Given,
    Estimated,
}

#[derive(Debug, Clone)]
pub struct RepeatOutcome {
    pub repeat: usize,
    pub seed: u64,
    pub variant: Variant,
    pub truth: Vec<f64>,
    /// Absent when the priors were not estimated.
    pub estimates: Option<PriorVector>,
    pub test_prior: Option<(f64, TestPriorMode)>,
    pub accuracy: Option<f64>,
    pub scorer: Option<Scorer>,
}

impl RepeatOutcome {
    pub fn mae(&self) -> Option<f64> {
        self.estimates.as_ref().map(|e| e.mae(&self.truth))
    }
}

fn estimate_priors(
    cfg: &ExperimentConfig,
    bags: &BagCollection,
    ccpe: &CcpeConfig,
) -> Result<(PriorVector, Option<PairRun>)> {
    Ok(match cfg.algorithm {
        Algorithm::Ccpe => {
            let (v, r) = run_ccpe_detailed(bags, ccpe)?;
            (v, Some(r))
        }
        Algorithm::Eccpe => {
            let (v, r) = run_eccpe_detailed(bags, ccpe)?;
            (v, Some(r))
        }
        Algorithm::MosM => (run_mos_m(bags, ccpe)?, None),
    })
}

fn pairwise_safe(est: &EstimatorConfig) -> EstimatorConfig {
    let mut e = est.clone();
    if e.kind == EstimatorKind::Mutual {
        e.kind = EstimatorKind::Standard;
    }
    e
}

/// Runs repeat `repeat` of `cfg` as `variant`.
pub fn run_repeat(cfg: &ExperimentConfig, source: &Source, repeat: usize, variant: Variant) -> Result<RepeatOutcome> {
    let seed = cfg.repeat_seed(repeat);
    let (bags, test) = build_data(cfg, source, seed)?;
    let truth = bags.empirical_priors().expect("sampled bags keep hidden labels");
    let mut ccpe = variant.ccpe(&cfg.ccpe);
    ccpe.seed = derive(seed, &[TAG_ESTIMATE]);
    let train_cfg = cfg.training.with_seed(derive(seed, &[TAG_TRAIN]));
    let mut out = RepeatOutcome {
        repeat,
        seed,
        variant,
        truth,
        estimates: None,
        test_prior: None,
        accuracy: None,
        scorer: None,
    };
    let needs_test = cfg.trainer != Trainer::None || variant == Variant::NoPriorEstimation;
    let test = match (needs_test, test) {
        (true, None) => bail!("training needs a labeled test pool"),
        (_, t) => t,
    };

    if variant == Variant::NoPriorEstimation {
        let (set, _, confident) = collect_confident(&bags, bags.pair(), &ccpe)?;
        let (pos, neg) = (confident.positives(&set), confident.negatives(&set));
        let x = concatenate![Axis(0), pos, neg];
        let y: Vec<f64> = (0..x.nrows()).map(|i| if i < pos.nrows() { 1.0 } else { -1.0 }).collect();
        let f = train_binary(&train_cfg, &x, &y, None)?;
        let test = test.expect("checked above");
        out.accuracy = Some(accuracy(&f, test.features(), test.labels())?);
        out.scorer = Some(f);
        return Ok(out);
    }

    let mut run = None;
    if cfg.priors == PriorSource::Estimated {
        let (v, r) = estimate_priors(cfg, &bags, &ccpe)?;
        out.estimates = Some(v);
        run = r;
    }
    if cfg.trainer == Trainer::None {
        return Ok(out);
    }
    let test = test.expect("checked above");
    let pi_d = match cfg.test_prior {
        TestPrior::Given(v) => (v, TestPriorMode::Given),
        TestPrior::Estimate => {
            let run = match run {
                Some(r) => r,
                None => {
                    let mut c = ccpe.clone();
                    c.estimator = pairwise_safe(&c.estimator);
                    run_pair(&bags, bags.pair(), &c)?
                }
            };
            let e = estimate_test_prior(
                test.features(),
                &run.set,
                &run.confident,
                &pairwise_safe(&ccpe.estimator),
                derive(seed, &[TAG_TEST_PRIOR]),
            )?;
            (e.value.clamp(TEST_PRIOR_CLAMP, 1.0 - TEST_PRIOR_CLAMP), TestPriorMode::Estimated)
        }
    };
    out.test_prior = Some(pi_d);
    let priors = match &out.estimates {
        Some(v) => v.values(),
        None => out.truth.clone(),
    };
    let f = match cfg.trainer {
        Trainer::Umssc => train_umssc(&bags, &priors, pi_d.0, &train_cfg)?.0,
        Trainer::Mcm => train_mcm(&bags, &priors, pi_d.0, &train_cfg)?.0,
        Trainer::None => unreachable!(),
    };
    out.accuracy = Some(accuracy(&f, test.features(), test.labels())?);
    out.scorer = Some(f);
    Ok(out)
}

/// Every repeat of `cfg` as `variant`, in repeat order.
pub fn run_all(cfg: &ExperimentConfig, source: &Source, variant: Variant) -> Vec<(usize, Result<RepeatOutcome>)> {
    (0..cfg.repeats)
        .into_par_iter()
        .map(|r| (r, run_repeat(cfg, source, r, variant)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_pair_is_extreme_bags() {
        let cfg = ExperimentConfig::default();
        let spec = bag_spec(&cfg, 0).unwrap();
        assert_eq!(spec.pair, (9, 0));
        let mut cfg = ExperimentConfig::default();
        cfg.bags.m = 3;
        cfg.bags.priors = Some(vec![0.5, 0.9, 0.2]);
        assert_eq!(bag_spec(&cfg, 0).unwrap().pair, (1, 2));
        cfg.bags.pair = Some((1, 3));
        assert_eq!(bag_spec(&cfg, 0).unwrap().pair, (0, 2));
        cfg.bags.pair = Some((3, 1));
        assert!(bag_spec(&cfg, 0).is_err());
    }

    #[test]
    fn gaussian_pool_is_sized_to_the_bags() {
        let mut cfg = ExperimentConfig::default();
        cfg.bags.m = 4;
        cfg.bags.bag_size = 100;
        let source = Source::load(&cfg).unwrap();
        let (bags, test) = build_data(&cfg, &source, 3).unwrap();
        assert_eq!(bags.sizes(), vec![100; 4]);
        assert_eq!(test.unwrap().len(), 5000);
    }
}
