//! Estimation of every bag prior from one declared pair, and its refinement
//! by averaging over the pairs with the largest estimated prior gaps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confident::{assign_pseudo_labels, select, ConfidentSets, PseudoLabeledSet, SelectorConfig};
use crate::data::BagCollection;
use crate::error::{Error, Result};
use crate::prior_est::{
    estimate, estimate_from_references, estimate_pair_mutual, regroup, EstimatorConfig, EstimatorKind,
    PriorEstimate,
};
use crate::scorer::{train_binary, Scorer, ScorerConfig};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CcpeConfig {
    pub selector: SelectorConfig,
    pub estimator: EstimatorConfig,
    /// Number of top-ranked pairs averaged by the refinement (γ).
    pub pair_selection_count: usize,
    pub warmup: ScorerConfig,
    /// When off, the estimator sees the raw pseudo-labeled bags as its
    /// reference sets.
    pub confident_collection: bool,
    pub seed: u64,
}

impl Default for CcpeConfig {
    fn default() -> Self {
        Self {
            selector: SelectorConfig::default(),
            estimator: EstimatorConfig::default(),
            pair_selection_count: 4,
            warmup: ScorerConfig {
                epochs: 10,
                ..ScorerConfig::default()
            },
            confident_collection: true,
            seed: 0,
        }
    }
}

impl CcpeConfig {
    pub fn validate(&self) -> Result<()> {
        self.selector.validate()?;
        self.estimator.validate()?;
        self.warmup.validate()?;
        if self.pair_selection_count == 0 {
            return Err(Error::Config("pair_selection_count must be at least 1".into()));
        }
        Ok(())
    }

    fn check_gamma(&self, m: usize) -> Result<()> {
        let pairs = m * (m - 1) / 2;
        if self.pair_selection_count > pairs {
            return Err(Error::Config(format!(
                "pair_selection_count {} exceeds the {pairs} available pairs",
                self.pair_selection_count
            )));
        }
        Ok(())
    }
}

/// A bag pair with the bag believed to have the larger prior first.
pub type Pair = (usize, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorVector {
    pub estimates: Vec<PriorEstimate>,
    /// Pairs whose pipelines contributed to each bag's value.
    pub provenance: Vec<Vec<Pair>>,
    /// Bags whose value is a fallback (kept from initialization).
    pub flagged: Vec<bool>,
    pub skipped_pairs: Vec<(Pair, String)>,
    /// Whether the declared pair was among the averaged pairs.
    pub declared_included: bool,
}

impl PriorVector {
    pub fn values(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.value).collect()
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    /// Mean absolute error against `truth`.
    pub fn mae(&self, truth: &[f64]) -> f64 {
        let v = self.values();
        v.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>() / v.len() as f64
    }
}

/// Everything produced by one pair pipeline.
#[derive(Debug, Clone)]
pub struct PairRun {
    pub pair: Pair,
    pub set: PseudoLabeledSet,
    pub warm: Scorer,
    pub confident: ConfidentSets,
    /// References actually handed to the estimator (regrouped for ReMPE).
    pub references: ConfidentSets,
    pub estimates: Vec<PriorEstimate>,
}

pub fn pair_seed(base: u64, pair: Pair) -> u64 {
    seed::derive(base, &[seed::TAG_PAIR, pair.0 as u64, pair.1 as u64])
}

/// Pseudo-labels `pair`, trains the warm-up scorer and collects confident
/// sets.
pub fn collect_confident(bags: &BagCollection, pair: Pair, cfg: &CcpeConfig) -> Result<(PseudoLabeledSet, Scorer, ConfidentSets)> {
    let ps = pair_seed(cfg.seed, pair);
    let set = assign_pseudo_labels(pair.0, bags.bag(pair.0), pair.1, bags.bag(pair.1))?;
    let warm_cfg = cfg.warmup.with_seed(seed::derive(ps, &[seed::TAG_WARMUP]));
    let warm = train_binary(&warm_cfg, set.features(), set.pseudo_labels(), None)?;
    let confident = if cfg.confident_collection {
        select(&cfg.selector, &warm, &set, &warm_cfg)?
    } else {
        ConfidentSets::raw(&set)
    };
    Ok((set, warm, confident))
}

/// Estimates every bag prior with references taken from the pair's
/// confident sets.
pub fn estimate_all(
    bags: &BagCollection,
    pair: Pair,
    set: &PseudoLabeledSet,
    confident: &ConfidentSets,
    cfg: &CcpeConfig,
) -> Result<(ConfidentSets, Vec<PriorEstimate>)> {
    let ps = pair_seed(cfg.seed, pair);
    let est = &cfg.estimator;
    let references = match est.kind {
        EstimatorKind::Rempe => regroup(confident, set, est.regroup_p, &est.scorer, ps)?,
        EstimatorKind::Mutual => {
            return Err(Error::Config(
                "the mutual estimator is pairwise; use run_mos_m".into(),
            ))
        }
        _ => confident.clone(),
    };
    let (pos, neg) = (references.positives(set), references.negatives(set));
    let estimates: Result<Vec<_>> = (0..bags.m())
        .into_par_iter()
        .map(|j| {
            let s = seed::derive(ps, &[j as u64]);
            match est.kind {
                EstimatorKind::Bbe => estimate(j, bags.bag(j), confident, set, est, s),
                _ => estimate_from_references(j, bags.bag(j), &pos, &neg, est, s, est.kind),
            }
            .map_err(|e| match e {
                Error::Bag { .. } => e,
                other => other.in_bag(j),
            })
        })
        .collect();
    Ok((references, estimates?))
}

/// The full single-pair pipeline.
pub fn run_pair(bags: &BagCollection, pair: Pair, cfg: &CcpeConfig) -> Result<PairRun> {
    cfg.validate()?;
    let (set, warm, confident) = collect_confident(bags, pair, cfg)?;
    let (references, estimates) = estimate_all(bags, pair, &set, &confident, cfg)?;
    Ok(PairRun {
        pair,
        set,
        warm,
        confident,
        references,
        estimates,
    })
}

fn single_pair_vector(bags: &BagCollection, run: &PairRun) -> PriorVector {
    let m = bags.m();
    PriorVector {
        estimates: run.estimates.clone(),
        provenance: vec![vec![run.pair]; m],
        flagged: vec![false; m],
        skipped_pairs: Vec::new(),
        declared_included: true,
    }
}

/// Single-pair estimation from the declared pair.
pub fn run_ccpe(bags: &BagCollection, cfg: &CcpeConfig) -> Result<PriorVector> {
    run_ccpe_detailed(bags, cfg).map(|(v, _)| v)
}

pub fn run_ccpe_detailed(bags: &BagCollection, cfg: &CcpeConfig) -> Result<(PriorVector, PairRun)> {
    let run = run_pair(bags, bags.pair(), cfg)?;
    Ok((single_pair_vector(bags, &run), run))
}

/// All `m(m−1)/2` pairs by descending estimated gap, larger prior first
/// within each pair. Equal gaps keep lexicographic index order.
pub fn rank_pairs(priors: &[f64]) -> Vec<(Pair, f64)> {
    let m = priors.len();
    let mut out = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            let pair = if priors[j] > priors[i] { (j, i) } else { (i, j) };
            out.push((pair, (priors[i] - priors[j]).abs()));
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

fn average(bag: usize, method: EstimatorKind, parts: &[&PriorEstimate]) -> PriorEstimate {
    let mean = |f: &dyn Fn(&PriorEstimate) -> Option<f64>| {
        let v: Vec<f64> = parts.iter().filter_map(|e| f(e)).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    PriorEstimate {
        bag,
        value: parts.iter().map(|e| e.value).sum::<f64>() / parts.len() as f64,
        side1: mean(&|e| e.side1),
        side2: mean(&|e| e.side2),
        method,
        one_sided: parts.iter().any(|e| e.one_sided),
    }
}

/// Averages full pair pipelines over `pairs`. Failed pairs are skipped.
pub fn run_eccpe_with_pairs(bags: &BagCollection, cfg: &CcpeConfig, pairs: &[Pair]) -> Result<PriorVector> {
    cfg.validate()?;
    let runs: Vec<(Pair, Result<Vec<PriorEstimate>>)> = pairs
        .par_iter()
        .map(|&p| (p, run_pair(bags, p, cfg).map(|r| r.estimates)))
        .collect();
    combine_runs(bags, cfg, runs)
}

fn combine_runs(bags: &BagCollection, cfg: &CcpeConfig, runs: Vec<(Pair, Result<Vec<PriorEstimate>>)>) -> Result<PriorVector> {
    let mut ok = Vec::new();
    let mut skipped = Vec::new();
    for (p, r) in runs {
        match r {
            Ok(e) => ok.push((p, e)),
            Err(e) => {
                log::warn!("pair ({}, {}) skipped: {e}", p.0, p.1);
                skipped.push((p, e.to_string()));
            }
        }
    }
    if ok.is_empty() {
        return Err(Error::NoSurvivingPairs);
    }
    let m = bags.m();
    let estimates = (0..m)
        .map(|j| {
            let parts: Vec<&PriorEstimate> = ok.iter().map(|(_, e)| &e[j]).collect();
            average(j, cfg.estimator.kind, &parts)
        })
        .collect();
    let used: Vec<Pair> = ok.iter().map(|(p, _)| *p).collect();
    let declared = bags.pair();
    Ok(PriorVector {
        estimates,
        provenance: vec![used.clone(); m],
        flagged: vec![false; m],
        skipped_pairs: skipped,
        declared_included: used.contains(&declared),
    })
}

/// Estimates from the declared pair, then averages re-runs over the `γ`
/// pairs with the largest estimated gaps.
pub fn run_eccpe(bags: &BagCollection, cfg: &CcpeConfig) -> Result<PriorVector> {
    run_eccpe_detailed(bags, cfg).map(|(v, _)| v)
}

/// Like [`run_eccpe`], also returning the initialization.
pub fn run_eccpe_detailed(bags: &BagCollection, cfg: &CcpeConfig) -> Result<(PriorVector, PairRun)> {
    cfg.validate()?;
    cfg.check_gamma(bags.m())?;
    let (init, run) = run_ccpe_detailed(bags, cfg)?;
    let top: Vec<Pair> = rank_pairs(&init.values())
        .into_iter()
        .take(cfg.pair_selection_count)
        .map(|(p, _)| p)
        .collect();
    let runs: Vec<(Pair, Result<Vec<PriorEstimate>>)> = top
        .par_iter()
        .map(|&p| {
            // The declared pair's pipeline is deterministic in its seed, so
            // its initialization result is reused rather than recomputed.
            if p == run.pair {
                (p, Ok(run.estimates.clone()))
            } else {
                (p, run_pair(bags, p, cfg).map(|r| r.estimates))
            }
        })
        .collect();
    Ok((combine_runs(bags, cfg, runs)?, run))
}

/// Pairwise mutual-model estimates over the top-`γ` pairs ranked by a
/// single-pair initialization, averaged per bag. Bags never covered keep
/// their initialization and are flagged.
pub fn run_mos_m(bags: &BagCollection, cfg: &CcpeConfig) -> Result<PriorVector> {
    cfg.validate()?;
    cfg.check_gamma(bags.m())?;
    let mut init_cfg = cfg.clone();
    if init_cfg.estimator.kind == EstimatorKind::Mutual {
        init_cfg.estimator.kind = EstimatorKind::Standard;
    }
    let init = run_ccpe(bags, &init_cfg)?;
    let top: Vec<Pair> = rank_pairs(&init.values())
        .into_iter()
        .take(cfg.pair_selection_count)
        .map(|(p, _)| p)
        .collect();
    let results: Vec<(Pair, Result<(PriorEstimate, PriorEstimate)>)> = top
        .par_iter()
        .map(|&p| {
            let s = pair_seed(cfg.seed, p);
            (p, estimate_pair_mutual(p.0, bags.bag(p.0), p.1, bags.bag(p.1), &cfg.estimator, s))
        })
        .collect();
    let m = bags.m();
    let mut parts: Vec<Vec<(Pair, PriorEstimate)>> = vec![Vec::new(); m];
    let mut skipped = Vec::new();
    for (p, r) in results {
        match r {
            Ok((a, b)) => {
                parts[p.0].push((p, a));
                parts[p.1].push((p, b));
            }
            Err(e) => {
                log::warn!("pair ({}, {}) skipped: {e}", p.0, p.1);
                skipped.push((p, e.to_string()));
            }
        }
    }
    let declared = bags.pair();
    let mut out = PriorVector {
        estimates: Vec::with_capacity(m),
        provenance: Vec::with_capacity(m),
        flagged: Vec::with_capacity(m),
        skipped_pairs: skipped,
        declared_included: parts.iter().flatten().any(|(p, _)| *p == declared),
    };
    for (j, pj) in parts.into_iter().enumerate() {
        if pj.is_empty() {
            out.estimates.push(init.estimates[j].clone());
            out.provenance.push(vec![declared]);
            out.flagged.push(true);
        } else {
            let refs: Vec<&PriorEstimate> = pj.iter().map(|(_, e)| e).collect();
            out.estimates.push(average(j, EstimatorKind::Mutual, &refs));
            out.provenance.push(pj.iter().map(|(p, _)| *p).collect());
            out.flagged.push(false);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_examples() {
        let r = rank_pairs(&[0.1, 0.5, 0.9]);
        assert_eq!(r[0].0, (2, 0));
        assert!((r[0].1 - 0.8).abs() < 1e-12);
        assert_eq!(r.len(), 3);
        assert_eq!(rank_pairs(&[0.5; 10]).len(), 45);
        let eq = rank_pairs(&[0.3, 0.3, 0.3]);
        assert_eq!(eq.iter().map(|x| x.0).collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn ranking_puts_larger_prior_first() {
        for (p, _) in rank_pairs(&[0.7, 0.2, 0.9, 0.4]) {
            assert!([0.7, 0.2, 0.9, 0.4][p.0] >= [0.7, 0.2, 0.9, 0.4][p.1]);
        }
    }

    #[test]
    fn config_checks() {
        let cfg = CcpeConfig {
            pair_selection_count: 0,
            ..CcpeConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = CcpeConfig {
            pair_selection_count: 2,
            ..CcpeConfig::default()
        };
        assert!(cfg.check_gamma(2).is_err());
        assert!(cfg.check_gamma(3).is_ok());
    }
}
