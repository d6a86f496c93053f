//! Class-prior estimation for one bag given confident positive and negative
//! reference sets: threshold-set mixture proportion (two-sided), regrouped
//! references, best-bin estimation, and the pairwise mutual model.

use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::confident::{ConfidentSets, PseudoLabeledSet, SelectionMethod};
use crate::error::{Error, Result};
use crate::numerics::TailCurve;
use crate::scorer::{train_binary, Scorer, ScorerConfig};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KappaConfig {
    /// Confidence level of the threshold-set slack.
    pub delta: f64,
    /// Slack multiplier `γ` of the best-bin bound.
    pub gamma_bbe: f64,
    /// Confidence level of the best-bin bound.
    pub bbe_delta: f64,
    /// Lower bound on `q̂_p(z) − ε_p` for a threshold to be considered.
    pub min_tail: f64,
    /// Disable to evaluate the plain empirical ratio.
    pub slack: bool,
}

impl Default for KappaConfig {
    fn default() -> Self {
        Self {
            delta: 0.5,
            gamma_bbe: 0.01,
            bbe_delta: 0.1,
            min_tail: 0.1,
            slack: true,
        }
    }
}

impl KappaConfig {
    pub fn validate(&self) -> Result<()> {
        let open01 = |v: f64| v > 0.0 && v < 1.0;
        if !open01(self.delta) || !open01(self.bbe_delta) {
            return Err(Error::Config("delta values must lie in (0, 1)".into()));
        }
        if !open01(self.min_tail) {
            return Err(Error::Config(format!("min_tail must lie in (0, 1), got {}", self.min_tail)));
        }
        if !(self.gamma_bbe >= 0.0) {
            return Err(Error::Config("gamma_bbe must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `√(ln(2/δ) / 2n)`.
pub fn slack(n: usize, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

fn check_scores(name: &'static str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::DegenerateInput(format!("{name} scores are empty")));
    }
    if v.iter().any(|s| !s.is_finite()) {
        return Err(Error::DegenerateInput(format!("{name} scores contain non-finite values")));
    }
    Ok(())
}

/// Sorted distinct values of both lists.
fn candidates(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = a.iter().chain(b).copied().collect();
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Largest weight of the component inside the mixture, estimated over
/// upper threshold sets `{s ≥ z}` of a score.
pub fn kappa_hat(component: &[f64], mixture: &[f64], cfg: &KappaConfig) -> Result<f64> {
    cfg.validate()?;
    check_scores("component", component)?;
    check_scores("mixture", mixture)?;
    let (eps_p, eps_u) = if cfg.slack {
        (slack(component.len(), cfg.delta), slack(mixture.len(), cfg.delta))
    } else {
        (0.0, 0.0)
    };
    let qp = TailCurve::new(component)?;
    let qu = TailCurve::new(mixture)?;
    let mut best: Option<f64> = None;
    for z in candidates(component, mixture) {
        let lower = qp.fraction(z) - eps_p;
        if lower < cfg.min_tail {
            continue;
        }
        let ratio = (qu.fraction(z) + eps_u) / lower;
        if best.is_none_or(|b| ratio < b) {
            best = Some(ratio);
        }
    }
    best.map(|b| b.clamp(0.0, 1.0))
        .ok_or(Error::UnstableTail { min_tail: cfg.min_tail })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Standard,
    Rempe,
    Bbe,
    Mutual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub kappa: KappaConfig,
    /// Fraction of the opposite set copied over by regrouping.
    pub regroup_p: f64,
    /// Training of the reference-vs-bag scorers.
    pub scorer: ScorerConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::Standard,
            kappa: KappaConfig::default(),
            regroup_p: 0.1,
            scorer: ScorerConfig {
                epochs: 20,
                ..ScorerConfig::default()
            },
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.kappa.validate()?;
        self.scorer.validate()?;
        check_regroup_fraction(self.regroup_p)
    }
}

fn check_regroup_fraction(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 0.5) {
        return Err(Error::Config(format!("regroup fraction must lie in (0, 0.5], got {p}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorEstimate {
    pub bag: usize,
    pub value: f64,
    /// Estimate against the positive reference.
    pub side1: Option<f64>,
    /// One minus the estimate against the negative reference.
    pub side2: Option<f64>,
    pub method: EstimatorKind,
    /// Set when one side failed and `value` is the surviving side alone.
    pub one_sided: bool,
}

impl PriorEstimate {
    fn two_sided(bag: usize, method: EstimatorKind, s1: Result<f64>, s2: Result<f64>) -> Result<Self> {
        let (value, one_sided) = match (&s1, &s2) {
            (Ok(a), Ok(b)) => ((a + b) / 2.0, false),
            (Ok(a), Err(e)) | (Err(e), Ok(a)) => {
                log::warn!("bag {bag}: one side failed ({e}); using the other side only");
                (*a, true)
            }
            (Err(e), Err(_)) => return Err(e.clone().in_bag(bag)),
        };
        Ok(Self {
            bag,
            value,
            side1: s1.ok(),
            side2: s2.ok(),
            method,
            one_sided,
        })
    }
}

/// Stacks `reference` (+1) over `bag` (−1) and trains a scorer.
fn fit_reference_vs_bag(reference: &Array2<f64>, bag: &Array2<f64>, cfg: &ScorerConfig) -> Result<Scorer> {
    let x = concatenate(Axis(0), &[reference.view(), bag.view()]).map_err(|_| Error::Shape {
        expected: reference.ncols(),
        got: bag.ncols(),
    })?;
    let mut y = vec![1.0; reference.nrows()];
    y.resize(x.nrows(), -1.0);
    train_binary(cfg, &x, &y, None)
}

fn to_vec(a: ndarray::Array1<f64>) -> Vec<f64> {
    a.to_vec()
}

/// `κ̂` of `reference` inside `bag`, scored by a reference-vs-bag model.
fn side_kappa(reference: &Array2<f64>, bag: &Array2<f64>, cfg: &EstimatorConfig, seed: u64) -> Result<f64> {
    if reference.nrows() == 0 {
        return Err(Error::EmptySelection { side: "reference" });
    }
    let s = fit_reference_vs_bag(reference, bag, &cfg.scorer.with_seed(seed))?;
    let zr = to_vec(s.predict_proba(reference)?);
    let zu = to_vec(s.predict_proba(bag)?);
    kappa_hat(&zr, &zu, &cfg.kappa)
}

/// Two-sided threshold-set estimate from explicit reference matrices.
pub fn estimate_from_references(
    bag: usize,
    x_bag: &Array2<f64>,
    positives: &Array2<f64>,
    negatives: &Array2<f64>,
    cfg: &EstimatorConfig,
    seed: u64,
    method: EstimatorKind,
) -> Result<PriorEstimate> {
    cfg.validate()?;
    if x_bag.nrows() == 0 {
        return Err(Error::EmptyBag(bag));
    }
    let s1 = side_kappa(positives, x_bag, cfg, seed::derive(seed, &[seed::TAG_SIDE1]));
    let s2 = side_kappa(negatives, x_bag, cfg, seed::derive(seed, &[seed::TAG_SIDE2])).map(|k| 1.0 - k);
    PriorEstimate::two_sided(bag, method, s1, s2)
}

pub fn estimate_standard(
    bag: usize,
    x_bag: &Array2<f64>,
    confident: &ConfidentSets,
    source: &PseudoLabeledSet,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<PriorEstimate> {
    confident.check(source)?;
    estimate_from_references(
        bag,
        x_bag,
        &confident.positives(source),
        &confident.negatives(source),
        cfg,
        seed,
        EstimatorKind::Standard,
    )
}

fn copy_count(p: f64, n: usize) -> usize {
    // The small offset keeps products like 0.3 * 10 from rounding up past 3.
    ((p * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// Extends each confident set with copies of the `⌈p·n⌉` rows of the other
/// set that a positive-vs-negative scorer finds most like it.
pub fn regroup(
    confident: &ConfidentSets,
    source: &PseudoLabeledSet,
    p: f64,
    cfg: &ScorerConfig,
    seed: u64,
) -> Result<ConfidentSets> {
    check_regroup_fraction(p)?;
    confident.check(source)?;
    let pos = confident.positives(source);
    let neg = confident.negatives(source);
    let x = concatenate(Axis(0), &[pos.view(), neg.view()]).expect("same width");
    let mut y = vec![1.0; pos.nrows()];
    y.resize(x.nrows(), -1.0);
    let s = train_binary(&cfg.with_seed(seed::derive(seed, &[seed::TAG_REGROUP])), &x, &y, None)?;
    let p_neg = s.predict_proba(&neg)?;
    let p_pos = s.predict_proba(&pos)?;

    // Stable sorts: ties keep the original row order.
    let mut by_pos: Vec<usize> = (0..neg.nrows()).collect();
    by_pos.sort_by(|&a, &b| p_neg[b].total_cmp(&p_neg[a]));
    let mut by_neg: Vec<usize> = (0..pos.nrows()).collect();
    by_neg.sort_by(|&a, &b| p_pos[a].total_cmp(&p_pos[b]));

    let mut positive_idx = confident.positive_idx.clone();
    positive_idx.extend(
        by_pos[..copy_count(p, neg.nrows())]
            .iter()
            .map(|&k| confident.negative_idx[k]),
    );
    let mut negative_idx = confident.negative_idx.clone();
    negative_idx.extend(
        by_neg[..copy_count(p, pos.nrows())]
            .iter()
            .map(|&k| confident.positive_idx[k]),
    );
    Ok(ConfidentSets {
        positive_idx,
        negative_idx,
        method: SelectionMethod::Regrouped,
    })
}

pub fn estimate_rempe(
    bag: usize,
    x_bag: &Array2<f64>,
    confident: &ConfidentSets,
    source: &PseudoLabeledSet,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<PriorEstimate> {
    cfg.validate()?;
    let regrouped = regroup(confident, source, cfg.regroup_p, &cfg.scorer, seed)?;
    estimate_from_references(
        bag,
        x_bag,
        &regrouped.positives(source),
        &regrouped.negatives(source),
        cfg,
        seed,
        EstimatorKind::Rempe,
    )
}

/// Minimizer of the best-bin upper confidence bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinChoice {
    pub threshold: f64,
    pub q_component: f64,
    pub q_mixture: f64,
    pub bound: f64,
}

/// `q̂_u(c)/q̂_p(c) + (1+γ)/q̂_p(c) · (√(ln(4/δ)/2n_u) + √(ln(4/δ)/2n_p))`
/// minimized over the sample points with `q̂_p(c) > 0`; ties go to the
/// smallest threshold.
pub fn best_bin(component: &[f64], mixture: &[f64], delta: f64, gamma: f64) -> Result<BinChoice> {
    check_scores("component", component)?;
    check_scores("mixture", mixture)?;
    let l = (4.0 / delta).ln();
    let width = (l / (2.0 * mixture.len() as f64)).sqrt() + (l / (2.0 * component.len() as f64)).sqrt();
    let qp = TailCurve::new(component)?;
    let qu = TailCurve::new(mixture)?;
    let mut best: Option<BinChoice> = None;
    for c in candidates(component, mixture) {
        let p = qp.fraction(c);
        if p <= 0.0 {
            continue;
        }
        let u = qu.fraction(c);
        let bound = u / p + (1.0 + gamma) / p * width;
        if best.is_none_or(|b| bound < b.bound) {
            best = Some(BinChoice {
                threshold: c,
                q_component: p,
                q_mixture: u,
                bound,
            });
        }
    }
    Ok(best.expect("the smallest component score always has q_p = 1"))
}

fn split_half(x: &Array2<f64>, seed: u64, what: &'static str) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut idx: Vec<usize> = (0..x.nrows()).collect();
    idx.shuffle(&mut seed::rng(seed));
    let cut = idx.len() / 2;
    if cut == 0 || cut == idx.len() {
        return Err(Error::EmptyHoldout(what));
    }
    Ok((x.select(Axis(0), &idx[..cut]), x.select(Axis(0), &idx[cut..])))
}

fn bbe_side(reference: &Array2<f64>, bag: &Array2<f64>, cfg: &EstimatorConfig, seed: u64) -> Result<f64> {
    let (ref_fit, ref_hold) = split_half(reference, seed::derive(seed, &[seed::TAG_SPLIT, 0]), "reference")?;
    let (bag_fit, bag_hold) = split_half(bag, seed::derive(seed, &[seed::TAG_SPLIT, 1]), "bag")?;
    let s = fit_reference_vs_bag(&ref_fit, &bag_fit, &cfg.scorer.with_seed(seed))?;
    let zp = to_vec(s.predict_proba(&ref_hold)?);
    let zu = to_vec(s.predict_proba(&bag_hold)?);
    let c = best_bin(&zp, &zu, cfg.kappa.bbe_delta, cfg.kappa.gamma_bbe)?;
    Ok((c.q_mixture / c.q_component).clamp(0.0, 1.0))
}

pub fn estimate_bbe(
    bag: usize,
    x_bag: &Array2<f64>,
    confident: &ConfidentSets,
    source: &PseudoLabeledSet,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<PriorEstimate> {
    cfg.validate()?;
    confident.check(source)?;
    if x_bag.nrows() == 0 {
        return Err(Error::EmptyBag(bag));
    }
    let s1 = bbe_side(&confident.positives(source), x_bag, cfg, seed::derive(seed, &[seed::TAG_SIDE1]));
    let s2 = bbe_side(&confident.negatives(source), x_bag, cfg, seed::derive(seed, &[seed::TAG_SIDE2]))
        .map(|k| 1.0 - k);
    PriorEstimate::two_sided(bag, EstimatorKind::Bbe, s1, s2)
}

/// Dispatches the reference-set estimators. The mutual model works on bag
/// pairs and is run through [`estimate_pair_mutual`] instead.
pub fn estimate(
    bag: usize,
    x_bag: &Array2<f64>,
    confident: &ConfidentSets,
    source: &PseudoLabeledSet,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<PriorEstimate> {
    match cfg.kind {
        EstimatorKind::Standard => estimate_standard(bag, x_bag, confident, source, cfg, seed),
        EstimatorKind::Rempe => estimate_rempe(bag, x_bag, confident, source, cfg, seed),
        EstimatorKind::Bbe => estimate_bbe(bag, x_bag, confident, source, cfg, seed),
        EstimatorKind::Mutual => Err(Error::Config(
            "the mutual estimator works on bag pairs only".into(),
        )),
    }
}

const INVERSION_LIMIT: f64 = 1.0 - 1e-6;

/// Priors `(π⁺, π⁻)` from the cross-contamination proportions
/// `κ⁺ = (1−π⁺)/(1−π⁻)` and `κ⁻ = π⁻/π⁺`.
pub fn invert_mutual(kappa_plus: f64, kappa_minus: f64) -> Result<(f64, f64)> {
    let product = kappa_plus * kappa_minus;
    if product >= INVERSION_LIMIT {
        return Err(Error::UnstableInversion { product });
    }
    let denom = 1.0 - product;
    Ok(((1.0 - kappa_plus) / denom, (1.0 - kappa_plus) * kappa_minus / denom))
}

/// Cross-contamination proportions of a pair with priors `π⁺ > π⁻`.
pub fn mutual_forward(pi_plus: f64, pi_minus: f64) -> (f64, f64) {
    ((1.0 - pi_plus) / (1.0 - pi_minus), pi_minus / pi_plus)
}

/// Pairwise mutual-model estimate for bags ordered so that `π⁺ ≥ π⁻`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_pair_mutual(
    plus: usize,
    x_plus: &Array2<f64>,
    minus: usize,
    x_minus: &Array2<f64>,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<(PriorEstimate, PriorEstimate)> {
    cfg.validate()?;
    if x_plus.nrows() == 0 {
        return Err(Error::EmptyBag(plus));
    }
    if x_minus.nrows() == 0 {
        return Err(Error::EmptyBag(minus));
    }
    // One scorer separates the two bags; s is high where bag⁻ dominates.
    let s = fit_reference_vs_bag(
        x_minus,
        x_plus,
        &cfg.scorer.with_seed(seed::derive(seed, &[seed::TAG_MUTUAL])),
    )?;
    let s_minus = to_vec(s.predict_proba(x_minus)?);
    let s_plus = to_vec(s.predict_proba(x_plus)?);
    let k_plus = kappa_hat(&s_minus, &s_plus, &cfg.kappa)?;
    let flip = |v: &[f64]| v.iter().map(|p| 1.0 - p).collect::<Vec<_>>();
    let k_minus = kappa_hat(&flip(&s_plus), &flip(&s_minus), &cfg.kappa)?;
    let (pp, pm) = invert_mutual(k_plus, k_minus)?;
    let make = |bag, value| PriorEstimate {
        bag,
        value,
        side1: None,
        side2: None,
        method: EstimatorKind::Mutual,
        one_sided: false,
    };
    Ok((make(plus, pp), make(minus, pm)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confident::assign_pseudo_labels;
    use crate::data::gaussian_pool;
    use ndarray::Array2;

    fn no_slack(min_tail: f64) -> KappaConfig {
        KappaConfig {
            slack: false,
            min_tail,
            ..KappaConfig::default()
        }
    }

    #[test]
    fn self_mixture_gives_one() {
        let s: Vec<f64> = (0..500).map(|i| (i as f64 * 0.618).fract()).collect();
        assert_eq!(kappa_hat(&s, &s, &KappaConfig::default()).unwrap(), 1.0);
        assert_eq!(kappa_hat(&s, &s, &no_slack(0.1)).unwrap(), 1.0);
    }

    #[test]
    fn two_atom_mixture() {
        // Component: all mass on A (score 0.9). Mixture: 30% A, 70% B (0.1).
        let n = 5000;
        let comp = vec![0.9; n];
        let mix: Vec<f64> = (0..n).map(|i| if i < 1500 { 0.9 } else { 0.1 }).collect();
        assert!((kappa_hat(&comp, &mix, &no_slack(0.1)).unwrap() - 0.3).abs() < 1e-12);
        let k = kappa_hat(&comp, &mix, &KappaConfig::default()).unwrap();
        assert!((k - 0.3).abs() <= 0.02, "{k}");
    }

    #[test]
    fn min_tail_restriction_bites() {
        // Even the lowest threshold has q̂_p = 1, so the floor only bites
        // once the slack exceeds 1 - min_tail: here ε ≈ 0.152 at n = 30.
        let s: Vec<f64> = (0..30).map(|i| i as f64 / 30.0).collect();
        let cfg = KappaConfig {
            min_tail: 0.9,
            ..KappaConfig::default()
        };
        assert_eq!(kappa_hat(&s, &s, &cfg), Err(Error::UnstableTail { min_tail: 0.9 }));
    }

    #[test]
    fn bbe_hand_instance() {
        let zp = [0.9, 0.8, 0.7, 0.6];
        let zu = [0.9, 0.8, 0.1, 0.1];
        let (delta, gamma) = (0.5, 0.0);
        let w = 2.0 * ((4.0f64 / delta).ln() / 8.0).sqrt();
        // Brute force over the distinct candidates {0.1, 0.6, 0.7, 0.8, 0.9}.
        let mut best = (f64::INFINITY, 0.0);
        for &c in &[0.1, 0.6, 0.7, 0.8, 0.9] {
            let qp = zp.iter().filter(|&&v| v >= c).count() as f64 / 4.0;
            let qu = zu.iter().filter(|&&v| v >= c).count() as f64 / 4.0;
            let b = qu / qp + (1.0 + gamma) / qp * w;
            if b < best.0 {
                best = (b, c);
            }
        }
        let got = best_bin(&zp, &zu, delta, gamma).unwrap();
        assert_eq!(got.threshold, best.1);
        assert!((got.bound - best.0).abs() < 1e-12);
    }

    #[test]
    fn bbe_self_mixture() {
        let s: Vec<f64> = (0..2000).map(|i| (i as f64 * 0.377).fract()).collect();
        let c = best_bin(&s, &s, 0.1, 0.01).unwrap();
        assert_eq!(c.q_mixture / c.q_component, 1.0);
    }

    #[test]
    fn inversion_examples() {
        assert_eq!(invert_mutual(0.0, 0.0).unwrap(), (1.0, 0.0));
        let (p, m) = invert_mutual(0.25, 0.5).unwrap();
        assert!((p - 0.75 / 0.875).abs() < 1e-15);
        assert!((m - 0.375 / 0.875).abs() < 1e-15);
        assert!((p - 0.857).abs() < 1e-3 && (m - 0.4286).abs() < 1e-4);
        assert!(matches!(invert_mutual(1.0, 1.0), Err(Error::UnstableInversion { .. })));
        let (a, b) = mutual_forward(p, m);
        assert!((a - 0.25).abs() < 1e-12 && (b - 0.5).abs() < 1e-12);
    }

    #[test]
    fn copy_count_edges() {
        assert_eq!(copy_count(0.1, 10), 1);
        assert_eq!(copy_count(0.3, 10), 3);
        assert_eq!(copy_count(1e-6, 50), 1);
        assert_eq!(copy_count(0.5, 3), 2);
    }

    fn separated_pair(seed: u64) -> (PseudoLabeledSet, ConfidentSets) {
        let pos = gaussian_pool(200, 0, 2, 6.0, seed).unwrap();
        let neg = gaussian_pool(0, 200, 2, 6.0, seed + 1).unwrap();
        let set = assign_pseudo_labels(0, pos.features(), 1, neg.features()).unwrap();
        let cs = ConfidentSets::raw(&set);
        (set, cs)
    }

    #[test]
    fn regroup_copies_ceil_rows() {
        let (set, cs) = separated_pair(1);
        let cfg = ScorerConfig::linear();
        let r = regroup(&cs, &set, 0.001, &cfg, 3).unwrap();
        assert_eq!(r.positive_idx.len(), 201);
        assert_eq!(r.negative_idx.len(), 201);
        assert_eq!(r.method, SelectionMethod::Regrouped);
        assert!(set.pseudo_labels()[r.positive_idx[200]] < 0.0);
        assert!(matches!(regroup(&cs, &set, 0.6, &cfg, 3), Err(Error::Config(_))));
        assert!(matches!(regroup(&cs, &set, 0.0, &cfg, 3), Err(Error::Config(_))));
    }

    #[test]
    fn regroup_ties_take_first_row() {
        let a = Array2::from_shape_fn((6, 1), |(i, _)| 1.0 + i as f64);
        let b = Array2::from_elem((5, 1), -1.0);
        let set = assign_pseudo_labels(0, &a, 1, &b).unwrap();
        let cs = ConfidentSets::raw(&set);
        let r = regroup(&cs, &set, 0.1, &ScorerConfig::linear(), 0).unwrap();
        assert_eq!(r.positive_idx.last(), Some(&6));
    }

    #[test]
    fn pure_bag_side_one() {
        let (set, cs) = separated_pair(5);
        let bag = cs.positives(&set);
        let cfg = EstimatorConfig {
            scorer: ScorerConfig::linear(),
            ..EstimatorConfig::default()
        };
        let e = estimate_standard(0, &bag, &cs, &set, &cfg, 9).unwrap();
        assert_eq!(e.side1, Some(1.0));
        assert!(e.value >= 0.0 && e.value <= 1.0);
    }

    #[test]
    fn mutual_rejected_by_dispatch() {
        let (set, cs) = separated_pair(2);
        let cfg = EstimatorConfig {
            kind: EstimatorKind::Mutual,
            ..EstimatorConfig::default()
        };
        assert!(matches!(
            estimate(0, set.features(), &cs, &set, &cfg, 0),
            Err(Error::Config(_))
        ));
    }
}
