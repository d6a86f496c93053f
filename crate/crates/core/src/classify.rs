//! Training binary classifiers from bags and their (estimated) priors:
//! surrogate-set classification through a linear-fractional transition, and
//! weighted pairwise unbiased risks over matched bag pairs.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::confident::{ConfidentSets, PseudoLabeledSet};
use crate::data::BagCollection;
use crate::error::{Error, Result};
use crate::prior_est::{estimate, EstimatorConfig, PriorEstimate};
use crate::scorer::{logistic_loss, sigmoid, train_with_objective, Objective, Scorer, ScorerConfig};

const PROB_FLOOR: f64 = 1e-12;

/// `T_j(η) = (a_j η + b_j) / (c η + d)`: probability that a row came from
/// bag `j` given its positive-class posterior `η`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionLayer {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
    pub d: f64,
    /// `c = 0`: every `T_j` is constant and carries no signal.
    pub degenerate: bool,
}

pub fn build_transition(priors: &[f64], rho: &[f64], pi_d: f64) -> Result<TransitionLayer> {
    if !(pi_d > 0.0 && pi_d < 1.0) {
        return Err(Error::Config(format!("test prior must lie in (0, 1), got {pi_d}")));
    }
    if priors.len() != rho.len() {
        return Err(Error::Shape {
            expected: rho.len(),
            got: priors.len(),
        });
    }
    if priors.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Config("priors must lie in [0, 1]".into()));
    }
    let a: Vec<f64> = priors.iter().zip(rho).map(|(p, r)| r * (p - pi_d)).collect();
    let b: Vec<f64> = priors.iter().zip(rho).map(|(p, r)| r * pi_d * (1.0 - p)).collect();
    let c: f64 = a.iter().sum();
    let d: f64 = b.iter().sum();
    // The denominator is linear in η, so checking both ends covers [0, 1].
    if d <= 0.0 || c + d <= 0.0 {
        return Err(Error::SingularTransition);
    }
    let degenerate = c == 0.0;
    if degenerate {
        log::warn!("transition is constant: every prior equals the test prior");
    }
    let t = TransitionLayer { a, b, c, d, degenerate };
    for eta in [0.0, 0.5, 1.0] {
        debug_assert!((t.all(eta).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    Ok(t)
}

impl TransitionLayer {
    pub fn m(&self) -> usize {
        self.a.len()
    }

    pub fn eval(&self, j: usize, eta: f64) -> f64 {
        (self.a[j] * eta + self.b[j]) / (self.c * eta + self.d)
    }

    pub fn all(&self, eta: f64) -> Vec<f64> {
        (0..self.m()).map(|j| self.eval(j, eta)).collect()
    }

    /// `dT_j/dη`.
    pub fn derivative(&self, j: usize, eta: f64) -> f64 {
        let den = self.c * eta + self.d;
        (self.a[j] * self.d - self.b[j] * self.c) / (den * den)
    }

    /// Loss of one row with raw score `s` from bag `j`, and its derivative
    /// in `s`.
    fn row_loss_grad(&self, j: usize, s: f64) -> (f64, f64) {
        let eta = sigmoid(s);
        let t = self.eval(j, eta);
        if t <= PROB_FLOOR {
            return (-PROB_FLOOR.ln(), 0.0);
        }
        (-t.ln(), -self.derivative(j, eta) / t * eta * (1.0 - eta))
    }
}

fn check_bag_ids(bag_ids: &[usize], n: usize, m: usize) -> Result<()> {
    if bag_ids.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: bag_ids.len(),
        });
    }
    if let Some(&j) = bag_ids.iter().find(|&&j| j >= m) {
        return Err(Error::Shape { expected: m, got: j });
    }
    Ok(())
}

/// Mean negative log of the transformed probability of each row's own bag,
/// from posteriors `eta`.
pub fn surrogate_loss(eta: &[f64], bag_ids: &[usize], t: &TransitionLayer) -> Result<f64> {
    check_bag_ids(bag_ids, eta.len(), t.m())?;
    if eta.is_empty() {
        return Err(Error::DegenerateInput("no rows".into()));
    }
    let total: f64 = eta
        .iter()
        .zip(bag_ids)
        .map(|(&e, &j)| -t.eval(j, e).max(PROB_FLOOR).ln())
        .sum();
    Ok(total / eta.len() as f64)
}

/// Surrogate loss from raw scores and its gradient with respect to them.
pub fn surrogate_loss_grad(scores: &[f64], bag_ids: &[usize], t: &TransitionLayer) -> Result<(f64, Vec<f64>)> {
    check_bag_ids(bag_ids, scores.len(), t.m())?;
    let n = scores.len() as f64;
    let mut grad = vec![0.0; scores.len()];
    let mut loss = 0.0;
    for (k, (&s, &j)) in scores.iter().zip(bag_ids).enumerate() {
        let (l, g) = t.row_loss_grad(j, s);
        loss += l;
        grad[k] = g / n;
    }
    Ok((loss / n, grad))
}

pub struct SurrogateObjective<'a> {
    pub bag_ids: &'a [usize],
    pub transition: &'a TransitionLayer,
}

impl Objective for SurrogateObjective<'_> {
    fn len(&self) -> usize {
        self.bag_ids.len()
    }

    fn batch_loss_grad(&self, idx: &[usize], scores: &[f64], grad: &mut [f64]) -> f64 {
        let inv = 1.0 / idx.len() as f64;
        let mut loss = 0.0;
        for (k, &i) in idx.iter().enumerate() {
            let (l, g) = self.transition.row_loss_grad(self.bag_ids[i], scores[k]);
            loss += l;
            grad[k] = g * inv;
        }
        loss * inv
    }
}

/// Trains the binary scorer through the transition layer with bag index as
/// the surrogate label.
pub fn train_umssc(
    bags: &BagCollection,
    priors: &[f64],
    pi_d: f64,
    cfg: &ScorerConfig,
) -> Result<(Scorer, TransitionLayer)> {
    let t = build_transition(priors, bags.rho(), pi_d)?;
    let (x, ids) = bags.stacked();
    let obj = SurrogateObjective {
        bag_ids: &ids,
        transition: &t,
    };
    Ok((train_with_objective(cfg, &x, &obj)?, t))
}

/// Bag pairs `(t⁺, t⁻)` with `π̂⁺ > π̂⁻` and normalized weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmPairing {
    pub pairs: Vec<(usize, usize)>,
    pub weights: Vec<f64>,
    /// Bag left out when `m` is odd.
    pub dropped: Option<usize>,
}

fn pair_weight(priors: &[f64], sizes: &[usize], i: usize, j: usize) -> f64 {
    let (ni, nj) = (sizes[i] as f64, sizes[j] as f64);
    let nbar = 2.0 * ni * nj / (ni + nj);
    nbar * (priors[i] - priors[j]).powi(2)
}

/// Sum of unnormalized pair weights.
pub fn matching_objective(priors: &[f64], sizes: &[usize], pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| pair_weight(priors, sizes, i, j)).sum()
}

/// Best perfect matching of `items` by exhaustive recursion.
fn exact_matching(priors: &[f64], sizes: &[usize], items: &[usize]) -> (f64, Vec<(usize, usize)>) {
    if items.is_empty() {
        return (0.0, Vec::new());
    }
    let first = items[0];
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for k in 1..items.len() {
        let rest: Vec<usize> = items[1..].iter().enumerate().filter(|&(q, _)| q + 1 != k).map(|(_, &v)| v).collect();
        let (val, mut pairs) = exact_matching(priors, sizes, &rest);
        let total = val + pair_weight(priors, sizes, first, items[k]);
        if total > best.0 {
            pairs.insert(0, (first, items[k]));
            best = (total, pairs);
        }
    }
    best
}

fn greedy_matching(priors: &[f64], items: &[usize]) -> Vec<(usize, usize)> {
    let mut cand = Vec::new();
    for (a, &i) in items.iter().enumerate() {
        for &j in &items[a + 1..] {
            cand.push((i, j, (priors[i] - priors[j]).abs()));
        }
    }
    cand.sort_by(|x, y| y.2.total_cmp(&x.2));
    let mut used = vec![false; priors.len()];
    let mut out = Vec::new();
    for (i, j, _) in cand {
        if !used[i] && !used[j] {
            used[i] = true;
            used[j] = true;
            out.push((i, j));
        }
    }
    out
}

fn sorted_matching(priors: &[f64], items: &[usize]) -> Vec<(usize, usize)> {
    let mut s = items.to_vec();
    s.sort_by(|&a, &b| priors[a].total_cmp(&priors[b]).then(a.cmp(&b)));
    (0..s.len() / 2).map(|k| (s[s.len() - 1 - k], s[k])).collect()
}

fn match_even(priors: &[f64], sizes: &[usize], items: &[usize]) -> Vec<(usize, usize)> {
    let equal = items.windows(2).all(|w| sizes[w[0]] == sizes[w[1]]);
    if equal {
        sorted_matching(priors, items)
    } else if items.len() <= 10 {
        exact_matching(priors, sizes, items).1
    } else {
        greedy_matching(priors, items)
    }
}

/// Pairs bags to maximize `Σ n̄_t (π̂⁺ − π̂⁻)²`.
pub fn pair_bags_mcm(priors: &[f64], sizes: &[usize]) -> Result<McmPairing> {
    let m = priors.len();
    if sizes.len() != m {
        return Err(Error::Shape { expected: m, got: sizes.len() });
    }
    if m < 2 {
        return Err(Error::InvalidSpec("pairing needs at least two bags".into()));
    }
    let all: Vec<usize> = (0..m).collect();
    let (raw, dropped) = if m % 2 == 0 {
        (match_even(priors, sizes, &all), None)
    } else {
        let mut best: Option<(f64, Vec<(usize, usize)>, usize)> = None;
        for k in 0..m {
            let items: Vec<usize> = all.iter().copied().filter(|&i| i != k).collect();
            let pairs = match_even(priors, sizes, &items);
            let v = matching_objective(priors, sizes, &pairs);
            if best.as_ref().is_none_or(|b| v > b.0) {
                best = Some((v, pairs, k));
            }
        }
        let (_, pairs, k) = best.expect("m >= 3");
        (pairs, Some(k))
    };
    let pairs: Vec<(usize, usize)> = raw
        .into_iter()
        .filter(|&(i, j)| priors[i] != priors[j])
        .map(|(i, j)| if priors[i] > priors[j] { (i, j) } else { (j, i) })
        .collect();
    if pairs.is_empty() {
        return Err(Error::DegenerateInput("every candidate pair has equal priors".into()));
    }
    let w: Vec<f64> = pairs.iter().map(|&(i, j)| pair_weight(priors, sizes, i, j)).collect();
    let total: f64 = w.iter().sum();
    Ok(McmPairing {
        pairs,
        weights: w.iter().map(|v| v / total).collect(),
        dropped,
    })
}

fn check_thetas(theta_plus: f64, theta_minus: f64, pi_d: f64) -> Result<()> {
    if theta_plus == theta_minus {
        return Err(Error::EqualPairPriors(theta_plus));
    }
    if theta_plus < theta_minus {
        return Err(Error::InvalidSpec(format!(
            "pair priors out of order: {theta_plus} < {theta_minus}"
        )));
    }
    if !(pi_d > 0.0 && pi_d < 1.0) {
        return Err(Error::Config(format!("test prior must lie in (0, 1), got {pi_d}")));
    }
    Ok(())
}

/// Coefficients mapping the four bag/class mean losses to the two
/// class-partial risks.
struct UuTerms {
    pi_d: f64,
    inv_gap: f64,
    theta_plus: f64,
    theta_minus: f64,
    corrected: bool,
}

impl UuTerms {
    /// Risk and the weights `(∂R/∂L⁺₊, ∂R/∂L⁻₊, ∂R/∂L⁻₋, ∂R/∂L⁺₋)`.
    fn eval(&self, lpp: f64, lmp: f64, lmm: f64, lpm: f64) -> (f64, [f64; 4]) {
        let (tp, tm) = (self.theta_plus, self.theta_minus);
        let rp = self.pi_d * ((1.0 - tm) * lpp - (1.0 - tp) * lmp) * self.inv_gap;
        let rn = (1.0 - self.pi_d) * (tp * lmm - tm * lpm) * self.inv_gap;
        let on_p = !self.corrected || rp > 0.0;
        let on_n = !self.corrected || rn > 0.0;
        let risk = if on_p { rp } else { 0.0 } + if on_n { rn } else { 0.0 };
        let cp = if on_p { self.pi_d * self.inv_gap } else { 0.0 };
        let cn = if on_n { (1.0 - self.pi_d) * self.inv_gap } else { 0.0 };
        (risk, [cp * (1.0 - tm), -cp * (1.0 - tp), cn * tp, -cn * tm])
    }
}

fn mean_losses(scores: &[f64]) -> (f64, f64) {
    let n = scores.len() as f64;
    let pos = scores.iter().map(|&s| logistic_loss(1.0, s)).sum::<f64>() / n;
    let neg = scores.iter().map(|&s| logistic_loss(-1.0, s)).sum::<f64>() / n;
    (pos, neg)
}

/// Two-bag risk from raw scores of the higher-prior bag (`plus`) and the
/// lower-prior bag (`minus`). With `corrected`, each class-partial risk is
/// clamped at zero.
pub fn uu_c_risk(
    scores_plus: &[f64],
    scores_minus: &[f64],
    theta_plus: f64,
    theta_minus: f64,
    pi_d: f64,
    corrected: bool,
) -> Result<f64> {
    uu_c_risk_grad(scores_plus, scores_minus, theta_plus, theta_minus, pi_d, corrected).map(|r| r.0)
}

/// Risk plus its gradient with respect to each bag's raw scores.
pub fn uu_c_risk_grad(
    scores_plus: &[f64],
    scores_minus: &[f64],
    theta_plus: f64,
    theta_minus: f64,
    pi_d: f64,
    corrected: bool,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_thetas(theta_plus, theta_minus, pi_d)?;
    if scores_plus.is_empty() || scores_minus.is_empty() {
        return Err(Error::DegenerateInput("both bags need rows".into()));
    }
    let terms = UuTerms {
        pi_d,
        inv_gap: 1.0 / (theta_plus - theta_minus),
        theta_plus,
        theta_minus,
        corrected,
    };
    let (lpp, lpm) = mean_losses(scores_plus);
    let (lmp, lmm) = mean_losses(scores_minus);
    let (risk, w) = terms.eval(lpp, lmp, lmm, lpm);
    // d/ds ln(1+e^{-s}) = -σ(-s); d/ds ln(1+e^{s}) = σ(s).
    let np = scores_plus.len() as f64;
    let nm = scores_minus.len() as f64;
    let gp = scores_plus
        .iter()
        .map(|&s| (w[0] * -sigmoid(-s) + w[3] * sigmoid(s)) / np)
        .collect();
    let gm = scores_minus
        .iter()
        .map(|&s| (w[1] * -sigmoid(-s) + w[2] * sigmoid(s)) / nm)
        .collect();
    Ok((risk, gp, gm))
}

/// Weighted sum of two-bag risks over matched pairs. Rows are addressed
/// by `bag_ids`; within a minibatch a pair contributes only when both of
/// its bags have rows in the batch.
pub struct McmObjective<'a> {
    pub bag_ids: &'a [usize],
    pub pairs: &'a [(usize, usize)],
    pub weights: &'a [f64],
    pub priors: &'a [f64],
    pub pi_d: f64,
    pub corrected: bool,
}

impl Objective for McmObjective<'_> {
    fn len(&self) -> usize {
        self.bag_ids.len()
    }

    fn batch_loss_grad(&self, idx: &[usize], scores: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let m = self.priors.len();
        // Role of each bag: (pair index, is plus side).
        let mut role = vec![None; m];
        for (t, &(p, q)) in self.pairs.iter().enumerate() {
            role[p] = Some((t, true));
            role[q] = Some((t, false));
        }
        let mut rows: Vec<[Vec<usize>; 2]> = vec![[Vec::new(), Vec::new()]; self.pairs.len()];
        for (k, &i) in idx.iter().enumerate() {
            if let Some((t, plus)) = role[self.bag_ids[i]] {
                rows[t][usize::from(!plus)].push(k);
            }
        }
        let mut total = 0.0;
        for (t, &(p, q)) in self.pairs.iter().enumerate() {
            let [rp, rm] = &rows[t];
            if rp.is_empty() || rm.is_empty() {
                continue;
            }
            let sp: Vec<f64> = rp.iter().map(|&k| scores[k]).collect();
            let sm: Vec<f64> = rm.iter().map(|&k| scores[k]).collect();
            let (r, gp, gm) = uu_c_risk_grad(&sp, &sm, self.priors[p], self.priors[q], self.pi_d, self.corrected)
                .expect("pairs validated before training");
            let w = self.weights[t];
            total += w * r;
            for (&k, g) in rp.iter().zip(gp) {
                grad[k] += w * g;
            }
            for (&k, g) in rm.iter().zip(gm) {
                grad[k] += w * g;
            }
        }
        total
    }
}

/// Pairs the bags by estimated priors and minimizes the weighted corrected
/// two-bag risks.
pub fn train_mcm(
    bags: &BagCollection,
    priors: &[f64],
    pi_d: f64,
    cfg: &ScorerConfig,
) -> Result<(Scorer, McmPairing)> {
    let pairing = pair_bags_mcm(priors, &bags.sizes())?;
    for &(p, q) in &pairing.pairs {
        check_thetas(priors[p], priors[q], pi_d)?;
    }
    let (x, ids) = bags.stacked();
    let obj = McmObjective {
        bag_ids: &ids,
        pairs: &pairing.pairs,
        weights: &pairing.weights,
        priors,
        pi_d,
        corrected: true,
    };
    Ok((train_with_objective(cfg, &x, &obj)?, pairing))
}

/// Bag id recorded on test-prior estimates.
pub const TEST_BAG: usize = usize::MAX;

/// Treats the test features as one more bag and estimates its prior from a
/// completed pair's reference sets.
pub fn estimate_test_prior(
    x_test: &Array2<f64>,
    set: &PseudoLabeledSet,
    confident: &ConfidentSets,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<PriorEstimate> {
    estimate(TEST_BAG, x_test, confident, set, cfg, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "value")]
pub enum TestPrior {
    Given(f64),
    Estimate,
}

/// `sign f(x)` as ±1.
pub fn predict(scorer: &Scorer, x: &Array2<f64>) -> Result<Array1<f64>> {
    Ok(scorer.raw_scores(x)?.mapv(|s| if s >= 0.0 { 1.0 } else { -1.0 }))
}
