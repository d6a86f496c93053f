//! Pseudo-labelling of the declared pair and the three confident-example
//! selectors (loss mixture, confident joint, embedding alignment).

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{em_fit_gmm2, top_eigvec, EmOptions};
use crate::scorer::{per_example_logistic_loss, train_binary, ArchKind, Scorer, ScorerConfig};
use crate::seed;

/// Rows of bag α labelled +1 followed by rows of bag β labelled −1.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabeledSet {
    features: Array2<f64>,
    pseudo_labels: Vec<f64>,
    origin: Vec<usize>,
    n_alpha: usize,
}

pub fn assign_pseudo_labels(
    alpha: usize,
    bag_alpha: &Array2<f64>,
    beta: usize,
    bag_beta: &Array2<f64>,
) -> Result<PseudoLabeledSet> {
    if bag_alpha.nrows() == 0 {
        return Err(Error::EmptyBag(alpha));
    }
    if bag_beta.nrows() == 0 {
        return Err(Error::EmptyBag(beta));
    }
    if bag_alpha.ncols() != bag_beta.ncols() {
        return Err(Error::Shape {
            expected: bag_alpha.ncols(),
            got: bag_beta.ncols(),
        });
    }
    let features = ndarray::concatenate(Axis(0), &[bag_alpha.view(), bag_beta.view()])
        .expect("column counts checked");
    let (na, nb) = (bag_alpha.nrows(), bag_beta.nrows());
    let mut pseudo_labels = vec![1.0; na];
    pseudo_labels.resize(na + nb, -1.0);
    let mut origin = vec![alpha; na];
    origin.resize(na + nb, beta);
    Ok(PseudoLabeledSet {
        features,
        pseudo_labels,
        origin,
        n_alpha: na,
    })
}

impl PseudoLabeledSet {
    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn pseudo_labels(&self) -> &[f64] {
        &self.pseudo_labels
    }

    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    pub fn len(&self) -> usize {
        self.pseudo_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pseudo_labels.is_empty()
    }

    /// Number of rows from bag α; these come first.
    pub fn n_alpha(&self) -> usize {
        self.n_alpha
    }

    pub fn rows(&self, idx: &[usize]) -> Array2<f64> {
        self.features.select(Axis(0), idx)
    }

    fn side(&self, positive: bool) -> Vec<usize> {
        if positive {
            (0..self.n_alpha).collect()
        } else {
            (self.n_alpha..self.len()).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMethod {
    Loss,
    ConfidentJoint,
    Alignment,
    /// Both pseudo-label sides kept whole (selection ablated).
    Raw,
    /// Sets extended by copying rows across sides.
    Regrouped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidentSets {
    pub positive_idx: Vec<usize>,
    pub negative_idx: Vec<usize>,
    pub method: SelectionMethod,
}

impl ConfidentSets {
    /// Checks the index invariants. Regrouped sets may overlap and cross
    /// pseudo-label sides by design.
    pub fn check(&self, set: &PseudoLabeledSet) -> Result<()> {
        if self.positive_idx.is_empty() {
            return Err(Error::EmptySelection { side: "positive" });
        }
        if self.negative_idx.is_empty() {
            return Err(Error::EmptySelection { side: "negative" });
        }
        let n = set.len();
        if let Some(&i) = self.positive_idx.iter().chain(&self.negative_idx).find(|&&i| i >= n) {
            return Err(Error::Shape { expected: n, got: i });
        }
        if self.method != SelectionMethod::Regrouped {
            let labels = set.pseudo_labels();
            assert!(self.positive_idx.iter().all(|&i| labels[i] > 0.0));
            assert!(self.negative_idx.iter().all(|&i| labels[i] < 0.0));
        }
        Ok(())
    }

    pub fn positives(&self, set: &PseudoLabeledSet) -> Array2<f64> {
        set.rows(&self.positive_idx)
    }

    pub fn negatives(&self, set: &PseudoLabeledSet) -> Array2<f64> {
        set.rows(&self.negative_idx)
    }

    /// Whole pseudo-label sides.
    pub fn raw(set: &PseudoLabeledSet) -> Self {
        Self {
            positive_idx: set.side(true),
            negative_idx: set.side(false),
            method: SelectionMethod::Raw,
        }
    }

    fn from_split(
        set: &PseudoLabeledSet,
        pos: Vec<usize>,
        neg: Vec<usize>,
        method: SelectionMethod,
    ) -> Result<Self> {
        let out = Self {
            positive_idx: pos,
            negative_idx: neg,
            method,
        };
        out.check(set)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorKind {
    Loss,
    ConfidentJoint,
    Alignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub kind: SelectorKind,
    /// Posterior threshold of the loss selector.
    pub loss_threshold: f64,
    /// Out-of-sample probabilities for the confident joint.
    pub cross_validated: bool,
    pub folds: usize,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            kind: SelectorKind::Alignment,
            loss_threshold: 0.7,
            cross_validated: false,
            folds: 4,
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.loss_threshold > 0.0 && self.loss_threshold < 1.0) {
            return Err(Error::Config(format!(
                "loss_threshold must lie in (0, 1), got {}",
                self.loss_threshold
            )));
        }
        if self.cross_validated && self.folds < 2 {
            return Err(Error::Config("cross-validation needs at least 2 folds".into()));
        }
        Ok(())
    }
}

/// Runs the configured selector. `warm_cfg` is only used by the
/// cross-validated confident joint, which trains its own fold scorers.
pub fn select(
    cfg: &SelectorConfig,
    warm: &Scorer,
    set: &PseudoLabeledSet,
    warm_cfg: &ScorerConfig,
) -> Result<ConfidentSets> {
    cfg.validate()?;
    match cfg.kind {
        SelectorKind::Loss => select_by_loss(warm, set, cfg.loss_threshold),
        SelectorKind::ConfidentJoint if cfg.cross_validated => {
            select_by_confident_joint_cv(warm_cfg, set, cfg.folds)
        }
        SelectorKind::ConfidentJoint => select_by_confident_joint(warm, set),
        SelectorKind::Alignment => select_by_alignment(warm, set),
    }
}

/// Keeps rows whose posterior under the low-loss mixture component is at
/// least `threshold`.
pub fn select_by_loss(warm: &Scorer, set: &PseudoLabeledSet, threshold: f64) -> Result<ConfidentSets> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let losses = per_example_logistic_loss(warm, set.features(), set.pseudo_labels())?;
    let losses = losses.to_vec();
    let fit = em_fit_gmm2(&losses, EmOptions::default())?;
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (i, &l) in losses.iter().enumerate() {
        if fit.model.posterior0(l) >= threshold {
            if set.pseudo_labels[i] > 0.0 {
                pos.push(i);
            } else {
                neg.push(i);
            }
        }
    }
    ConfidentSets::from_split(set, pos, neg, SelectionMethod::Loss)
}

/// Diagonal cells of the confident joint from probabilities `P(+1|x)`.
pub fn confident_joint_cells(prob_pos: &[f64], pseudo_labels: &[f64]) -> Result<(Vec<usize>, Vec<usize>)> {
    if prob_pos.len() != pseudo_labels.len() {
        return Err(Error::Shape {
            expected: pseudo_labels.len(),
            got: prob_pos.len(),
        });
    }
    let mean_of = |want_pos: bool| {
        let v: Vec<f64> = prob_pos
            .iter()
            .zip(pseudo_labels)
            .filter(|(_, &y)| (y > 0.0) == want_pos)
            .map(|(&p, _)| if want_pos { p } else { 1.0 - p })
            .collect();
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    let t_pos = mean_of(true).ok_or(Error::EmptySelection { side: "positive" })?;
    let t_neg = mean_of(false).ok_or(Error::EmptySelection { side: "negative" })?;
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (i, (&p, &y)) in prob_pos.iter().zip(pseudo_labels).enumerate() {
        let q = 1.0 - p;
        // Only the diagonal cells are kept; exact ties have no argmax.
        if y > 0.0 && p > q && p >= t_pos {
            pos.push(i);
        } else if y < 0.0 && q > p && q >= t_neg {
            neg.push(i);
        }
    }
    Ok((pos, neg))
}

pub fn select_by_confident_joint(warm: &Scorer, set: &PseudoLabeledSet) -> Result<ConfidentSets> {
    let p = warm.predict_proba(set.features())?;
    let (pos, neg) = confident_joint_cells(p.as_slice().expect("contiguous"), set.pseudo_labels())?;
    ConfidentSets::from_split(set, pos, neg, SelectionMethod::ConfidentJoint)
}

/// Confident joint on out-of-fold probabilities: each fold is scored by a
/// scorer trained with `cfg` on the remaining folds.
pub fn select_by_confident_joint_cv(cfg: &ScorerConfig, set: &PseudoLabeledSet, folds: usize) -> Result<ConfidentSets> {
    if folds < 2 || folds > set.len() {
        return Err(Error::Config(format!("cannot split {} rows into {folds} folds", set.len())));
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(&mut seed::rng(seed::derive(cfg.seed, &[seed::TAG_CV])));
    let mut prob = vec![0.0; set.len()];
    for f in 0..folds {
        let held: Vec<usize> = order.iter().copied().skip(f).step_by(folds).collect();
        let mut mask = vec![false; set.len()];
        held.iter().for_each(|&i| mask[i] = true);
        let fit: Vec<usize> = (0..set.len()).filter(|&i| !mask[i]).collect();
        let labels: Vec<f64> = fit.iter().map(|&i| set.pseudo_labels[i]).collect();
        let fold_cfg = cfg.with_seed(seed::derive(cfg.seed, &[seed::TAG_CV, f as u64]));
        let s = train_binary(&fold_cfg, &set.rows(&fit), &labels, None)?;
        let p = s.predict_proba(&set.rows(&held))?;
        for (&i, &v) in held.iter().zip(p.iter()) {
            prob[i] = v;
        }
    }
    let (pos, neg) = confident_joint_cells(&prob, set.pseudo_labels())?;
    ConfidentSets::from_split(set, pos, neg, SelectionMethod::ConfidentJoint)
}

/// Alignment selection from the warm-up scorer's hidden representation.
pub fn select_by_alignment(warm: &Scorer, set: &PseudoLabeledSet) -> Result<ConfidentSets> {
    if warm.architecture() == ArchKind::Linear {
        return Err(Error::EmbeddingUnavailable);
    }
    let z = warm.embed(set.features())?;
    let (pos, neg) = alignment_cells(&z, set.pseudo_labels())?;
    ConfidentSets::from_split(set, pos, neg, SelectionMethod::Alignment)
}

/// Squared projections of each unit-normalized row onto the top eigenvector
/// of the normalized rows' Gram matrix. Zero rows score zero.
pub fn alignment_scores(z: &Array2<f64>) -> Result<Array1<f64>> {
    let mut z = z.to_owned();
    for mut row in z.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    let gram = z.t().dot(&z);
    let u = top_eigvec(&gram)?.vector;
    Ok(z.dot(&u).mapv(|v| v * v))
}

fn aligned_rows(z: &Array2<f64>, rows: &[usize]) -> Result<Vec<usize>> {
    if rows.len() < 4 {
        return Err(Error::DegenerateInput(format!(
            "alignment needs at least 4 rows per pseudo class, got {}",
            rows.len()
        )));
    }
    let a = alignment_scores(&z.select(Axis(0), rows))?;
    let fit = em_fit_gmm2(a.as_slice().expect("contiguous"), EmOptions::default())?;
    Ok(rows
        .iter()
        .zip(a.iter())
        .filter(|(_, &v)| 1.0 - fit.model.posterior0(v) >= 0.5)
        .map(|(&i, _)| i)
        .collect())
}

/// Per pseudo class, the rows in the larger-mean alignment component.
pub fn alignment_cells(z: &Array2<f64>, pseudo_labels: &[f64]) -> Result<(Vec<usize>, Vec<usize>)> {
    if z.nrows() != pseudo_labels.len() {
        return Err(Error::Shape {
            expected: pseudo_labels.len(),
            got: z.nrows(),
        });
    }
    let pos_rows: Vec<usize> = (0..z.nrows()).filter(|&i| pseudo_labels[i] > 0.0).collect();
    let neg_rows: Vec<usize> = (0..z.nrows()).filter(|&i| pseudo_labels[i] < 0.0).collect();
    let (pos, neg) = rayon::join(|| aligned_rows(z, &pos_rows), || aligned_rows(z, &neg_rows));
    Ok((pos?, neg?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::ScorerConfig;
    use ndarray::array;

    fn toy_pair() -> PseudoLabeledSet {
        let a = array![[1.0], [2.0], [3.0]];
        let b = array![[-1.0], [-2.0]];
        assign_pseudo_labels(0, &a, 1, &b).unwrap()
    }

    #[test]
    fn pseudo_label_construction() {
        let s = toy_pair();
        assert_eq!(s.len(), 5);
        assert_eq!(s.pseudo_labels(), &[1.0, 1.0, 1.0, -1.0, -1.0]);
        assert_eq!(s.origin(), &[0, 0, 0, 1, 1]);
        let a = array![[1.0], [2.0], [3.0]];
        let b = array![[-1.0], [-2.0]];
        let swapped = assign_pseudo_labels(1, &b, 0, &a).unwrap();
        assert_eq!(swapped.pseudo_labels(), &[1.0, 1.0, -1.0, -1.0, -1.0]);
        assert_eq!(
            assign_pseudo_labels(0, &Array2::zeros((0, 1)), 1, &b),
            Err(Error::EmptyBag(0))
        );
    }

    #[test]
    fn confident_joint_hand_example() {
        let (pos, neg) = confident_joint_cells(&[0.9, 0.6, 0.4, 0.2], &[1.0, 1.0, -1.0, -1.0]).unwrap();
        assert_eq!(pos, vec![0]);
        assert_eq!(neg, vec![3]);
    }

    #[test]
    fn confident_joint_perfect_scorer_keeps_everything() {
        let p = [1.0, 1.0, 0.0, 0.0, 0.0];
        let (pos, neg) = confident_joint_cells(&p, &[1.0, 1.0, -1.0, -1.0, -1.0]).unwrap();
        assert_eq!(pos, vec![0, 1]);
        assert_eq!(neg, vec![2, 3, 4]);
    }

    #[test]
    fn confident_joint_requires_argmax() {
        // t_neg = 0.1: rows 2 and 3 meet it, but their argmax class is
        // positive, so the negative diagonal stays empty.
        let p = [0.95, 0.7, 0.9, 0.9];
        let (pos, neg) = confident_joint_cells(&p, &[1.0, 1.0, -1.0, -1.0]).unwrap();
        assert_eq!(pos, vec![0]);
        assert!(neg.is_empty());
    }

    #[test]
    fn alignment_on_orthogonal_embeddings() {
        // Pseudo-positive side: 6 rows on v = e1 (true +), 2 rows on w = e2.
        // Pseudo-negative side: 5 rows on w, 1 row on v.
        let v = [1.0, 0.0];
        let w = [0.0, 1.0];
        let rows = [v, v, v, v, v, v, w, w, w, w, w, w, w, v];
        let z = Array2::from_shape_fn((14, 2), |(i, j)| rows[i][j]);
        let labels: Vec<f64> = (0..14).map(|i| if i < 8 { 1.0 } else { -1.0 }).collect();
        // By hand: G_+ = diag(6, 2) so u_+ = e1 and a = 1 on v rows, 0 on
        // w rows; G_- = diag(1, 5) so u_- = e2.
        let (pos, neg) = alignment_cells(&z, &labels).unwrap();
        assert_eq!(pos, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(neg, vec![8, 9, 10, 11, 12]);

        let (pos2, neg2) = alignment_cells(&(&z * 3.7), &labels).unwrap();
        assert_eq!((pos2, neg2), (pos, neg));
    }

    #[test]
    fn alignment_degenerate_and_linear() {
        let z = Array2::from_elem((8, 3), 0.5);
        let labels = [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
        assert!(matches!(alignment_cells(&z, &labels), Err(Error::DegenerateInput(_))));
        let lin = Scorer::init(&ScorerConfig::linear(), 1).unwrap();
        assert_eq!(select_by_alignment(&lin, &toy_pair()), Err(Error::EmbeddingUnavailable));
    }

    #[test]
    fn loss_threshold_bounds() {
        let s = Scorer::init(&ScorerConfig::linear(), 1).unwrap();
        assert!(matches!(select_by_loss(&s, &toy_pair(), 1.0), Err(Error::Config(_))));
        assert!(matches!(select_by_loss(&s, &toy_pair(), 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn loss_selection_on_separated_modes() {
        // Fixed scorer f(x) = x. Clean rows sit far on their own side, noisy
        // rows far on the opposite side, so losses form two tight modes.
        let mut s = Scorer::init(&ScorerConfig::linear(), 1).unwrap();
        s.params_mut()[0] = 1.0;
        let a = array![[8.0], [8.1], [7.9], [8.05], [-8.0], [-7.95]];
        let b = array![[-8.0], [-8.1], [-7.9], [8.0], [7.9]];
        let set = assign_pseudo_labels(0, &a, 1, &b).unwrap();
        for t in [0.02, 0.3, 0.5, 0.7, 0.98] {
            let c = select_by_loss(&s, &set, t).unwrap();
            assert_eq!(c.positive_idx, vec![0, 1, 2, 3], "threshold {t}");
            assert_eq!(c.negative_idx, vec![6, 7, 8], "threshold {t}");
        }
    }
}
