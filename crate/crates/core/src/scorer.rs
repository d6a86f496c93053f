//! Binary scorers: a linear model and a one-hidden-layer network, trained by
//! plain minibatch gradient descent on any per-batch objective.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchKind {
    Linear,
    Mlp,
}

/// Hidden-layer nonlinearity. Both choices are smooth and nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Sigmoid,
    Softplus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub architecture: ArchKind,
    /// Ignored by the linear architecture.
    pub hidden_width: usize,
    pub activation: Activation,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// L2 penalty on weights (not biases).
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            architecture: ArchKind::Mlp,
            hidden_width: 16,
            activation: Activation::Sigmoid,
            learning_rate: 0.05,
            batch_size: 64,
            epochs: 10,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl ScorerConfig {
    pub fn linear() -> Self {
        Self {
            architecture: ArchKind::Linear,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        if self.architecture == ArchKind::Mlp && self.hidden_width == 0 {
            return Err(Error::Config("hidden_width must be at least 1 for mlp".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn with_epochs(&self, epochs: usize) -> Self {
        Self {
            epochs,
            ..self.clone()
        }
    }
}

#[inline]
pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^s)` without overflow.
#[inline]
pub fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

/// Logistic loss `ln(1 + exp(-y s))`.
#[inline]
pub fn logistic_loss(y: f64, s: f64) -> f64 {
    softplus(-y * s)
}

/// Largest double below one; keeps probabilities strictly inside (0, 1).
const P_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

#[inline]
fn clamp_open(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, P_MAX)
}

impl Activation {
    #[inline]
    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(a),
            Activation::Softplus => softplus(a),
        }
    }

    /// Derivative expressed through the activation output `z`.
    #[inline]
    fn derivative_from_output(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => z * (1.0 - z),
            Activation::Softplus => -(-z).exp_m1(),
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Softplus => "softplus",
        }
    }
}

/// A trained or freshly initialized scorer. Parameters live in one flat
/// vector; for the network the layout is `w1 (h x d, row-major), b1, w2, b2`,
/// for the linear model `w, b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scorer {
    arch: ArchKind,
    activation: Activation,
    input_dim: usize,
    hidden: usize,
    params: Vec<f64>,
}

/// Training objective evaluated on one minibatch.
///
/// `scores` holds the raw scores of rows `idx`; the implementation writes
/// the derivative of the returned batch loss with respect to each score into
/// `grad` (same length as `idx`).
pub trait Objective {
    fn len(&self) -> usize;
    fn batch_loss_grad(&self, idx: &[usize], scores: &[f64], grad: &mut [f64]) -> f64;
}

/// Mean (optionally weighted) logistic loss against fixed ±1 labels.
pub struct LogisticObjective<'a> {
    pub labels: &'a [f64],
    pub weights: Option<&'a [f64]>,
}

impl Objective for LogisticObjective<'_> {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn batch_loss_grad(&self, idx: &[usize], scores: &[f64], grad: &mut [f64]) -> f64 {
        let inv = 1.0 / idx.len() as f64;
        let mut loss = 0.0;
        for (k, &i) in idx.iter().enumerate() {
            let y = self.labels[i];
            let w = self.weights.map_or(1.0, |w| w[i]);
            let s = scores[k];
            loss += w * logistic_loss(y, s);
            // d/ds ln(1 + e^{-ys}) = -y sigmoid(-ys)
            grad[k] = -w * y * sigmoid(-y * s) * inv;
        }
        loss * inv
    }
}

impl Scorer {
    /// Random initialization: network weights are Gaussian with variance
    /// `1/fan_in`, biases and linear weights start at zero.
    pub fn init(cfg: &ScorerConfig, input_dim: usize) -> Result<Self> {
        cfg.validate()?;
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be at least 1".into()));
        }
        let mut rng = seed::rng(seed::derive(cfg.seed, &[0]));
        let (hidden, params) = match cfg.architecture {
            ArchKind::Linear => (0, vec![0.0; input_dim + 1]),
            ArchKind::Mlp => {
                let h = cfg.hidden_width;
                let mut p = vec![0.0; h * input_dim + h + h + 1];
                let n1 = Normal::new(0.0, (1.0 / input_dim as f64).sqrt()).expect("valid std");
                for v in &mut p[..h * input_dim] {
                    *v = n1.sample(&mut rng);
                }
                let n2 = Normal::new(0.0, (1.0 / h as f64).sqrt()).expect("valid std");
                let off = h * input_dim + h;
                for v in &mut p[off..off + h] {
                    *v = n2.sample(&mut rng);
                }
                (h, p)
            }
        };
        Ok(Self {
            arch: cfg.architecture,
            activation: cfg.activation,
            input_dim,
            hidden,
            params,
        })
    }

    pub fn architecture(&self) -> ArchKind {
        self.arch
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Width of `embed` output.
    pub fn embed_dim(&self) -> usize {
        match self.arch {
            ArchKind::Linear => self.input_dim,
            ArchKind::Mlp => self.hidden,
        }
    }

    fn check_dim(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(Error::Shape {
                expected: self.input_dim,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Indices of weights that receive weight decay.
    fn is_weight(&self, k: usize) -> bool {
        match self.arch {
            ArchKind::Linear => k < self.input_dim,
            ArchKind::Mlp => {
                let h = self.hidden;
                let d = self.input_dim;
                k < h * d || (h * d + h..h * d + 2 * h).contains(&k)
            }
        }
    }

    /// Raw score of one row; fills `z` with hidden activations for the network.
    #[inline]
    fn forward_row(&self, x: ArrayView1<f64>, z: &mut [f64]) -> f64 {
        let d = self.input_dim;
        match self.arch {
            ArchKind::Linear => {
                let w = &self.params[..d];
                x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + self.params[d]
            }
            ArchKind::Mlp => {
                let h = self.hidden;
                let p = &self.params;
                let (w1, rest) = p.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h);
                let mut s = b2[0];
                for k in 0..h {
                    let row = &w1[k * d..(k + 1) * d];
                    let a = x.iter().zip(row).map(|(u, v)| u * v).sum::<f64>() + b1[k];
                    let zk = self.activation.apply(a);
                    z[k] = zk;
                    s += w2[k] * zk;
                }
                s
            }
        }
    }

    /// Accumulates `g * d score / d params` for one row into `acc`.
    #[inline]
    fn backward_row(&self, x: ArrayView1<f64>, z: &[f64], g: f64, acc: &mut [f64]) {
        let d = self.input_dim;
        match self.arch {
            ArchKind::Linear => {
                for (a, xv) in acc[..d].iter_mut().zip(x.iter()) {
                    *a += g * xv;
                }
                acc[d] += g;
            }
            ArchKind::Mlp => {
                let h = self.hidden;
                let w2 = &self.params[h * d + h..h * d + 2 * h];
                for k in 0..h {
                    let da = g * w2[k] * self.activation.derivative_from_output(z[k]);
                    let row = &mut acc[k * d..(k + 1) * d];
                    for (a, xv) in row.iter_mut().zip(x.iter()) {
                        *a += da * xv;
                    }
                    acc[h * d + k] += da;
                    acc[h * d + h + k] += g * z[k];
                }
                acc[h * d + 2 * h] += g;
            }
        }
    }

    pub fn raw_scores(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        let v = x.view();
        self.check_dim(&v)?;
        let mut z = vec![0.0; self.hidden];
        Ok(v.rows().into_iter().map(|r| self.forward_row(r, &mut z)).collect())
    }

    /// `P(y = +1 | x)`, strictly inside (0, 1).
    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        Ok(self.raw_scores(x)?.mapv(|s| clamp_open(sigmoid(s))))
    }

    /// Hidden activations for the network; the input itself for the linear
    /// model.
    pub fn embed(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let v = x.view();
        self.check_dim(&v)?;
        match self.arch {
            ArchKind::Linear => Ok(x.clone()),
            ArchKind::Mlp => {
                let mut out = Array2::zeros((x.nrows(), self.hidden));
                let mut z = vec![0.0; self.hidden];
                for (i, r) in v.rows().into_iter().enumerate() {
                    self.forward_row(r, &mut z);
                    out.row_mut(i).assign(&ArrayView1::from(&z[..]));
                }
                Ok(out)
            }
        }
    }

    /// Copy whose output layer is negated, so its probabilities are `1 - p`.
    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        let n = out.params.len();
        let start = match self.arch {
            ArchKind::Linear => 0,
            ArchKind::Mlp => self.hidden * self.input_dim + self.hidden,
        };
        for v in &mut out.params[start..n] {
            *v = -*v;
        }
        out
    }

    /// Objective value over all rows as a single batch, plus the penalty,
    /// and its gradient with respect to the parameters.
    pub fn objective_and_gradient(
        &self,
        x: &Array2<f64>,
        objective: &dyn Objective,
        weight_decay: f64,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_dim(&x.view())?;
        let idx: Vec<usize> = (0..x.nrows()).collect();
        let mut grad = vec![0.0; self.params.len()];
        let loss = self.batch_step(x, objective, &idx, weight_decay, &mut grad);
        Ok((loss, grad))
    }

    fn batch_step(
        &self,
        x: &Array2<f64>,
        objective: &dyn Objective,
        idx: &[usize],
        weight_decay: f64,
        grad: &mut [f64],
    ) -> f64 {
        let h = self.hidden;
        let mut zs = vec![0.0; idx.len() * h];
        let mut scores = vec![0.0; idx.len()];
        for (k, &i) in idx.iter().enumerate() {
            scores[k] = self.forward_row(x.row(i), &mut zs[k * h..(k + 1) * h]);
        }
        let mut sg = vec![0.0; idx.len()];
        let mut loss = objective.batch_loss_grad(idx, &scores, &mut sg);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (k, &i) in idx.iter().enumerate() {
            if sg[k] != 0.0 {
                self.backward_row(x.row(i), &zs[k * h..(k + 1) * h], sg[k], grad);
            }
        }
        if weight_decay > 0.0 {
            for (j, g) in grad.iter_mut().enumerate() {
                if self.is_weight(j) {
                    let w = self.params[j];
                    loss += 0.5 * weight_decay * w * w;
                    *g += weight_decay * w;
                }
            }
        }
        loss
    }

    /// Continues training in place for `cfg.epochs` passes. Architecture
    /// fields of `cfg` are ignored.
    pub fn fit(&mut self, cfg: &ScorerConfig, x: &Array2<f64>, objective: &dyn Objective) -> Result<()> {
        cfg.validate()?;
        self.check_dim(&x.view())?;
        if objective.len() != x.nrows() {
            return Err(Error::Shape {
                expected: x.nrows(),
                got: objective.len(),
            });
        }
        if x.nrows() == 0 {
            return Err(Error::DegenerateInput("no training rows".into()));
        }
        let mut rng = seed::rng(seed::derive(cfg.seed, &[1]));
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        let mut grad = vec![0.0; self.params.len()];
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                self.batch_step(x, objective, batch, cfg.weight_decay, &mut grad);
                for (p, g) in self.params.iter_mut().zip(&grad) {
                    *p -= cfg.learning_rate * g;
                }
            }
        }
        Ok(())
    }

    /// Saves the parameters in the `PLSC1` container.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        let tag = match self.arch {
            ArchKind::Linear => "linear".to_string(),
            ArchKind::Mlp => format!("mlp:{}", self.activation.tag()),
        };
        w.write_all(MAGIC)?;
        write_str(&mut w, &tag)?;
        let arrays = self.named_arrays();
        w.write_all(&(arrays.len() as u32).to_le_bytes())?;
        for (name, dims, data) in arrays {
            write_str(&mut w, name)?;
            w.write_all(&(dims.len() as u32).to_le_bytes())?;
            for d in dims {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(ckpt)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let tag = read_str(&mut r)?;
        let (arch, activation) = match tag.as_str() {
            "linear" => (ArchKind::Linear, Activation::Sigmoid),
            "mlp:sigmoid" => (ArchKind::Mlp, Activation::Sigmoid),
            "mlp:softplus" => (ArchKind::Mlp, Activation::Softplus),
            other => return Err(Error::Checkpoint(format!("unknown architecture tag {other:?}"))),
        };
        let count = read_u32(&mut r)? as usize;
        let mut arrays = Vec::with_capacity(count);
        for _ in 0..count {
            let name = read_str(&mut r)?;
            let ndim = read_u32(&mut r)? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let mut b = [0u8; 8];
                r.read_exact(&mut b).map_err(ckpt)?;
                dims.push(u64::from_le_bytes(b) as usize);
            }
            let len: usize = dims.iter().product();
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                let mut b = [0u8; 8];
                r.read_exact(&mut b).map_err(ckpt)?;
                data.push(f64::from_le_bytes(b));
            }
            arrays.push((name, dims, data));
        }
        let find = |n: &str| {
            arrays
                .iter()
                .find(|a| a.0 == n)
                .ok_or_else(|| Error::Checkpoint(format!("missing array {n}")))
        };
        match arch {
            ArchKind::Linear => {
                let (_, wd, w) = find("w")?;
                let (_, _, b) = find("b")?;
                if wd.len() != 1 || b.len() != 1 {
                    return Err(Error::Checkpoint("bad linear shapes".into()));
                }
                let mut params = w.clone();
                params.push(b[0]);
                Ok(Self {
                    arch,
                    activation,
                    input_dim: wd[0],
                    hidden: 0,
                    params,
                })
            }
            ArchKind::Mlp => {
                let (_, d1, w1) = find("w1")?;
                let (_, _, b1) = find("b1")?;
                let (_, _, w2) = find("w2")?;
                let (_, _, b2) = find("b2")?;
                if d1.len() != 2 || b1.len() != d1[0] || w2.len() != d1[0] || b2.len() != 1 {
                    return Err(Error::Checkpoint("bad mlp shapes".into()));
                }
                let mut params = w1.clone();
                params.extend_from_slice(b1);
                params.extend_from_slice(w2);
                params.push(b2[0]);
                Ok(Self {
                    arch,
                    activation,
                    input_dim: d1[1],
                    hidden: d1[0],
                    params,
                })
            }
        }
    }

    fn named_arrays(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let d = self.input_dim;
        let p = &self.params;
        match self.arch {
            ArchKind::Linear => vec![("w", vec![d], &p[..d]), ("b", vec![1], &p[d..])],
            ArchKind::Mlp => {
                let h = self.hidden;
                vec![
                    ("w1", vec![h, d], &p[..h * d]),
                    ("b1", vec![h], &p[h * d..h * d + h]),
                    ("w2", vec![h], &p[h * d + h..h * d + 2 * h]),
                    ("b2", vec![1], &p[h * d + 2 * h..]),
                ]
            }
        }
    }
}

const MAGIC: &[u8; 5] = b"PLSC1";

fn ckpt(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(ckpt)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let n = read_u32(r)? as usize;
    if n > 1 << 16 {
        return Err(Error::Checkpoint("string too long".into()));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b).map_err(ckpt)?;
    String::from_utf8(b).map_err(|e| Error::Checkpoint(e.to_string()))
}

/// Trains a fresh scorer on the logistic loss.
pub fn train_binary(
    cfg: &ScorerConfig,
    x: &Array2<f64>,
    labels: &[f64],
    weights: Option<&[f64]>,
) -> Result<Scorer> {
    if labels.len() != x.nrows() {
        return Err(Error::Shape {
            expected: x.nrows(),
            got: labels.len(),
        });
    }
    if let Some(w) = weights {
        if w.len() != labels.len() {
            return Err(Error::Shape {
                expected: labels.len(),
                got: w.len(),
            });
        }
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::Config(format!("labels must be +1 or -1, got {bad}")));
    }
    let pos = labels.iter().filter(|&&y| y > 0.0).count();
    if weights.is_none() && (pos == 0 || pos == labels.len()) {
        log::warn!("training a binary scorer on single-label data ({} rows)", labels.len());
    }
    let objective = LogisticObjective { labels, weights };
    train_with_objective(cfg, x, &objective)
}

pub fn train_with_objective(cfg: &ScorerConfig, x: &Array2<f64>, objective: &dyn Objective) -> Result<Scorer> {
    let mut s = Scorer::init(cfg, x.ncols())?;
    s.fit(cfg, x, objective)?;
    Ok(s)
}

/// `ln(1 + exp(-y f(x)))` per row.
pub fn per_example_logistic_loss(scorer: &Scorer, x: &Array2<f64>, labels: &[f64]) -> Result<Array1<f64>> {
    if labels.len() != x.nrows() {
        return Err(Error::Shape {
            expected: x.nrows(),
            got: labels.len(),
        });
    }
    let s = scorer.raw_scores(x)?;
    Ok(s.iter().zip(labels).map(|(&s, &y)| logistic_loss(y, s)).collect())
}

/// Fraction of rows whose sign of `f(x)` matches the label.
pub fn accuracy(scorer: &Scorer, x: &Array2<f64>, labels: &[f64]) -> Result<f64> {
    let s = scorer.raw_scores(x)?;
    if labels.is_empty() {
        return Err(Error::DegenerateInput("no rows to evaluate".into()));
    }
    let hits = s
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| (s >= 0.0) == (y > 0.0))
        .count();
    Ok(hits as f64 / labels.len() as f64)
}
