//! Labeled pools, binary tasks, and bag synthesis.
//!
//! A [`BagCollection`] is the only thing estimators ever see. Hidden labels
//! ride along for evaluation and are never read by selection or estimation
//! code.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Binary-labeled feature matrix. Labels are stored as `+1.0` / `-1.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPool {
    features: Array2<f64>,
    labels: Vec<f64>,
    name: String,
}

impl LabeledPool {
    pub fn new(features: Array2<f64>, labels: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Shape {
                expected: features.nrows(),
                got: labels.len(),
            });
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidSpec("pool has zero feature columns".into()));
        }
        if let Some(row) = labels.iter().position(|&l| l != 1.0 && l != -1.0) {
            return Err(Error::Parse {
                row: row + 1,
                msg: format!("label {} is not +1 or -1", labels[row]),
            });
        }
        Ok(Self {
            features,
            labels,
            name: name.into(),
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Fraction of `+1` rows; the test prior when this pool is a test set.
    pub fn positive_fraction(&self) -> f64 {
        let pos = self.labels.iter().filter(|&&l| l > 0.0).count();
        pos as f64 / self.labels.len().max(1) as f64
    }

    fn indices_of(&self, label: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }
}

/// Multiclass pool as ingested from an image archive.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassPool {
    pub features: Array2<f64>,
    pub classes: Vec<u32>,
    pub name: String,
}

/// Relabels `pool` into a binary task: classes in `positive_classes` become
/// `+1`, everything else `-1`.
pub fn make_binary_task(
    pool: &MulticlassPool,
    positive_classes: &BTreeSet<u32>,
) -> Result<LabeledPool> {
    let present: BTreeSet<u32> = pool.classes.iter().copied().collect();
    let hit = present.intersection(positive_classes).count();
    if positive_classes.is_empty() || hit == 0 {
        return Err(Error::InvalidPartition(
            "positive class set selects no rows".into(),
        ));
    }
    if present.is_subset(positive_classes) {
        return Err(Error::InvalidPartition(
            "positive class set covers every class in the pool".into(),
        ));
    }
    let labels = pool
        .classes
        .iter()
        .map(|c| if positive_classes.contains(c) { 1.0 } else { -1.0 })
        .collect();
    LabeledPool::new(pool.features.clone(), labels, pool.name.clone())
}

/// `m` evenly spaced priors from `lo` to `hi` inclusive.
pub fn even_priors(m: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(Error::InvalidSpec(format!("need m >= 2 bags, got {m}")));
    }
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::InvalidSpec(format!(
            "prior range must satisfy 0 <= lo < hi <= 1, got [{lo}, {hi}]"
        )));
    }
    let step = (hi - lo) / (m - 1) as f64;
    Ok((0..m)
        .map(|j| if j == m - 1 { hi } else { lo + step * j as f64 })
        .collect())
}

/// Recipe for a bag collection. Bag indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagSpec {
    pub priors: Vec<f64>,
    pub sizes: Vec<usize>,
    /// `(alpha, beta)` with the declared relation `priors[alpha] > priors[beta]`.
    pub pair: (usize, usize),
    pub seed: u64,
}

impl BagSpec {
    pub fn new(priors: Vec<f64>, sizes: Vec<usize>, pair: (usize, usize), seed: u64) -> Result<Self> {
        let spec = Self {
            priors,
            sizes,
            pair,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Uniform sizes summing to `total` (remainder spread over the first bags).
    pub fn uniform(priors: Vec<f64>, total: usize, pair: (usize, usize), seed: u64) -> Result<Self> {
        let m = priors.len().max(1);
        let sizes = (0..m)
            .map(|j| total / m + usize::from(j < total % m))
            .collect();
        Self::new(priors, sizes, pair, seed)
    }

    pub fn m(&self) -> usize {
        self.priors.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.priors.len();
        if m < 2 {
            return Err(Error::InvalidSpec(format!("need m >= 2 bags, got {m}")));
        }
        if self.sizes.len() != m {
            return Err(Error::Shape {
                expected: m,
                got: self.sizes.len(),
            });
        }
        if let Some(p) = self.priors.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidSpec(format!("prior {p} outside [0, 1]")));
        }
        if self.sizes.contains(&0) {
            return Err(Error::InvalidSpec("bag sizes must be >= 1".into()));
        }
        let (a, b) = self.pair;
        if a >= m || b >= m || a == b {
            return Err(Error::InvalidSpec(format!(
                "declared pair ({a}, {b}) is not two distinct bags out of {m}"
            )));
        }
        if self.priors[a] <= self.priors[b] {
            return Err(Error::InvalidSpec(format!(
                "declared relation needs prior[{a}] > prior[{b}], got {} <= {}",
                self.priors[a], self.priors[b]
            )));
        }
        Ok(())
    }
}

/// Number of positive rows in a bag of size `n` with prior `prior`
/// (nearest integer, ties rounded up).
pub fn positive_count(prior: f64, n: usize) -> usize {
    ((prior * n as f64 + 0.5).floor() as usize).min(n)
}

/// The `m` unlabeled bags plus the declared ordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BagCollection {
    bags: Vec<Array2<f64>>,
    hidden_labels: Option<Vec<Vec<f64>>>,
    pair: (usize, usize),
    rho: Vec<f64>,
}

impl BagCollection {
    pub fn new(bags: Vec<Array2<f64>>, pair: (usize, usize)) -> Result<Self> {
        let m = bags.len();
        if m < 2 {
            return Err(Error::InvalidSpec(format!("need m >= 2 bags, got {m}")));
        }
        if pair.0 >= m || pair.1 >= m || pair.0 == pair.1 {
            return Err(Error::InvalidSpec(format!(
                "declared pair {pair:?} invalid for {m} bags"
            )));
        }
        if let Some(j) = bags.iter().position(|b| b.nrows() == 0) {
            return Err(Error::EmptyBag(j));
        }
        let d = bags[0].ncols();
        if let Some(b) = bags.iter().find(|b| b.ncols() != d) {
            return Err(Error::Shape {
                expected: d,
                got: b.ncols(),
            });
        }
        let total: usize = bags.iter().map(|b| b.nrows()).sum();
        let rho = bags
            .iter()
            .map(|b| b.nrows() as f64 / total as f64)
            .collect();
        Ok(Self {
            bags,
            hidden_labels: None,
            pair,
            rho,
        })
    }

    pub fn with_hidden_labels(mut self, labels: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != self.bags.len() {
            return Err(Error::Shape {
                expected: self.bags.len(),
                got: labels.len(),
            });
        }
        for (bag, lab) in self.bags.iter().zip(&labels) {
            if bag.nrows() != lab.len() {
                return Err(Error::Shape {
                    expected: bag.nrows(),
                    got: lab.len(),
                });
            }
        }
        self.hidden_labels = Some(labels);
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.bags.len()
    }

    pub fn bag(&self, j: usize) -> &Array2<f64> {
        &self.bags[j]
    }

    pub fn bags(&self) -> &[Array2<f64>] {
        &self.bags
    }

    pub fn pair(&self) -> (usize, usize) {
        self.pair
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.bags.iter().map(|b| b.nrows()).collect()
    }

    pub fn dim(&self) -> usize {
        self.bags[0].ncols()
    }

    /// Evaluation-only access to the labels the bags were drawn with.
    pub fn hidden_labels(&self) -> Option<&[Vec<f64>]> {
        self.hidden_labels.as_deref()
    }

    /// Empirical positive fraction per bag, when hidden labels are present.
    pub fn empirical_priors(&self) -> Option<Vec<f64>> {
        self.hidden_labels.as_ref().map(|ls| {
            ls.iter()
                .map(|l| l.iter().filter(|&&y| y > 0.0).count() as f64 / l.len() as f64)
                .collect()
        })
    }

    /// All rows stacked bag after bag, with the bag id of every row.
    pub fn stacked(&self) -> (Array2<f64>, Vec<usize>) {
        let views: Vec<ArrayView2<f64>> = self.bags.iter().map(|b| b.view()).collect();
        let x = ndarray::concatenate(Axis(0), &views).expect("bags share a column count");
        let ids = self
            .bags
            .iter()
            .enumerate()
            .flat_map(|(j, b)| std::iter::repeat_n(j, b.nrows()))
            .collect();
        (x, ids)
    }
}

/// Draws bags from `pool` following `spec`.
///
/// Rows inside one bag are distinct pool rows; different bags may reuse rows.
/// Each bag has its own random stream, so bag `j` depends only on
/// `(spec.seed, j)` and the pool.
pub fn sample_bags(pool: &LabeledPool, spec: &BagSpec) -> Result<BagCollection> {
    spec.validate()?;
    let pos = pool.indices_of(1.0);
    let neg = pool.indices_of(-1.0);
    let mut bags = Vec::with_capacity(spec.m());
    let mut hidden = Vec::with_capacity(spec.m());
    for (j, (&prior, &n)) in spec.priors.iter().zip(&spec.sizes).enumerate() {
        let n_pos = positive_count(prior, n);
        let n_neg = n - n_pos;
        if n_pos > pos.len() {
            return Err(Error::Capacity {
                class: "positive",
                needed: n_pos,
                available: pos.len(),
            });
        }
        if n_neg > neg.len() {
            return Err(Error::Capacity {
                class: "negative",
                needed: n_neg,
                available: neg.len(),
            });
        }
        let mut rng = seed::rng(seed::derive(spec.seed, &[j as u64]));
        let mut rows: Vec<usize> = index::sample(&mut rng, pos.len(), n_pos)
            .into_iter()
            .map(|i| pos[i])
            .chain(
                index::sample(&mut rng, neg.len(), n_neg)
                    .into_iter()
                    .map(|i| neg[i]),
            )
            .collect();
        rows.shuffle(&mut rng);
        bags.push(pool.features().select(Axis(0), &rows));
        hidden.push(rows.iter().map(|&r| pool.labels()[r]).collect());
    }
    BagCollection::new(bags, spec.pair)?.with_hidden_labels(hidden)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizeShift {
    /// Rescale `ceil(m/2)` randomly chosen bags to `ceil(tau * n_j)`.
    HalfScaled,
    /// Redraw all sizes uniformly over compositions of the total.
    RandomSimplex,
}

pub fn apply_size_shift(spec: &BagSpec, tau: f64, mode: SizeShift, seed: u64) -> Result<BagSpec> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidSpec(format!("tau {tau} outside [0, 1]")));
    }
    let m = spec.m();
    let mut rng = seed::rng(seed);
    let mut out = spec.clone();
    match mode {
        SizeShift::HalfScaled => {
            let k = m.div_ceil(2);
            for j in index::sample(&mut rng, m, k) {
                out.sizes[j] = ((tau * spec.sizes[j] as f64).ceil() as usize).max(1);
            }
        }
        SizeShift::RandomSimplex => {
            let total: usize = spec.sizes.iter().sum();
            if total < m {
                return Err(Error::InvalidSpec(format!(
                    "total size {total} cannot cover {m} non-empty bags"
                )));
            }
            // Stars and bars: m - 1 distinct cuts in 1..total.
            let mut cuts: Vec<usize> = index::sample(&mut rng, total - 1, m - 1)
                .into_iter()
                .map(|c| c + 1)
                .collect();
            cuts.sort_unstable();
            let mut prev = 0;
            for (j, &c) in cuts.iter().chain(std::iter::once(&total)).enumerate() {
                out.sizes[j] = c - prev;
                prev = c;
            }
        }
    }
    Ok(out)
}

/// Two isotropic unit-variance Gaussian classes whose means are `separation`
/// apart along the all-ones direction.
pub fn gaussian_pool(n_pos: usize, n_neg: usize, dim: usize, separation: f64, seed: u64) -> Result<LabeledPool> {
    if dim == 0 {
        return Err(Error::InvalidSpec("dimension must be >= 1".into()));
    }
    let mut rng = seed::rng(seed);
    let half = separation / 2.0 / (dim as f64).sqrt();
    let n = n_pos + n_neg;
    let mut labels: Vec<f64> = (0..n).map(|i| if i < n_pos { 1.0 } else { -1.0 }).collect();
    labels.shuffle(&mut rng);
    let mut x = Array2::zeros((n, dim));
    for (mut row, &y) in x.rows_mut().into_iter().zip(&labels) {
        for v in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = z + y * half;
        }
    }
    LabeledPool::new(x, labels, "gaussian")
}

/// A labeled test pool drawn from the same Gaussians with positive fraction
/// `prior` (rounded to the nearest row).
pub fn gaussian_test_pool(n: usize, prior: f64, dim: usize, separation: f64, seed: u64) -> Result<LabeledPool> {
    let n_pos = positive_count(prior, n);
    let mut pool = gaussian_pool(n_pos, n - n_pos, dim, separation, seed)?;
    pool.name = "gaussian-test".into();
    Ok(pool)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "kebab-case")]
pub enum PoolSource {
    Csv {
        path: PathBuf,
    },
    IdxImage {
        images: PathBuf,
        labels: PathBuf,
        positive_classes: BTreeSet<u32>,
    },
}

pub fn load_pool(source: &PoolSource) -> Result<LabeledPool> {
    match source {
        PoolSource::Csv { path } => load_csv_pool(path),
        PoolSource::IdxImage {
            images,
            labels,
            positive_classes,
        } => make_binary_task(&load_idx_pool(images, labels)?, positive_classes),
    }
}

/// Reads a `label,f1,...,fd` CSV. Row numbers in errors count data rows from 1.
pub fn load_csv_pool(path: &Path) -> Result<LabeledPool> {
    let file = File::open(path)?;
    read_csv_pool(file, &path.display().to_string())
}

pub fn read_csv_pool<R: Read>(reader: R, name: &str) -> Result<LabeledPool> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            msg: e.to_string(),
        })?
        .clone();
    if header.len() < 2 || header.get(0).map(str::trim) != Some("label") {
        return Err(Error::Parse {
            row: 0,
            msg: "header must be `label,f1,...,fd`".into(),
        });
    }
    let d = header.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        if rec.len() != d + 1 {
            return Err(Error::Parse {
                row,
                msg: format!("expected {} fields, found {}", d + 1, rec.len()),
            });
        }
        let label = match rec[0].trim() {
            "+1" | "1" => 1.0,
            "-1" => -1.0,
            other => {
                return Err(Error::Parse {
                    row,
                    msg: format!("label `{other}` is not +1 or -1"),
                })
            }
        };
        labels.push(label);
        for field in rec.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row,
                msg: format!("`{field}` is not a number"),
            })?;
            data.push(v);
        }
    }
    let n = labels.len();
    let x = Array2::from_shape_vec((n, d), data).expect("row lengths checked");
    LabeledPool::new(x, labels, name)
}

/// Writes `label,f1,...,fd` with shortest round-trip float formatting.
pub fn write_csv<W: Write>(mut w: W, features: &Array2<f64>, labels: Option<&[f64]>) -> Result<()> {
    let d = features.ncols();
    let mut header = String::from("label");
    for k in 1..=d {
        header.push_str(&format!(",f{k}"));
    }
    writeln!(w, "{header}")?;
    for (i, row) in features.rows().into_iter().enumerate() {
        let mut line = match labels {
            Some(l) if l[i] > 0.0 => String::from("+1"),
            Some(_) => String::from("-1"),
            None => String::new(),
        };
        for v in row {
            line.push(',');
            line.push_str(&format!("{v}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            row: 0,
            msg: "truncated idx header".into(),
        })
}

/// Reads an IDX image/label file pair; pixels are scaled to `[0, 1]`.
pub fn load_idx_pool(images: &Path, labels: &Path) -> Result<MulticlassPool> {
    let mut img = Vec::new();
    BufReader::new(File::open(images)?).read_to_end(&mut img)?;
    let mut lab = Vec::new();
    BufReader::new(File::open(labels)?).read_to_end(&mut lab)?;
    parse_idx(&img, &lab, &images.display().to_string())
}

pub fn parse_idx(img: &[u8], lab: &[u8], name: &str) -> Result<MulticlassPool> {
    let magic = read_u32_be(img, 0)?;
    if magic != IDX_IMAGES {
        return Err(Error::Parse {
            row: 0,
            msg: format!("image magic {magic:#010x}, expected {IDX_IMAGES:#010x}"),
        });
    }
    let n = read_u32_be(img, 4)? as usize;
    let rows = read_u32_be(img, 8)? as usize;
    let cols = read_u32_be(img, 12)? as usize;
    let d = rows * cols;
    let body = &img[16..];
    if body.len() != n * d {
        return Err(Error::Parse {
            row: 0,
            msg: format!("image payload has {} bytes, header implies {}", body.len(), n * d),
        });
    }
    let magic = read_u32_be(lab, 0)?;
    if magic != IDX_LABELS {
        return Err(Error::Parse {
            row: 0,
            msg: format!("label magic {magic:#010x}, expected {IDX_LABELS:#010x}"),
        });
    }
    let n_lab = read_u32_be(lab, 4)? as usize;
    if n_lab != n || lab.len() != 8 + n {
        return Err(Error::Parse {
            row: 0,
            msg: format!("{n} images but {n_lab} labels"),
        });
    }
    let features = Array2::from_shape_fn((n, d), |(i, k)| body[i * d + k] as f64 / 255.0);
    let classes = lab[8..].iter().map(|&c| c as u32).collect();
    Ok(MulticlassPool {
        features,
        classes,
        name: name.into(),
    })
}

/// Encodes an IDX image/label pair (pixels already in `0..=255`).
pub fn encode_idx(pixels: &[u8], n: usize, rows: usize, cols: usize, classes: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::with_capacity(16 + pixels.len());
    img.extend_from_slice(&IDX_IMAGES.to_be_bytes());
    for v in [n, rows, cols] {
        img.extend_from_slice(&(v as u32).to_be_bytes());
    }
    img.extend_from_slice(pixels);
    let mut lab = Vec::with_capacity(8 + classes.len());
    lab.extend_from_slice(&IDX_LABELS.to_be_bytes());
    lab.extend_from_slice(&(n as u32).to_be_bytes());
    lab.extend_from_slice(classes);
    (img, lab)
}
