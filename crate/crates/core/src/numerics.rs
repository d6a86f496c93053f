//! Scalar two-component Gaussian mixtures, dominant eigenvectors, and
//! empirical tail fractions.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Two-component scalar Gaussian mixture. Component 0 always has the smaller
/// mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gmm2 {
    pub weight0: f64,
    pub weight1: f64,
    pub mean0: f64,
    pub mean1: f64,
    pub var0: f64,
    pub var1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gmm2Fit {
    pub model: Gmm2,
    /// Log-likelihood after the initial parameters and after every EM step.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub var_floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-9,
        }
    }
}

fn log_normal(v: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + (v - mean) * (v - mean) / var)
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl Gmm2 {
    /// Per-component log joint densities `ln(w_k N(v; mu_k, var_k))`.
    fn log_joint(&self, v: f64) -> (f64, f64) {
        (
            self.weight0.ln() + log_normal(v, self.mean0, self.var0),
            self.weight1.ln() + log_normal(v, self.mean1, self.var1),
        )
    }

    pub fn log_likelihood(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .map(|&v| {
                let (a, b) = self.log_joint(v);
                log_sum_exp(a, b)
            })
            .sum()
    }

    /// Posterior probability that `v` came from component 0 (smaller mean).
    pub fn posterior0(&self, v: f64) -> f64 {
        let (a, b) = self.log_joint(v);
        // 1 / (1 + exp(b - a)), written to avoid overflow either way.
        let t = b - a;
        if t > 0.0 {
            let e = (-t).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + t.exp())
        }
    }
}

/// Probability of component 0 under `model`.
pub fn gmm2_posterior(model: &Gmm2, v: f64) -> f64 {
    model.posterior0(v)
}

/// Fits a two-component mixture by EM.
///
/// Values are sorted first, so the fit does not depend on input order. The
/// initial split is at the median: each half seeds one component. Variances
/// never drop below `1e-6` times the sample variance.
pub fn em_fit_gmm2(values: &[f64], opts: EmOptions) -> Result<Gmm2Fit> {
    let n = values.len();
    if n < 4 {
        return Err(Error::DegenerateInput(format!(
            "mixture fit needs at least 4 values, got {n}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite value in mixture fit input".into()));
    }
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let sample_var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
    if xs[0] == xs[n - 1] || sample_var <= 0.0 {
        return Err(Error::DegenerateInput("all values identical".into()));
    }
    let floor = 1e-6 * sample_var;

    let half = n / 2;
    let stats = |s: &[f64]| {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        let v = s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / s.len() as f64;
        (m, v.max(floor))
    };
    let (m0, v0) = stats(&xs[..half]);
    let (m1, v1) = stats(&xs[half..]);
    let mut model = Gmm2 {
        weight0: half as f64 / nf,
        weight1: (n - half) as f64 / nf,
        mean0: m0,
        mean1: m1,
        var0: v0,
        var1: v1,
    };

    let mut lls = vec![model.log_likelihood(&xs)];
    let mut resp = vec![0.0; n];
    let mut iterations = 0;
    while iterations < opts.max_iters {
        // E step
        for (r, &v) in resp.iter_mut().zip(&xs) {
            *r = model.posterior0(v);
        }
        // M step
        let s0: f64 = resp.iter().sum();
        let s1 = nf - s0;
        if s0 <= 0.0 || s1 <= 0.0 {
            break;
        }
        let mu0 = resp.iter().zip(&xs).map(|(r, v)| r * v).sum::<f64>() / s0;
        let mu1 = resp.iter().zip(&xs).map(|(r, v)| (1.0 - r) * v).sum::<f64>() / s1;
        let var0 = resp
            .iter()
            .zip(&xs)
            .map(|(r, v)| r * (v - mu0) * (v - mu0))
            .sum::<f64>()
            / s0;
        let var1 = resp
            .iter()
            .zip(&xs)
            .map(|(r, v)| (1.0 - r) * (v - mu1) * (v - mu1))
            .sum::<f64>()
            / s1;
        model = Gmm2 {
            weight0: s0 / nf,
            weight1: s1 / nf,
            mean0: mu0,
            mean1: mu1,
            var0: var0.max(floor),
            var1: var1.max(floor),
        };
        iterations += 1;
        let ll = model.log_likelihood(&xs);
        let prev = *lls.last().expect("non-empty");
        lls.push(ll);
        if ll - prev < opts.tol {
            break;
        }
    }
    if model.weight0 <= 0.0 || model.weight1 <= 0.0 {
        return Err(Error::DegenerateInput("a mixture component collapsed to zero weight".into()));
    }
    if model.mean0 > model.mean1 {
        model = Gmm2 {
            weight0: model.weight1,
            weight1: model.weight0,
            mean0: model.mean1,
            mean1: model.mean0,
            var0: model.var1,
            var1: model.var0,
        };
    }
    Ok(Gmm2Fit {
        model,
        log_likelihoods: lls,
        iterations,
        var_floor: floor,
    })
}

/// Dominant eigenpair of a symmetric PSD matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub vector: Array1<f64>,
    pub value: f64,
    pub iterations: usize,
}

const POWER_MAX_ITERS: usize = 10_000;
const POWER_REL_TOL: f64 = 1e-8;

/// Power iteration until `||G u - lambda u|| <= 1e-8 lambda`.
///
/// The returned vector has unit norm and its largest-magnitude entry is
/// positive.
pub fn top_eigvec(gram: &Array2<f64>) -> Result<EigenPair> {
    let (r, c) = gram.dim();
    if r != c {
        return Err(Error::Shape { expected: r, got: c });
    }
    if r == 0 {
        return Err(Error::DegenerateInput("empty matrix".into()));
    }
    let scale = gram.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::ZeroSpectrum);
    }
    let mut asym = 0.0f64;
    for i in 0..r {
        for j in (i + 1)..r {
            asym = asym.max((gram[[i, j]] - gram[[j, i]]).abs());
        }
    }
    if asym > 1e-9 * scale.max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }

    // Slightly tilted start so no exact eigenvector direction is orthogonal
    // to it by symmetry.
    let mut u = Array1::from_shape_fn(r, |i| 1.0 + (i as f64 + 1.0) / (7.0 * r as f64));
    u /= u.dot(&u).sqrt();
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < POWER_MAX_ITERS {
        let gu = gram.dot(&u);
        lambda = u.dot(&gu);
        residual = (&gu - &(&u * lambda)).dot(&(&gu - &(&u * lambda))).sqrt();
        if lambda > 0.0 && residual <= POWER_REL_TOL * lambda {
            break;
        }
        let norm = gu.dot(&gu).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroSpectrum);
        }
        u = gu / norm;
        iterations += 1;
    }
    if !(lambda > 0.0 && residual <= POWER_REL_TOL * lambda) {
        return Err(Error::NotConverged {
            residual,
            eigenvalue: lambda,
        });
    }
    let pivot = u
        .iter()
        .copied()
        .fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
    if pivot < 0.0 {
        u.mapv_inplace(|v| -v);
    }
    Ok(EigenPair {
        vector: u,
        value: lambda,
        iterations,
    })
}

/// Empirical upper-tail function `q(z) = #{samples >= z} / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailCurve {
    sorted: Vec<f64>,
}

impl TailCurve {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::DegenerateInput("tail curve needs samples".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Number of samples `>= z`.
    pub fn count_at_least(&self, z: f64) -> usize {
        self.sorted.len() - self.sorted.partition_point(|&s| s < z)
    }

    pub fn fraction(&self, z: f64) -> f64 {
        self.count_at_least(z) as f64 / self.sorted.len() as f64
    }
}

pub fn tail_fraction(curve: &TailCurve, z: f64) -> f64 {
    curve.fraction(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn em_recovers_separated_modes() {
        let mut rng = seed::rng(2024);
        let a = Normal::new(0.0, 0.1).unwrap();
        let b = Normal::new(2.0, 0.1).unwrap();
        let xs: Vec<f64> = (0..2000)
            .map(|i| if i % 2 == 0 { a.sample(&mut rng) } else { b.sample(&mut rng) })
            .collect();
        let fit = em_fit_gmm2(&xs, EmOptions::default()).unwrap();
        assert!(fit.model.mean0.abs() < 0.05);
        assert!((fit.model.mean1 - 2.0).abs() < 0.05);
        assert!((fit.model.weight0 - 0.5).abs() < 0.05);
    }

    #[test]
    fn em_point_masses() {
        let xs: Vec<f64> = (0..20).map(|i| if i % 4 == 0 { 3.0 } else { -1.0 }).collect();
        let fit = em_fit_gmm2(&xs, EmOptions::default()).unwrap();
        assert!((fit.model.mean0 + 1.0).abs() < 1e-9);
        assert!((fit.model.mean1 - 3.0).abs() < 1e-9);
        assert_eq!(fit.model.var0, fit.var_floor);
        assert_eq!(fit.model.var1, fit.var_floor);
    }

    #[test]
    fn em_log_likelihood_is_monotone() {
        let mut rng = seed::rng(5);
        let a = Normal::new(0.3, 0.5).unwrap();
        let b = Normal::new(1.1, 0.2).unwrap();
        let xs: Vec<f64> = (0..500)
            .map(|i| if i % 3 == 0 { a.sample(&mut rng) } else { b.sample(&mut rng) })
            .collect();
        let fit = em_fit_gmm2(&xs, EmOptions { max_iters: 200, tol: 0.0 }).unwrap();
        for w in fit.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} < {}", w[1], w[0]);
        }
    }

    #[test]
    fn em_rejects_degenerate_input() {
        assert!(matches!(
            em_fit_gmm2(&[1.0; 10], EmOptions::default()),
            Err(Error::DegenerateInput(_))
        ));
        assert!(em_fit_gmm2(&[1.0, 2.0, 3.0], EmOptions::default()).is_err());
    }

    #[test]
    fn posterior_cases() {
        let sep = Gmm2 {
            weight0: 0.5,
            weight1: 0.5,
            mean0: 0.0,
            mean1: 5.0,
            var0: 0.1,
            var1: 0.1,
        };
        assert!(gmm2_posterior(&sep, 0.0) > 0.99);
        assert!((gmm2_posterior(&sep, 2.5) - 0.5).abs() < 1e-12);
        // Far outside both modes the posterior must stay a probability.
        let p = gmm2_posterior(&sep, 1e6);
        assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn eig_diagonal() {
        let e = top_eigvec(&array![[3.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!((e.value - 3.0).abs() < 1e-9);
        assert!((e.vector[0] - 1.0).abs() < 1e-6);
        assert!(e.vector[1].abs() < 1e-6);
    }

    #[test]
    fn eig_homogeneity_and_sign() {
        let g = array![[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]];
        let a = top_eigvec(&g).unwrap();
        let b = top_eigvec(&(&g * 2.0)).unwrap();
        assert!((b.value - 2.0 * a.value).abs() < 1e-7 * a.value);
        for (x, y) in a.vector.iter().zip(b.vector.iter()) {
            assert!((x - y).abs() < 1e-6);
        }
        let pivot = a.vector.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        assert!(pivot > 0.0);
        let r = g.dot(&a.vector) - &a.vector * a.value;
        assert!(r.dot(&r).sqrt() <= 1e-8 * a.value);
    }

    /// Largest root of the characteristic polynomial of a symmetric 3x3
    /// matrix by the trigonometric cubic formula, eigenvector by cross
    /// product of two rows of `G - lambda I`.
    fn eig3_oracle(g: &Array2<f64>) -> (f64, [f64; 3]) {
        let tr = g[[0, 0]] + g[[1, 1]] + g[[2, 2]];
        let c1 = g[[0, 0]] * g[[1, 1]] + g[[0, 0]] * g[[2, 2]] + g[[1, 1]] * g[[2, 2]]
            - g[[0, 1]] * g[[0, 1]]
            - g[[0, 2]] * g[[0, 2]]
            - g[[1, 2]] * g[[1, 2]];
        let det = g[[0, 0]] * (g[[1, 1]] * g[[2, 2]] - g[[1, 2]] * g[[1, 2]])
            - g[[0, 1]] * (g[[0, 1]] * g[[2, 2]] - g[[1, 2]] * g[[0, 2]])
            + g[[0, 2]] * (g[[0, 1]] * g[[1, 2]] - g[[1, 1]] * g[[0, 2]]);
        // lambda = x + tr/3 turns l^3 - tr l^2 + c1 l - det into x^3 + p x + q.
        let p = c1 - tr * tr / 3.0;
        let q = -2.0 * tr.powi(3) / 27.0 + tr * c1 / 3.0 - det;
        let r = (-p / 3.0).sqrt();
        let arg = (-q / (2.0 * r.powi(3))).clamp(-1.0, 1.0);
        let lambda = 2.0 * r * (arg.acos() / 3.0).cos() + tr / 3.0;
        let row = |i: usize| [g[[i, 0]] - if i == 0 { lambda } else { 0.0 },
                              g[[i, 1]] - if i == 1 { lambda } else { 0.0 },
                              g[[i, 2]] - if i == 2 { lambda } else { 0.0 }];
        let cross = |a: [f64; 3], b: [f64; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
        let cands = [cross(row(0), row(1)), cross(row(0), row(2)), cross(row(1), row(2))];
        let mut v = cands
            .into_iter()
            .max_by(|a, b| {
                let na = a.iter().map(|x| x * x).sum::<f64>();
                let nb = b.iter().map(|x| x * x).sum::<f64>();
                na.total_cmp(&nb)
            })
            .unwrap();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        (lambda, v)
    }

    #[test]
    fn eig_matches_cubic_oracle() {
        let mut rng = seed::rng(99);
        let d = Normal::new(0.0, 1.0).unwrap();
        for _ in 0..50 {
            let a = Array2::from_shape_fn((3, 3), |_| d.sample(&mut rng));
            let g = a.dot(&a.t());
            let (lambda, v) = eig3_oracle(&g);
            let e = top_eigvec(&g).unwrap();
            assert!((e.value - lambda).abs() <= 1e-6 * lambda.max(1.0));
            for k in 0..3 {
                assert!((e.vector[k] - v[k]).abs() < 1e-6, "{:?} vs {:?}", e.vector, v);
            }
        }
    }

    #[test]
    fn eig_errors() {
        assert!(matches!(top_eigvec(&Array2::zeros((3, 3))), Err(Error::ZeroSpectrum)));
        assert!(matches!(
            top_eigvec(&array![[1.0, 2.0], [0.0, 1.0]]),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn tail_counts() {
        let c = TailCurve::new(&[0.1, 0.5, 0.9]).unwrap();
        assert_eq!(tail_fraction(&c, -1.0), 1.0);
        assert_eq!(tail_fraction(&c, 2.0), 0.0);
        assert!((tail_fraction(&c, 0.5) - 2.0 / 3.0).abs() < 1e-15);
        assert!(TailCurve::new(&[]).is_err());
    }

    proptest! {
        #[test]
        fn em_is_permutation_invariant(seed in 0u64..1000, n in 8usize..60) {
            let mut rng = seed::rng(seed);
            let d = Normal::new(0.0, 1.0).unwrap();
            let xs: Vec<f64> = (0..n).map(|i| d.sample(&mut rng) + if i % 2 == 0 { 3.0 } else { 0.0 }).collect();
            let mut ys = xs.clone();
            ys.shuffle(&mut rng);
            let a = em_fit_gmm2(&xs, EmOptions::default()).unwrap();
            let b = em_fit_gmm2(&ys, EmOptions::default()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn posterior_is_normalized(v in -50.0f64..50.0, w in 0.05f64..0.95, m1 in 0.0f64..5.0) {
            let g = Gmm2 { weight0: w, weight1: 1.0 - w, mean0: -1.0, mean1: m1, var0: 0.7, var1: 1.3 };
            let p0 = gmm2_posterior(&g, v);
            let (a, b) = g.log_joint(v);
            let p1 = 1.0 / (1.0 + (a - b).exp());
            prop_assert!((0.0..=1.0).contains(&p0));
            prop_assert!((p0 + p1 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn tail_fraction_steps_only_at_samples(xs in proptest::collection::vec(-5.0f64..5.0, 1..30), z in -6.0f64..6.0) {
            let c = TailCurve::new(&xs).unwrap();
            // Moving z without crossing a sample leaves q unchanged.
            let next = c.sorted().iter().copied().find(|&s| s > z);
            let q = c.fraction(z);
            if let Some(s) = next {
                let mid = if s - z > 1e-9 { z + (s - z) / 2.0 } else { z };
                let prev_sample = c.sorted().iter().copied().filter(|&t| t <= z).next_back();
                if prev_sample.is_none_or(|p| p < z) {
                    prop_assert_eq!(c.fraction(mid), q);
                }
            } else {
                prop_assert_eq!(q, 0.0);
            }
            // Right-continuity from above and monotonicity.
            prop_assert!(c.fraction(z + 1.0) <= q);
        }
    }
}
