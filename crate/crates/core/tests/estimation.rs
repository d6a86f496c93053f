use bagprior::confident::{assign_pseudo_labels, ConfidentSets};
use bagprior::data::{gaussian_pool, LabeledPool};
use bagprior::prior_est::{
    estimate_from_references, estimate_rempe, estimate_standard, EstimatorConfig, EstimatorKind,
};
use bagprior::seed;
use ndarray::{concatenate, s, Array2, Axis};
use rand_distr::{Distribution, Normal};

fn rows_with(pool: &LabeledPool, label: f64) -> Array2<f64> {
    let idx: Vec<usize> = (0..pool.len()).filter(|&i| pool.labels()[i] == label).collect();
    pool.features().select(Axis(0), &idx)
}

fn mix(pos: &Array2<f64>, neg: &Array2<f64>, n_pos: usize, n_neg: usize) -> Array2<f64> {
    concatenate![Axis(0), pos.slice(s![..n_pos, ..]), neg.slice(s![..n_neg, ..])]
}

#[test]
fn standard_recovers_half_prior_with_ideal_references() {
    let pool = gaussian_pool(3000, 3000, 2, 4.0, 11).unwrap();
    let (pos, neg) = (rows_with(&pool, 1.0), rows_with(&pool, -1.0));
    let refs_p = pos.slice(s![..1500, ..]).to_owned();
    let refs_n = neg.slice(s![..1500, ..]).to_owned();
    let bag = mix(&pos.slice(s![1500.., ..]).to_owned(), &neg.slice(s![1500.., ..]).to_owned(), 1000, 1000);
    let cfg = EstimatorConfig::default();
    let e = estimate_from_references(0, &bag, &refs_p, &refs_n, &cfg, 3, EstimatorKind::Standard).unwrap();
    assert!((e.value - 0.5).abs() < 0.05, "{e:?}");
    for v in [Some(e.value), e.side1, e.side2].into_iter().flatten() {
        assert!((0.0..=1.0).contains(&v));
    }
}

/// Positives sit inside the support of a wide negative class, so the
/// negative distribution contains a positive-like component.
fn nested_rows(n: usize, positive: bool, rng: &mut impl rand::Rng) -> Array2<f64> {
    let (mean, sd) = if positive { (1.5, 0.5) } else { (0.0, 2.0) };
    let d = Normal::new(0.0, sd).unwrap();
    Array2::from_shape_fn((n, 2), |(_, c)| d.sample(rng) + if c == 0 { mean } else { 0.0 })
}

#[test]
fn regrouping_helps_without_irreducibility() {
    let (mut err_std, mut err_re) = (0.0, 0.0);
    let prior = 0.4;
    for s in 0..20u64 {
        let mut rng = seed::rng(seed::derive(500, &[s]));
        let ref_p = nested_rows(800, true, &mut rng);
        let ref_n = nested_rows(800, false, &mut rng);
        let bag = concatenate![
            Axis(0),
            nested_rows(400, true, &mut rng),
            nested_rows(600, false, &mut rng)
        ];
        let set = assign_pseudo_labels(0, &ref_p, 1, &ref_n).unwrap();
        let raw = ConfidentSets::raw(&set);
        let cfg = EstimatorConfig {
            kind: EstimatorKind::Rempe,
            ..EstimatorConfig::default()
        };
        let std = estimate_standard(0, &bag, &raw, &set, &cfg, s).unwrap();
        let re = estimate_rempe(0, &bag, &raw, &set, &cfg, s).unwrap();
        err_std += (std.value - prior).abs();
        err_re += (re.value - prior).abs();
    }
    assert!(err_re < err_std, "rempe {} vs standard {}", err_re / 20.0, err_std / 20.0);
}

#[test]
fn tiny_regroup_fraction_matches_standard() {
    let pool = gaussian_pool(2500, 2500, 2, 4.0, 21).unwrap();
    let (pos, neg) = (rows_with(&pool, 1.0), rows_with(&pool, -1.0));
    let set = assign_pseudo_labels(
        0,
        &pos.slice(s![..1000, ..]).to_owned(),
        1,
        &neg.slice(s![..1000, ..]).to_owned(),
    )
    .unwrap();
    let raw = ConfidentSets::raw(&set);
    let bag = mix(&pos.slice(s![1000.., ..]).to_owned(), &neg.slice(s![1000.., ..]).to_owned(), 700, 1300);
    let cfg = EstimatorConfig {
        kind: EstimatorKind::Rempe,
        regroup_p: 1e-6,
        ..EstimatorConfig::default()
    };
    let std = estimate_standard(0, &bag, &raw, &set, &cfg, 9).unwrap();
    let re = estimate_rempe(0, &bag, &raw, &set, &cfg, 9).unwrap();
    assert!((std.value - re.value).abs() < 0.01, "{} vs {}", std.value, re.value);
}
