use bagprior::ccpe::{run_ccpe, run_ccpe_detailed, run_eccpe, run_eccpe_with_pairs, run_pair, CcpeConfig};
use bagprior::classify::{estimate_test_prior, train_mcm, train_umssc, McmObjective, TEST_BAG};
use bagprior::confident::{assign_pseudo_labels, select, SelectorConfig, SelectorKind};
use bagprior::data::{even_priors, gaussian_pool, gaussian_test_pool, sample_bags, BagCollection, BagSpec};
use bagprior::prior_est::EstimatorConfig;
use bagprior::scorer::{accuracy, train_binary, train_with_objective, ScorerConfig};

fn synthetic(m: usize, per_bag: usize, sep: f64, seed: u64) -> BagCollection {
    let priors = even_priors(m, 0.1, 0.9).unwrap();
    let spec = BagSpec::uniform(priors, m * per_bag, (m - 1, 0), seed).unwrap();
    let half = m * per_bag / 2 + m;
    let pool = gaussian_pool(half, half, 2, sep, seed + 7000).unwrap();
    sample_bags(&pool, &spec).unwrap()
}

#[test]
fn confident_sets_are_purer_than_raw_sides() {
    let kinds = [SelectorKind::Loss, SelectorKind::ConfidentJoint, SelectorKind::Alignment];
    for seed in 0..20u64 {
        let spec = BagSpec::uniform(vec![0.8, 0.2], 800, (0, 1), seed).unwrap();
        let pool = gaussian_pool(420, 420, 2, 2.5, seed + 100).unwrap();
        let bags = sample_bags(&pool, &spec).unwrap();
        let hidden = bags.hidden_labels().unwrap();
        let set = assign_pseudo_labels(0, bags.bag(0), 1, bags.bag(1)).unwrap();
        let truth: Vec<f64> = hidden[0].iter().chain(&hidden[1]).copied().collect();
        let warm_cfg = ScorerConfig {
            epochs: 10,
            seed,
            ..ScorerConfig::default()
        };
        let warm = train_binary(&warm_cfg, set.features(), set.pseudo_labels(), None).unwrap();
        let precision = |idx: &[usize], label: f64| idx.iter().filter(|&&i| truth[i] == label).count() as f64 / idx.len() as f64;
        let raw_pos: Vec<usize> = (0..set.len()).filter(|&i| set.pseudo_labels()[i] > 0.0).collect();
        let raw_neg: Vec<usize> = (0..set.len()).filter(|&i| set.pseudo_labels()[i] < 0.0).collect();
        for kind in kinds {
            let cfg = SelectorConfig {
                kind,
                ..SelectorConfig::default()
            };
            let c = select(&cfg, &warm, &set, &warm_cfg).unwrap();
            assert!(precision(&c.positive_idx, 1.0) >= precision(&raw_pos, 1.0), "{kind:?} seed {seed}");
            assert!(precision(&c.negative_idx, -1.0) >= precision(&raw_neg, -1.0), "{kind:?} seed {seed}");
        }
    }
}

#[test]
fn single_declared_pair_reduces_to_ccpe() {
    let bags = synthetic(5, 500, 4.0, 3);
    let cfg = CcpeConfig {
        pair_selection_count: 1,
        ..CcpeConfig::default()
    };
    let a = run_ccpe(&bags, &cfg).unwrap();
    let b = run_eccpe_with_pairs(&bags, &cfg, &[bags.pair()]).unwrap();
    assert_eq!(a.estimates, b.estimates);
    assert!(b.declared_included);
}

#[test]
fn prior_vector_invariants() {
    let bags = synthetic(6, 500, 4.0, 5);
    let v = run_eccpe(&bags, &CcpeConfig::default()).unwrap();
    assert_eq!(v.len(), 6);
    for (e, p) in v.estimates.iter().zip(&v.provenance) {
        assert!((0.0..=1.0).contains(&e.value));
        assert!(!p.is_empty());
    }
    let (alpha, beta) = bags.pair();
    assert!(v.estimates[alpha].value > v.estimates[beta].value);
}

fn std(v: &[f64]) -> f64 {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[test]
fn averaging_shrinks_spread_across_seeds() {
    let m = 6;
    let gamma = 4;
    let mut finals = vec![vec![]; m];
    let mut per_rank = vec![vec![vec![]; m]; gamma];
    for seed in 0..10u64 {
        let bags = synthetic(m, 500, 3.0, 40 + seed);
        let cfg = CcpeConfig {
            seed,
            ..CcpeConfig::default()
        };
        let v = run_eccpe(&bags, &cfg).unwrap();
        assert!(v.skipped_pairs.is_empty());
        for j in 0..m {
            finals[j].push(v.estimates[j].value);
        }
        for (k, &p) in v.provenance[0].iter().enumerate() {
            let run = run_pair(&bags, p, &cfg).unwrap();
            for j in 0..m {
                per_rank[k][j].push(run.estimates[j].value);
            }
        }
    }
    let final_spread: f64 = finals.iter().map(|v| std(v)).sum::<f64>() / m as f64;
    let pair_spread: f64 = per_rank.iter().flatten().map(|v| std(v)).sum::<f64>() / (m * gamma) as f64;
    assert!(final_spread <= pair_spread, "{final_spread} vs {pair_spread}");
}

#[test]
fn clean_two_bag_umssc_separates() {
    let spec = BagSpec::uniform(vec![1.0, 0.0], 2000, (0, 1), 1).unwrap();
    let pool = gaussian_pool(1000, 1000, 2, 6.0, 2).unwrap();
    let bags = sample_bags(&pool, &spec).unwrap();
    let test = gaussian_test_pool(2000, 0.5, 2, 6.0, 3).unwrap();
    let cfg = ScorerConfig {
        epochs: 20,
        ..ScorerConfig::default()
    };
    let (f, t) = train_umssc(&bags, &[1.0, 0.0], 0.5, &cfg).unwrap();
    assert_eq!(t.c, 0.0);
    assert!(accuracy(&f, test.features(), test.labels()).unwrap() >= 0.98);
}

#[test]
fn clean_pair_mcm_matches_supervised() {
    let spec = BagSpec::uniform(vec![1.0, 0.0], 4000, (0, 1), 8).unwrap();
    let pool = gaussian_pool(2000, 2000, 2, 2.0, 9).unwrap();
    let bags = sample_bags(&pool, &spec).unwrap();
    let test = gaussian_test_pool(10000, 0.5, 2, 2.0, 10).unwrap();
    let cfg = ScorerConfig {
        epochs: 30,
        batch_size: 128,
        ..ScorerConfig::default()
    };
    let (f, pairing) = train_mcm(&bags, &[1.0, 0.0], 0.5, &cfg).unwrap();
    assert_eq!(pairing.pairs, vec![(0, 1)]);
    let sup = train_binary(&cfg, pool.features(), pool.labels(), None).unwrap();
    let a = accuracy(&f, test.features(), test.labels()).unwrap();
    let b = accuracy(&sup, test.features(), test.labels()).unwrap();
    assert!((a - b).abs() <= 0.005, "mcm {a} supervised {b}");
}

#[test]
fn mcm_weight_scale_is_absorbed_by_learning_rate() {
    let bags = synthetic(4, 300, 3.0, 12);
    let (x, ids) = bags.stacked();
    let priors = [0.1, 0.3666, 0.6333, 0.9];
    let pairs = [(3, 0), (2, 1)];
    let k = 8.0;
    let obj = |weights| McmObjective {
        bag_ids: &ids,
        pairs: &pairs,
        weights,
        priors: &priors,
        pi_d: 0.5,
        corrected: true,
    };
    let cfg = ScorerConfig {
        epochs: 5,
        learning_rate: 0.08,
        ..ScorerConfig::default()
    };
    let a = train_with_objective(&cfg, &x, &obj(&[0.7, 0.3])).unwrap();
    let cfg_k = ScorerConfig {
        learning_rate: 0.08 / k,
        ..cfg
    };
    let b = train_with_objective(&cfg_k, &x, &obj(&[0.7 * k, 0.3 * k])).unwrap();
    for (p, q) in a.params().iter().zip(b.params()) {
        assert!((p - q).abs() < 1e-9, "{p} vs {q}");
    }
}

#[test]
fn test_prior_estimation() {
    let bags = synthetic(4, 1500, 4.0, 30);
    let cfg = CcpeConfig::default();
    let (_, run) = run_ccpe_detailed(&bags, &cfg).unwrap();
    let test = gaussian_test_pool(3000, 0.49, 2, 4.0, 31).unwrap();
    let est = EstimatorConfig::default();
    let e = estimate_test_prior(test.features(), &run.set, &run.confident, &est, 5).unwrap();
    assert_eq!(e.bag, TEST_BAG);
    assert!((e.value - 0.49).abs() <= 0.05, "{e:?}");
    let pure = run.confident.positives(&run.set);
    let e = estimate_test_prior(&pure, &run.set, &run.confident, &est, 6).unwrap();
    assert!(e.value >= 0.95, "{e:?}");
}
