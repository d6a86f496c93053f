use std::fs;
use std::path::Path;
use std::process::Command;

use bagprior_cli::commands::{cmd_ablate, cmd_estimate, cmd_eval, cmd_report, cmd_sweep, cmd_synth, cmd_train};
use bagprior_cli::config::ExperimentConfig;
use bagprior_cli::pipeline::Variant;
use bagprior_cli::report::{read_csv, EstimationRow, RepeatRow, SweepRow};

fn small(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        name: "small".into(),
        seed: 21,
        repeats: 3,
        output: dir.to_path_buf(),
        ..ExperimentConfig::default()
    };
    cfg.bags.m = 5;
    cfg.bags.bag_size = 300;
    cfg.ccpe.warmup.epochs = 3;
    cfg.training.epochs = 3;
    if let bagprior_cli::config::DatasetSpec::Gaussian { test_size, .. } = &mut cfg.dataset {
        *test_size = 500;
    }
    cfg
}

#[test]
fn config_echo_parses_back() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path());
    let r = cmd_estimate(&cfg).unwrap();
    let echoed = ExperimentConfig::load(&r.dir.join("config.toml")).unwrap();
    assert_eq!(echoed, cfg);
    assert_eq!(echoed.ccpe.pair_selection_count, 4);
}

#[test]
fn report_recomputes_mae_and_catches_edits() {
    let tmp = tempfile::tempdir().unwrap();
    let r = cmd_estimate(&small(tmp.path())).unwrap();
    let text = cmd_report(&r.dir).unwrap();
    assert!(text.contains("repeats:"), "{text}");

    let path = r.dir.join("estimation.csv");
    let mut rows: Vec<EstimationRow> = read_csv(&path).unwrap();
    rows[0].abs_error += 0.1;
    bagprior_cli::report::write_csv(&path, &rows).unwrap();
    assert!(cmd_report(&r.dir).is_err());
}

#[test]
fn each_row_seed_regenerates_the_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(&tmp.path().join("all"));
    let all = cmd_train(&cfg).unwrap();
    let row = &all.rows[2];
    let single = ExperimentConfig {
        seed: row.seed,
        repeats: 1,
        output: tmp.path().join("one"),
        ..cfg
    };
    let one = cmd_train(&single).unwrap();
    assert_eq!(one.rows[0].seed, row.seed);
    assert_eq!(one.rows[0].mae_x100, row.mae_x100);
    assert_eq!(one.rows[0].accuracy, row.accuracy);
    let theirs: Vec<_> = all.estimation.iter().filter(|e| e.repeat == 2).map(|e| e.estimated_prior).collect();
    let mine: Vec<_> = one.estimation.iter().map(|e| e.estimated_prior).collect();
    assert_eq!(mine, theirs);
}

#[test]
fn synth_writes_bags_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path());
    let m = cmd_synth(&cfg).unwrap();
    assert_eq!(m.files.len(), 5);
    assert_eq!(m.pair, (5, 1));
    assert!(m.priors.iter().zip([0.1, 0.3, 0.5, 0.7, 0.9]).all(|(a, b)| (a - b).abs() < 1e-12));
    for f in &m.files {
        let text = fs::read_to_string(tmp.path().join(f)).unwrap();
        assert_eq!(text.lines().count(), 301, "{f}");
    }
    let back: bagprior_cli::commands::Manifest =
        toml::from_str(&fs::read_to_string(tmp.path().join("manifest.toml")).unwrap()).unwrap();
    assert_eq!(back, m);
}

#[test]
fn ablation_without_drops_matches_train() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(&tmp.path().join("train"));
    let trained = cmd_train(&cfg).unwrap();
    let ablated = cmd_ablate(
        &ExperimentConfig {
            output: tmp.path().join("ablate"),
            ..cfg
        },
        &[],
    )
    .unwrap();
    assert_eq!(ablated.values(Variant::Full, "accuracy"), trained.values(Variant::Full, "accuracy"));
    assert_eq!(ablated.values(Variant::Full, "mae"), trained.values(Variant::Full, "mae"));
}

#[test]
fn eval_reproduces_first_repeat_accuracy() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(tmp.path());
    let trained = cmd_train(&cfg).unwrap();
    let row = cmd_eval(&cfg, &tmp.path().join("checkpoints/repeat-00.plsc"), None).unwrap();
    assert_eq!(Some(row.accuracy), trained.rows[0].accuracy);
}

#[test]
fn set_number_sweep_completes() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(tmp.path());
    cfg.repeats = 1;
    cfg.bags.bag_size = 120;
    let ms: Vec<usize> = (1..=7).map(|k| 4 * k).collect();
    let rows = cmd_sweep(&cfg, &ms).unwrap();
    assert_eq!(rows.iter().map(|r| r.m).collect::<Vec<_>>(), ms);
    assert!(rows.iter().all(|r| r.accuracy_mean.is_some_and(|a| (0.0..=1.0).contains(&a))));
    let back: Vec<SweepRow> = read_csv(&tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(back, rows);
}

fn bagprior(dir: &Path, args: &[&str]) -> Option<i32> {
    Command::new(env!("CARGO_BIN_EXE_bagprior"))
        .args(args)
        .current_dir(dir)
        .env_remove("BAGPRIOR_OUTPUT_ROOT")
        .output()
        .unwrap()
        .status
        .code()
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let common = [
        "--m", "4", "--bag-size", "200", "--repeats", "2", "--warmup-epochs", "2", "--epochs", "2",
    ];
    let with = |cmd: &str, extra: &[&str]| {
        let mut v = vec![cmd];
        v.extend_from_slice(&common);
        v.extend_from_slice(extra);
        bagprior(dir, &v)
    };
    assert_eq!(with("estimate", &["--output", "ok"]), Some(0));
    // Four bags give six pairs, fewer than γ = 7: every repeat fails.
    assert_eq!(with("estimate", &["--output", "bad", "--gamma", "7"]), Some(1));
    let rows: Vec<RepeatRow> = read_csv(&dir.join("bad/repeats.csv")).unwrap();
    assert!(rows.iter().all(|r| r.status == "failed" && !r.error.is_empty()));
    assert_eq!(bagprior(dir, &["estimate", "--config", "missing.toml"]), Some(2));
    assert_eq!(bagprior(dir, &["report", "--dir", "ok"]), Some(0));
    assert_eq!(bagprior(dir, &["report", "--dir", "nowhere"]), Some(2));
}

#[test]
fn output_root_variable_resolves_relative_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_bagprior"))
        .args(["synth", "--m", "3", "--bag-size", "50", "--gamma", "1", "--output", "rel"])
        .env("BAGPRIOR_OUTPUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("rel/manifest.toml").exists());
}
