use std::fs;

use robust_gram::gram::{empirical_gram, frobenius_error, robust_gram};
use robust_gram::harness::*;

fn small(trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        trials,
        ..ExperimentConfig::default()
    }
}

#[test]
fn fixed_seed_gives_identical_bytes() {
    let cfg = small(6);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_outputs(&run_benchmark(&cfg).unwrap(), a.path()).unwrap();
    write_outputs(&run_benchmark(&ExperimentConfig { jobs: 2, ..cfg }).unwrap(), b.path()).unwrap();
    for f in ["trials.csv", "quantiles.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
    let trials = fs::read_to_string(a.path().join("trials.csv")).unwrap();
    let mut lines = trials.lines();
    assert_eq!(lines.next(), Some("trial_index,error_robust,error_empirical,seed_used"));
    assert_eq!(lines.count(), 6);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary["estimators"]["robust"]["mean"].is_number());
    assert_eq!(summary["config"]["trials"], 6);
}

#[test]
fn trials_are_paired_and_reproducible() {
    let cfg = small(5);
    let r = run_benchmark(&cfg).unwrap();
    for t in &r.trials {
        let s = gen_mixture(&cfg, t.seed_used).unwrap();
        assert_eq!(sample_hash(&s), t.sample_hash);
        let g = true_gram(&cfg);
        let emp = frobenius_error(&empirical_gram(&s), &g).unwrap();
        assert_eq!(Some(emp), t.error_empirical);
        let q = robust_gram(&s, cfg.epsilon, cfg.num_updates, cfg.stop_tol).unwrap();
        assert_eq!(Some(frobenius_error(&q.matrix, &g).unwrap()), t.error_robust);
    }
}

#[test]
fn robust_median_beats_empirical_median() {
    let r = run_benchmark(&small(60)).unwrap();
    let rob = r.summary.estimators["robust"].median;
    let emp = r.summary.estimators["empirical"].median;
    assert!(rob < emp, "{rob} vs {emp}");
    let curve = quantile_curve(&r.errors(Estimator::Robust)).unwrap();
    assert_eq!(curve.len(), 60);
    assert!(curve.windows(2).all(|w| w[0].1 <= w[1].1 && w[0].0 < w[1].0));
}

#[test]
fn covariance_estimator_in_benchmark() {
    let mut cfg = small(3);
    cfg.estimators.insert(Estimator::Covariance);
    let r = run_benchmark(&cfg).unwrap();
    assert!(r.trials.iter().all(|t| t.error_covariance.is_some()));
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&r, dir.path()).unwrap();
    let header = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    assert!(header.starts_with("trial_index,error_robust,error_empirical,error_covariance,seed_used"));
}

#[test]
fn heavy_tail_mixture_has_large_kurtosis() {
    let cfg = ExperimentConfig {
        n: 5000,
        ..ExperimentConfig::default()
    };
    let s = gen_mixture(&cfg, 11).unwrap();
    let mb = estimate_moment_bounds(&s, DEFAULT_DIRECTIONS, 0, 1.0).unwrap();
    assert!(mb.kappa > 3.0, "{}", mb.kappa);
    assert!(!mb.certified);
}

#[test]
fn csv_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = gen_mixture(&small(1), 0).unwrap();
    let path = dir.path().join("x.csv");
    write_matrix_file(&path, s.data()).unwrap();
    assert_eq!(&read_matrix_file(&path, false).unwrap(), s.data());
}

#[test]
fn config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, r#"{"n": 80, "d": 4, "trials": 2, "seed": 9, "estimators": ["empirical"]}"#).unwrap();
    let cfg = ExperimentConfig::from_file(&path).unwrap();
    assert_eq!((cfg.n, cfg.d, cfg.trials, cfg.seed), (80, 4, 2, 9));
    let r = run_benchmark(&cfg).unwrap();
    assert!(r.trials.iter().all(|t| t.error_robust.is_none()));
}
