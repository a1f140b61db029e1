use std::collections::BTreeMap;
use std::fs;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::io::Write;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::csv_io;
use super::{gen_mixture, true_gram, Estimator, ExperimentConfig};
use crate::covariance::{robust_covariance_with, CovarianceMode, CovarianceOptions};
use crate::error::{Error, Result};
use crate::gram::{empirical_gram, frobenius_error, robust_gram};
use crate::Sample;

/// Squared Frobenius errors of one trial. Estimators that were not
/// requested are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_index: usize,
    pub error_robust: Option<f64>,
    pub error_empirical: Option<f64>,
    pub error_covariance: Option<f64>,
    pub iterations: usize,
    pub seed_used: u64,
    pub sample_hash: u64,
}

impl TrialResult {
    pub fn error(&self, e: Estimator) -> Option<f64> {
        match e {
            Estimator::Robust => self.error_robust,
            Estimator::Empirical => self.error_empirical,
            Estimator::Covariance => self.error_covariance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial_index: usize,
    pub seed_used: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub completed: usize,
    pub failed: usize,
    pub estimators: BTreeMap<String, EstimatorSummary>,
    pub config: ExperimentConfig,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub trials: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
    pub summary: Summary,
}

impl BenchmarkReport {
    pub fn errors(&self, e: Estimator) -> Vec<f64> {
        self.trials.iter().filter_map(|t| t.error(e)).collect()
    }
}

const SUMMARY_NOTE: &str = "mean and std are the plain empirical mean and sample standard \
deviation over completed trials; no confidence interval for the mean is reported";

/// Hash of the bit patterns of a sample, used to check that every
/// estimator of a trial saw the same data.
pub fn sample_hash(sample: &Sample) -> u64 {
    let mut h = DefaultHasher::new();
    sample.n().hash(&mut h);
    sample.d().hash(&mut h);
    for v in sample.data().iter() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

fn run_trial(config: &ExperimentConfig, trial_index: usize) -> Result<TrialResult> {
    let seed = config.trial_seed(trial_index);
    let sample = gen_mixture(config, seed)?;
    let g = true_gram(config);
    let hash = sample_hash(&sample);
    let mut out = TrialResult {
        trial_index,
        error_robust: None,
        error_empirical: None,
        error_covariance: None,
        iterations: 0,
        seed_used: seed,
        sample_hash: hash,
    };
    for &est in &config.estimators {
        if sample_hash(&sample) != hash {
            return Err(Error::InvalidSample("sample changed between estimators".into()));
        }
        match est {
            Estimator::Robust => {
                let q = robust_gram(&sample, config.epsilon, config.num_updates, config.stop_tol)?;
                out.iterations = q.iterations;
                out.error_robust = Some(frobenius_error(&q.matrix, &g)?);
            }
            Estimator::Empirical => {
                out.error_empirical = Some(frobenius_error(&empirical_gram(&sample), &g)?);
            }
            Estimator::Covariance => {
                let opts = CovarianceOptions {
                    q: config.q,
                    epsilon: config.epsilon,
                    mode: CovarianceMode::IterativePractical,
                    num_updates: config.num_updates,
                    stop_tol: config.stop_tol,
                    ..CovarianceOptions::default()
                };
                let c = robust_covariance_with(&sample, &opts)?;
                // the mixture is centered, so its covariance is its Gram matrix
                out.error_covariance = Some(frobenius_error(&c.matrix, &g)?);
            }
        }
    }
    Ok(out)
}

/// Runs every trial, in parallel up to `config.jobs` threads. Results are
/// sorted by trial index. Fails if more than 10% of the trials fail.
pub fn run_benchmark(config: &ExperimentConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let run = || -> Vec<(usize, Result<TrialResult>)> {
        (0..config.trials)
            .into_par_iter()
            .map(|k| (k, run_trial(config, k)))
            .collect()
    };
    let outcomes = if config.jobs == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::param("jobs", e.to_string()))?
            .install(run)
    };

    let mut trials = Vec::with_capacity(config.trials);
    let mut failures = Vec::new();
    for (k, outcome) in outcomes {
        match outcome {
            Ok(t) => trials.push(t),
            Err(e) => {
                warn!("trial {k} failed: {e}");
                failures.push(TrialFailure {
                    trial_index: k,
                    seed_used: config.trial_seed(k),
                    reason: e.to_string(),
                });
            }
        }
    }
    trials.sort_by_key(|t| t.trial_index);
    failures.sort_by_key(|f| f.trial_index);
    if failures.len() * 10 > config.trials {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: config.trials,
        });
    }

    let mut estimators = BTreeMap::new();
    for &e in &config.estimators {
        let errs: Vec<f64> = trials.iter().filter_map(|t| t.error(e)).collect();
        if let Some(s) = summarize(&errs) {
            estimators.insert(e.name().to_string(), s);
        }
    }
    for (name, s) in &estimators {
        info!("{name}: mean {:.4} std {:.4} median {:.4}", s.mean, s.std, s.median);
    }
    Ok(BenchmarkReport {
        summary: Summary {
            completed: trials.len(),
            failed: failures.len(),
            estimators,
            config: config.clone(),
            note: SUMMARY_NOTE.into(),
        },
        trials,
        failures,
    })
}

fn summarize(errs: &[f64]) -> Option<EstimatorSummary> {
    if errs.is_empty() {
        return None;
    }
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let std = if errs.len() > 1 {
        (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = errs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    Some(EstimatorSummary { mean, std, median })
}

/// Sorted errors paired with the plotting positions `k/(N+1)`.
pub fn quantile_curve(errors: &[f64]) -> Result<Vec<(f64, f64)>> {
    if errors.is_empty() {
        return Err(Error::param("errors", "must not be empty"));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let denom = (sorted.len() + 1) as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(k, v)| ((k + 1) as f64 / denom, v))
        .collect())
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

/// Writes `trials.csv`, `quantiles.csv`, `summary.json` and, when any trial
/// failed, `failures.csv` into `dir`.
pub fn write_outputs(report: &BenchmarkReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let estimators: Vec<Estimator> = report.summary.config.estimators.iter().copied().collect();

    let mut w = csv::Writer::from_path(dir.join("trials.csv")).map_err(csv_io)?;
    let mut header = vec!["trial_index".to_string()];
    header.extend(estimators.iter().map(|e| format!("error_{}", e.name())));
    header.push("seed_used".into());
    w.write_record(&header).map_err(csv_io)?;
    for t in &report.trials {
        let mut row = vec![t.trial_index.to_string()];
        row.extend(estimators.iter().map(|&e| fmt(t.error(e))));
        row.push(t.seed_used.to_string());
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("quantiles.csv")).map_err(csv_io)?;
    let mut header = vec!["rank_prob".to_string()];
    header.extend(estimators.iter().map(|e| e.name().to_string()));
    w.write_record(&header).map_err(csv_io)?;
    let curves: Vec<Vec<(f64, f64)>> = estimators
        .iter()
        .map(|&e| quantile_curve(&report.errors(e)).unwrap_or_default())
        .collect();
    let rows = curves.first().map_or(0, Vec::len);
    for k in 0..rows {
        let mut row = vec![format!("{:.16e}", curves[0][k].0)];
        row.extend(curves.iter().map(|c| fmt(c.get(k).map(|p| p.1))));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;

    if !report.failures.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("failures.csv")).map_err(csv_io)?;
        for f in &report.failures {
            w.serialize(f).map_err(csv_io)?;
        }
        w.flush()?;
    }

    let mut f = fs::File::create(dir.join("summary.json"))?;
    serde_json::to_writer_pretty(&mut f, &report.summary)?;
    writeln!(f)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            n: 60,
            d: 3,
            trials: 4,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn quantile_curve_examples() {
        assert_eq!(quantile_curve(&[3.0]).unwrap(), vec![(0.5, 3.0)]);
        let q = quantile_curve(&[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(q.iter().map(|p| p.1).collect::<Vec<_>>(), vec![1.0, 2.0, 4.0]);
        assert_eq!(q[0].0, 0.25);
        let q = quantile_curve(&[4.0, 1.0]).unwrap();
        assert_eq!(q[0].1, 1.0);
        assert!(quantile_curve(&[]).is_err());
    }

    #[test]
    fn single_trial_gives_single_row() {
        let cfg = ExperimentConfig { trials: 1, ..small() };
        let r = run_benchmark(&cfg).unwrap();
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.trials[0].seed_used, cfg.seed);
    }

    #[test]
    fn results_do_not_depend_on_jobs() {
        let a = run_benchmark(&ExperimentConfig { jobs: 1, ..small() }).unwrap();
        let b = run_benchmark(&ExperimentConfig { jobs: 3, ..small() }).unwrap();
        assert_eq!(a.trials, b.trials);
    }

    #[test]
    fn summary_statistics() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(summarize(&[]).is_none());
    }
}
