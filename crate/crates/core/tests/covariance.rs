use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use robust_gram::covariance::*;
use robust_gram::gram::frobenius_error;
use robust_gram::harness::{gen_mixture, true_gram, ExperimentConfig};
use robust_gram::Sample;

fn sigma_and_root(rng: &mut ChaCha20Rng, d: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let o = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q();
    let vals: Vec<f64> = (0..d).map(|k| 2.0 / (k + 1) as f64).collect();
    let root = &o * DMatrix::from_diagonal(&DVector::from_iterator(d, vals.iter().map(|v| v.sqrt())));
    (&root * root.transpose(), root)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[test]
fn blocks_are_unbiased() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let d = 3;
    let (sigma, root) = sigma_and_root(&mut rng, d);
    let theta = DVector::from_vec(vec![0.6, -0.8, 0.0]);
    let truth = (theta.transpose() * &sigma * &theta)[(0, 0)];
    for q in [2, 3, 5] {
        let y = DMatrix::from_fn(30_000, d, |_, _| rng.sample::<f64, _>(StandardNormal)) * root.transpose();
        let blocks = make_blocks(&Sample::new(y).unwrap(), q).unwrap();
        let e = blocks.energies(&theta).unwrap();
        let m = e.len() as f64;
        let mean = e.iter().sum::<f64>() / m;
        let se = (e.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt();
        assert!((mean - truth).abs() <= 3.0 * se, "q={q}: {mean} vs {truth} (se {se})");
    }
}

#[test]
fn gaussian_data_matches_empirical_covariance() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let d = 5;
    let (sigma, root) = sigma_and_root(&mut rng, d);
    let mut robust = Vec::new();
    let mut empirical = Vec::new();
    for _ in 0..10 {
        let mut y = DMatrix::from_fn(2000, d, |_, _| rng.sample::<f64, _>(StandardNormal)) * root.transpose();
        for mut row in y.row_iter_mut() {
            row.add_scalar_mut(3.0);
        }
        let s = Sample::new(y).unwrap();
        let r = robust_covariance(&s, 2, 0.1, CovarianceMode::IterativePractical).unwrap();
        robust.push(frobenius_error(&r.matrix, &sigma).unwrap());
        empirical.push(frobenius_error(&empirical_covariance(&s).unwrap(), &sigma).unwrap());
    }
    let (r, e) = (median(robust), median(empirical));
    // both consistent; the robust one pays a modest efficiency price
    assert!(r < 4.0 * e && r < 0.1, "robust {r} empirical {e}");
}

#[test]
fn contaminated_shifted_mixture_favours_robust() {
    let cfg = ExperimentConfig {
        n: 200,
        ..ExperimentConfig::default()
    };
    let g = true_gram(&cfg);
    let shift = DVector::from_fn(cfg.d, |k, _| k as f64 - 4.0);
    let mut robust = Vec::new();
    let mut empirical = Vec::new();
    for seed in 0..30 {
        let mut y = gen_mixture(&cfg, seed).unwrap().into_inner();
        for mut row in y.row_iter_mut() {
            row += shift.transpose();
        }
        let s = Sample::new(y).unwrap();
        let r = robust_covariance(&s, 2, cfg.epsilon, CovarianceMode::IterativePractical).unwrap();
        robust.push(frobenius_error(&r.matrix, &g).unwrap());
        empirical.push(frobenius_error(&empirical_covariance(&s).unwrap(), &g).unwrap());
    }
    let (r, e) = (median(robust), median(empirical));
    assert!(r < e, "robust {r} empirical {e}");
}

#[test]
fn certified_mode_tracks_truth() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let d = 3;
    let (sigma, root) = sigma_and_root(&mut rng, d);
    let y = DMatrix::from_fn(4000, d, |_, _| rng.sample::<f64, _>(StandardNormal)) * root.transpose();
    let s = Sample::new(y).unwrap();
    let opts = CovarianceOptions {
        mode: CovarianceMode::GridCertified,
        positive_part: true,
        ..CovarianceOptions::default()
    };
    let est = robust_covariance_with(&s, &opts).unwrap();
    let rel = frobenius_error(&est.matrix, &sigma).unwrap().sqrt() / sigma.norm();
    assert!(rel < 0.2, "relative error {rel}");
}

#[test]
fn plug_in_kappa_prime_respects_block_bound() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let y = DMatrix::from_fn(4000, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
    let s = Sample::new(y).unwrap();
    for q in [2, 3, 5] {
        let blocks = make_blocks(&s, q).unwrap();
        let m = BlockMoments::plug_in(&s, &blocks).unwrap();
        assert!(!m.certified);
        // Gaussian κ ≈ 3 gives 1 + τ_q(3)/q
        let expected = 1.0 + (2.0 + 2.0 / (q as f64 - 1.0)) / q as f64;
        assert!((m.kappa_prime - expected).abs() < 0.3 * expected, "q={q}: {}", m.kappa_prime);
    }
}

#[test]
fn simplified_zeta_branch_for_q2() {
    // ‖Σ‖∞ ≤ Tr(Σ)/2 activates the simplified branch, which has no Tr(Σ²)
    let (tr, op) = (4.0, 1.5);
    let a = robust_gram::bounds::zeta_q(1.0, 2, 3.0, tr, 1.0, op, 5, 0.05).unwrap();
    let b = robust_gram::bounds::zeta_q(1.0, 2, 3.0, tr, 100.0, op, 5, 0.05).unwrap();
    assert_eq!(a, b);
    let c = robust_gram::bounds::zeta_q(1.0, 2, 3.0, tr, 1.0, 2.5, 5, 0.05).unwrap();
    let d = robust_gram::bounds::zeta_q(1.0, 2, 3.0, tr, 100.0, 2.5, 5, 0.05).unwrap();
    assert_ne!(c, d);
}
