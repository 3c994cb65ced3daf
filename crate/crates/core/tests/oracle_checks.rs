//! Closed forms against sampling, lattice and grid oracles.

use evidence_core::experiments::random_instance;
use evidence_core::gaussian::diffuse_limit_decomposition;
use evidence_core::improper::cost_alpha;
use evidence_core::linalg::{dot, Cholesky, Matrix};
use evidence_core::oracles::monte_carlo_z;
use evidence_core::{
    log_likelihood, log_marginal_likelihood, ml_sampling_distribution, posterior_theta_gaussian,
    posterior_theta_improper, BasisFamily, Dataset, DesignMatrix, GaussianBelief,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn draw(belief: &GaussianBelief<f64>, r: &mut ChaCha8Rng) -> Vec<f64> {
    let chol = Cholesky::new(&belief.cov, 0.0).unwrap();
    let z: Vec<f64> = (0..belief.dim())
        .map(|_| r.sample(StandardNormal))
        .collect();
    belief
        .mean
        .iter()
        .zip(chol.lower_mul(&z))
        .map(|(m, d)| m + d)
        .collect()
}

/// Mean and standard error of a sample.
fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn ml_covariance_matches_resampled_estimates() {
    let mut r = rng(1);
    let (_, phi) = random_instance(&mut r, 6, 2).unwrap();
    let theta_true = [0.7, -1.3];
    let s2 = 0.8;
    let dist = ml_sampling_distribution(&theta_true, &phi, s2).unwrap();
    let clean = phi.phi().matvec(&theta_true).unwrap();
    let reps = 100_000;
    let est: Vec<Vec<f64>> = (0..reps)
        .map(|_| {
            let y: Vec<f64> = clean
                .iter()
                .map(|f| f + s2.sqrt() * r.sample::<f64, _>(StandardNormal))
                .collect();
            phi.least_squares(&y).unwrap().theta
        })
        .collect();
    for i in 0..2 {
        for j in 0..2 {
            let prods: Vec<f64> = est
                .iter()
                .map(|t| (t[i] - theta_true[i]) * (t[j] - theta_true[j]))
                .collect();
            let (m, se) = mean_se(&prods);
            assert!(
                (m - dist.cov[(i, j)]).abs() < 3.0 * se,
                "({i},{j}) {m} vs {}",
                dist.cov[(i, j)]
            );
        }
    }
}

#[test]
fn improper_posterior_mean_is_lattice_argmax() {
    let mut r = rng(2);
    let (y, phi) = random_instance(&mut r, 5, 2).unwrap();
    let post = posterior_theta_improper(&y, &phi, 1.0).unwrap();
    let sd: Vec<f64> = post.std_devs();
    let steps = 400;
    let h: Vec<f64> = sd.iter().map(|s| 8.0 * s / steps as f64).collect();
    let mut best = (f64::NEG_INFINITY, vec![0.0; 2]);
    for i in 0..=steps {
        for j in 0..=steps {
            let t = vec![
                post.mean[0] - 4.0 * sd[0] + 0.37 * h[0] + h[0] * i as f64,
                post.mean[1] - 4.0 * sd[1] + 0.61 * h[1] + h[1] * j as f64,
            ];
            let l = log_likelihood(&y, &phi, &t, 1.0).unwrap();
            if l > best.0 {
                best = (l, t);
            }
        }
    }
    for k in 0..2 {
        assert!((best.1[k] - post.mean[k]).abs() <= h[k], "{k}");
    }
}

#[test]
fn improper_predictive_matches_posterior_draws() {
    let mut r = rng(3);
    let x: Vec<f64> = (0..7).map(|i| -1.0 + 0.35 * i as f64).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|v| 0.5 - v + 0.3 * r.sample::<f64, _>(StandardNormal))
        .collect();
    let ds = Dataset::from_scalar_inputs(&x, y).unwrap();
    let family = BasisFamily::Polynomial { degree: 2 };
    let phi = evidence_core::build_design_matrix(&ds, &family, &[]).unwrap();
    let post = posterior_theta_improper(ds.outputs(), &phi, 0.09).unwrap();
    let (mu, var) = evidence_core::predictive_f_improper(&[0.4], &family, &[], &post).unwrap();
    let feat = family.features(&[0.4], &[]).unwrap();
    let f: Vec<f64> = (0..100_000)
        .map(|_| dot(&feat, &draw(&post, &mut r)))
        .collect();
    let (m, se) = mean_se(&f);
    assert!((m - mu).abs() < 3.0 * se);
    let sq: Vec<f64> = f.iter().map(|v| (v - mu).powi(2)).collect();
    let (v, se_v) = mean_se(&sq);
    assert!((v - var).abs() < 3.0 * se_v, "{v} vs {var}");
}

#[test]
fn gaussian_predictive_matches_posterior_draws() {
    let mut r = rng(4);
    let (y, phi) = random_instance(&mut r, 5, 2).unwrap();
    let prior = GaussianBelief::isotropic(2, 0.3, 0.7);
    let post = posterior_theta_gaussian(&y, &phi, 0.6, &prior).unwrap();
    let feat = [0.9, -1.7];
    let (mu, var) = evidence_core::gaussian::predictive_from_features(&feat, &post).unwrap();
    let f: Vec<f64> = (0..100_000)
        .map(|_| dot(&feat, &draw(&post.belief, &mut r)))
        .collect();
    let (m, se) = mean_se(&f);
    assert!((m - mu).abs() < 3.0 * se);
    let sq: Vec<f64> = f.iter().map(|v| (v - mu).powi(2)).collect();
    let (v, se_v) = mean_se(&sq);
    assert!((v - var).abs() < 3.0 * se_v);
}

#[test]
fn log_z_matches_prior_monte_carlo() {
    let mut r = rng(5);
    let (y, phi) = random_instance(&mut r, 4, 2).unwrap();
    let prior = GaussianBelief::isotropic(2, -0.2, 1.1);
    let exact = log_marginal_likelihood(&y, &phi, 0.9, &prior)
        .unwrap()
        .log_value;
    let (est, se) = monte_carlo_z(&y, &phi, 0.9, &prior, 1_000_000, 55).unwrap();
    assert!((est - exact).abs() < 3.0 * se, "{est} vs {exact} (se {se})");
}

#[test]
fn very_diffuse_prior_fitting_term_hits_limit() {
    let phi = DesignMatrix::new(Matrix::from_fn(2, 1, |_, _| 1.0)).unwrap();
    let pts = diffuse_limit_decomposition::<f64>(&[-2.0, 2.0], &phi, 1.0, &[1e8], 0.0).unwrap();
    assert!((pts[0].part1 - 4.0).abs() < 1e-4);
}

fn example2_data(seed: u64) -> Dataset<f64> {
    let mut r = rng(seed);
    let x: Vec<f64> = (0..200).map(|i| -10.0 + 20.0 * i as f64 / 199.0).collect();
    let y = x
        .iter()
        .map(|&v| {
            2.0 * (v + 4.0f64).abs().exp() - 5.0 * (v - 6.0f64).abs().exp()
                + 0.5f64.sqrt() * r.sample::<f64, _>(StandardNormal)
        })
        .collect();
    Dataset::from_scalar_inputs(&x, y).unwrap()
}

#[test]
fn cost_grid_argmin_is_near_true_centers() {
    let ds = example2_data(6);
    let family = BasisFamily::ExpAbs { count: 2 };
    let axis: Vec<f64> = (0..41).map(|i| -10.0 + 0.5 * i as f64).collect();
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for &a1 in &axis {
        for &a2 in &axis {
            if a1 >= a2 {
                continue;
            }
            if let Ok(c) = cost_alpha(&ds, &family, &[a1, a2]) {
                if c.cost() < best.0 {
                    best = (c.cost(), [a1, a2]);
                }
            }
        }
    }
    assert!(
        (best.1[0] + 4.0).abs() <= 0.5 && (best.1[1] - 6.0).abs() <= 0.5,
        "{:?}",
        best.1
    );
}

#[test]
fn profiled_noise_maximizer_is_ml_value() {
    use evidence_core::selection::{
        empirical_bayes_optimize, FreeParam, Objective, OptimizerConfig,
    };
    let ds = Dataset::new(Matrix::column(&[0.0, 1.0]), vec![-3.0, 3.0]).unwrap();
    let fixed = evidence_core::HyperParams::new(vec![], 1.0).unwrap();
    let cfg = OptimizerConfig::new(vec![(1e-6, 100.0)], vec![101]);
    let prof = empirical_bayes_optimize::<f64>(
        &ds,
        &BasisFamily::Constant,
        Objective::ProfileLikelihood,
        &[FreeParam::SigmaE2],
        &cfg,
        &fixed,
    )
    .unwrap();
    let s = empirical_bayes_optimize::<f64>(
        &ds,
        &BasisFamily::Constant,
        Objective::LogS,
        &[FreeParam::SigmaE2],
        &cfg,
        &fixed,
    )
    .unwrap();
    assert!((prof.best.sigma_e2 - 9.0).abs() < 1e-3);
    assert!((s.best.sigma_e2 - 18.0).abs() < 1e-3);
}
