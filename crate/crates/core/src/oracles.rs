//! Brute-force checks for the closed forms: tensor trapezoid quadrature of the
//! likelihood, Monte Carlo over the prior, and resampling of estimators.
//!
//! Everything here is slow by design and only meant for tests and the
//! `verify` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{norm_sq, sub_vec, Cholesky, Matrix};
use crate::logspace::log_sum_exp;
use crate::model::{check_sigma, gaussian_log_lik, DesignMatrix, GaussianBelief};
use crate::scalar::Scalar;

/// Samples per independently seeded Monte Carlo stream.
const MC_BATCH: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureSpec {
    /// Nodes per dimension; odd and at least 3.
    pub nodes: usize,
    /// Half-width of the box in posterior standard deviations; at least 6.
    pub k: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes: 801,
            k: 12.0,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 3 || self.nodes.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "quadrature node count must be odd and >= 3, got {}",
                self.nodes
            )));
        }
        if !(self.k >= 6.0) || !self.k.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "quadrature k must be >= 6, got {}",
                self.k
            )));
        }
        Ok(())
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal_vec<T: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    (0..n).map(|_| T::lit(rng.sample(StandardNormal))).collect()
}

/// `log ∫ ℓ(y | θ) dθ` by the trapezoid rule on a tensor grid centred at
/// `θ̂` and spanning `±k` posterior standard deviations per coordinate.
/// The likelihood is evaluated from residuals directly.
pub fn quadrature_s<T: Scalar>(
    y: &[T],
    phi: &DesignMatrix<T>,
    sigma_e2: T,
    spec: &QuadratureSpec,
) -> Result<T> {
    spec.validate()?;
    check_sigma(sigma_e2)?;
    let m = phi.n_basis();
    if m > 2 {
        return Err(Error::DimensionTooLarge(m));
    }
    let ls = phi.least_squares(y)?;
    let inv = phi.gram_cholesky().inverse();
    let n = y.len();
    let k = T::lit(spec.k);
    let last = spec.nodes - 1;
    let axes: Vec<(Vec<T>, T)> = (0..m)
        .map(|j| {
            let sd = (sigma_e2 * inv[(j, j)]).sqrt();
            let lo = ls.theta[j] - k * sd;
            let h = T::lit(2.0) * k * sd / T::from_usize_lossy(last);
            (
                (0..spec.nodes)
                    .map(|i| lo + h * T::from_usize_lossy(i))
                    .collect(),
                h,
            )
        })
        .collect();
    let log_w = |i: usize| -> T {
        if i == 0 || i == last {
            -T::LN_2()
        } else {
            T::zero()
        }
    };
    let loglik = |theta: &[T]| -> T {
        let f = phi.phi().matvec(theta).expect("theta has M entries");
        gaussian_log_lik(norm_sq(&sub_vec(y, &f)), n, sigma_e2)
    };
    let log_h: T = axes.iter().map(|(_, h)| h.ln()).sum();

    let total = if m == 1 {
        let terms: Vec<T> = axes[0]
            .0
            .iter()
            .enumerate()
            .map(|(i, &t)| log_w(i) + loglik(&[t]))
            .collect();
        log_sum_exp(&terms)
    } else {
        let rows: Vec<T> = axes[0]
            .0
            .par_iter()
            .enumerate()
            .map(|(i, &t0)| {
                let terms: Vec<T> = axes[1]
                    .0
                    .iter()
                    .enumerate()
                    .map(|(j, &t1)| log_w(i) + log_w(j) + loglik(&[t0, t1]))
                    .collect();
                log_sum_exp(&terms)
            })
            .collect();
        log_sum_exp(&rows)
    };
    Ok(total + log_h)
}

/// Log-mean of `ℓ(y | θ_s)` over `θ_s` drawn from the prior, with the delta
/// method standard error of that log estimate.
pub fn monte_carlo_z<T: Scalar>(
    y: &[T],
    phi: &DesignMatrix<T>,
    sigma_e2: T,
    prior: &GaussianBelief<T>,
    n_samples: usize,
    seed: u64,
) -> Result<(T, T)> {
    check_sigma(sigma_e2)?;
    if n_samples < 2 {
        return Err(Error::InvalidParameter(
            "need at least 2 Monte Carlo samples".into(),
        ));
    }
    if prior.dim() != phi.n_basis() {
        return Err(Error::DimensionMismatch(format!(
            "prior of dimension {} for M = {}",
            prior.dim(),
            phi.n_basis()
        )));
    }
    let chol = Cholesky::new(&prior.cov, T::zero()).map_err(|_| Error::SingularPrior)?;
    let n = y.len();
    let batches = n_samples.div_ceil(MC_BATCH);
    let logs: Vec<T> = (0..batches)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = rng_for(seed, b as u64);
            let count = MC_BATCH.min(n_samples - b * MC_BATCH);
            let chol = &chol;
            (0..count)
                .map(move |_| {
                    let z = normal_vec::<T>(&mut rng, prior.dim());
                    let theta: Vec<T> = prior
                        .mean
                        .iter()
                        .zip(chol.lower_mul(&z))
                        .map(|(&m, d)| m + d)
                        .collect();
                    let f = phi.phi().matvec(&theta).expect("theta has M entries");
                    gaussian_log_lik(norm_sq(&sub_vec(y, &f)), n, sigma_e2)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let max = logs.iter().copied().fold(T::neg_infinity(), T::max);
    let w: Vec<T> = logs.iter().map(|&l| (l - max).exp()).collect();
    let ns = T::from_usize_lossy(n_samples);
    let mean = w.iter().copied().sum::<T>() / ns;
    let var = w.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (ns - T::one());
    let se = (var / ns).sqrt() / mean;
    Ok((max + mean.ln(), se))
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatorStats<T> {
    pub reps: usize,
    pub theta_mean: Vec<T>,
    pub theta_cov: Matrix<T>,
    /// Mean and standard error of `‖y - Φθ̂‖² / (N - M)`.
    pub unbiased_mean: T,
    pub unbiased_se: T,
    /// Mean and standard error of `‖y - Φθ̂‖² / N`.
    pub ml_mean: T,
    pub ml_se: T,
}

fn mean_se<T: Scalar>(v: &[T]) -> (T, T) {
    let n = T::from_usize_lossy(v.len());
    let mean = v.iter().copied().sum::<T>() / n;
    let var = v.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / (n - T::one());
    (mean, (var / n).sqrt())
}

/// Simulates `y = Φθ_true + e` `n_reps` times and collects empirical moments
/// of `θ̂_ML` and of both noise variance estimators.
pub fn resampling_estimator_stats<T: Scalar>(
    theta_true: &[T],
    phi: &DesignMatrix<T>,
    sigma_e2: T,
    n_reps: usize,
    seed: u64,
) -> Result<EstimatorStats<T>> {
    check_sigma(sigma_e2)?;
    if n_reps < 1000 {
        return Err(Error::InvalidParameter(format!(
            "need at least 1000 replicates, got {n_reps}"
        )));
    }
    let (n, m) = (phi.n_obs(), phi.n_basis());
    if n == m {
        return Err(Error::DegenerateDof(n));
    }
    let clean = phi.phi().matvec(theta_true)?;
    let sd = sigma_e2.sqrt();
    let reps: Vec<(Vec<T>, T)> = (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(seed, r as u64);
            let y: Vec<T> = clean
                .iter()
                .map(|&f| f + sd * T::lit(rng.sample(StandardNormal)))
                .collect();
            let ls = phi.least_squares(&y)?;
            Ok((ls.theta, ls.rss))
        })
        .collect::<Result<_>>()?;

    let nr = T::from_usize_lossy(n_reps);
    let mut theta_mean = vec![T::zero(); m];
    for (t, _) in &reps {
        for (a, &b) in theta_mean.iter_mut().zip(t) {
            *a += b / nr;
        }
    }
    let theta_cov = Matrix::from_fn(m, m, |i, j| {
        reps.iter()
            .map(|(t, _)| (t[i] - theta_mean[i]) * (t[j] - theta_mean[j]))
            .sum::<T>()
            / (nr - T::one())
    });
    let unbiased: Vec<T> = reps
        .iter()
        .map(|(_, rss)| *rss / T::from_usize_lossy(n - m))
        .collect();
    let ml: Vec<T> = reps
        .iter()
        .map(|(_, rss)| *rss / T::from_usize_lossy(n))
        .collect();
    let (unbiased_mean, unbiased_se) = mean_se(&unbiased);
    let (ml_mean, ml_se) = mean_se(&ml);
    Ok(EstimatorStats {
        reps: n_reps,
        theta_mean,
        theta_cov,
        unbiased_mean,
        unbiased_se,
        ml_mean,
        ml_se,
    })
}

/// `log N(y | m, v)` for scalars.
pub fn log_normal_pdf<T: Scalar>(y: T, mean: T, var: T) -> T {
    let d = y - mean;
    -T::lit(0.5) * (T::ln_two_pi() + var.ln() + d * d / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::improper::log_area_under_likelihood;

    fn ones(n: usize) -> DesignMatrix<f64> {
        DesignMatrix::new(Matrix::from_fn(n, 1, |_, _| 1.0)).unwrap()
    }

    #[test]
    fn single_observation_integrates_to_one() {
        let q = quadrature_s(&[0.7], &ones(1), 1.3, &QuadratureSpec::default()).unwrap();
        assert!(q.abs() < 1e-8, "{q}");
    }

    #[test]
    fn two_points_match_closed_form() {
        let y = [-1.0, 1.0];
        let q = quadrature_s(&y, &ones(2), 1.0, &QuadratureSpec::default()).unwrap();
        let s = log_area_under_likelihood(&y, &ones(2), 1.0)
            .unwrap()
            .log_value;
        assert!((q - s).abs() < 1e-6);
    }

    #[test]
    fn rejects_three_coefficients_and_bad_specs() {
        let phi = DesignMatrix::new(Matrix::from_fn(4, 3, |i, j| {
            ((i + 1) as f64).powi(j as i32)
        }))
        .unwrap();
        assert!(matches!(
            quadrature_s(&[1.0, 2.0, 3.0, 4.0], &phi, 1.0, &QuadratureSpec::default()),
            Err(Error::DimensionTooLarge(3))
        ));
        assert!(QuadratureSpec {
            nodes: 800,
            k: 12.0
        }
        .validate()
        .is_err());
        assert!(QuadratureSpec { nodes: 801, k: 5.0 }.validate().is_err());
    }

    #[test]
    fn quadrature_stable_under_node_doubling() {
        let phi = DesignMatrix::new(
            Matrix::from_rows(&[vec![1.0, 0.2], vec![1.0, 1.1], vec![1.0, -0.7]]).unwrap(),
        )
        .unwrap();
        let y = [0.3, 1.2, -0.4];
        let a: f64 = quadrature_s(
            &y,
            &phi,
            0.4,
            &QuadratureSpec {
                nodes: 401,
                k: 12.0,
            },
        )
        .unwrap();
        let b = quadrature_s(
            &y,
            &phi,
            0.4,
            &QuadratureSpec {
                nodes: 801,
                k: 12.0,
            },
        )
        .unwrap();
        assert!((a - b).abs() < 1e-7, "{a} {b}");
    }

    #[test]
    fn scalar_z_matches_closed_form() {
        let prior = GaussianBelief::isotropic(1, 0.5, 2.0);
        let (est, se) = monte_carlo_z(&[1.4], &ones(1), 0.6, &prior, 200_000, 3).unwrap();
        let exact = log_normal_pdf(1.4, 0.5, 2.6);
        assert!((est - exact).abs() < 3.0 * se, "{est} {exact} {se}");
        let again = monte_carlo_z(&[1.4], &ones(1), 0.6, &prior, 200_000, 3).unwrap();
        assert_eq!((est, se), again);
    }

    #[test]
    fn resampling_constant_mean() {
        let stats = resampling_estimator_stats(&[1.5], &ones(5), 2.0, 4000, 9).unwrap();
        let v = stats.theta_cov[(0, 0)];
        // var of a sample variance of normals: 2 v² / (R - 1)
        let se_v = (2.0 * (0.4f64).powi(2) / 3999.0).sqrt();
        assert!((v - 0.4).abs() < 3.0 * se_v, "{v}");
        assert!(resampling_estimator_stats(&[1.5], &ones(5), 2.0, 999, 9).is_err());
    }
}
