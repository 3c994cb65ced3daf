//! Inference under a proper Gaussian prior `θ ~ N(μ_θ, Σ_θ)` and the
//! behaviour of the marginal likelihood as the prior is made diffuse.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::improper::EvidenceReport;
use crate::linalg::{
    dot, max_abs_vec, norm_sq, sub_vec, Cholesky, Matrix, SymmetricEigen, RANK_TOL,
};
use crate::model::{check_sigma, BasisFamily, DesignMatrix, GaussianBelief};
use crate::scalar::Scalar;

/// Relative tolerance for the M×M vs N×N posterior routes.
pub const ROUTE_TOL: f64 = 1e-10;
/// Relative tolerance for the Woodbury vs direct fitting term.
pub const LADDER_TOL: f64 = 1e-8;

fn prior_cholesky<T: Scalar>(prior: &GaussianBelief<T>, m: usize) -> Result<Cholesky<T>> {
    if prior.dim() != m {
        return Err(Error::DimensionMismatch(format!(
            "prior of dimension {} for M = {m}",
            prior.dim()
        )));
    }
    Cholesky::new(&prior.cov, T::lit(RANK_TOL)).map_err(|_| Error::SingularPrior)
}

/// `ΦΣ_θΦᵀ + σ_e² I_N`, the marginal covariance of `y`.
pub fn marginal_covariance<T: Scalar>(
    phi: &DesignMatrix<T>,
    sigma_e2: T,
    prior: &GaussianBelief<T>,
) -> Result<Matrix<T>> {
    check_sigma(sigma_e2)?;
    if prior.dim() != phi.n_basis() {
        return Err(Error::DimensionMismatch("prior dimension".into()));
    }
    let p = phi.phi();
    let ps = p.matmul(&prior.cov)?;
    let mut k = ps.matmul(&p.transpose())?.add_diag(sigma_e2);
    k.symmetrize();
    Ok(k)
}

/// Coefficient posterior under a Gaussian prior, carrying what the predictive
/// Woodbury route needs.
#[derive(Debug, Clone)]
pub struct GaussianPosterior<T> {
    pub belief: GaussianBelief<T>,
    /// Max relative gap between the two routes for the mean.
    pub mean_discrepancy: T,
    /// Max relative gap between the two routes for the covariance.
    pub cov_discrepancy: T,
    prior: GaussianBelief<T>,
    phi: Matrix<T>,
    k_chol: Cholesky<T>,
}

impl<T: Scalar> GaussianPosterior<T> {
    pub fn prior(&self) -> &GaussianBelief<T> {
        &self.prior
    }
}

fn route_check<T: Scalar>(what: &'static str, discrepancy: T) -> Result<()> {
    if discrepancy <= T::lit(ROUTE_TOL) {
        Ok(())
    } else {
        Err(Error::RouteDisagreement {
            what,
            discrepancy: discrepancy.to_f64_lossy(),
            tolerance: ROUTE_TOL,
        })
    }
}

/// Posterior `N(μ_θ|y, Σ_θ|y)`, computed both as
/// `μ + (ΦᵀΦ + σ_e²Σ⁻¹)⁻¹Φᵀ(y - Φμ)` and as `μ + ΣΦᵀ(ΦΣΦᵀ + σ_e²I)⁻¹(y - Φμ)`.
///
/// The two routes must agree to `1e-10` relative to the magnitude of the
/// terms being combined; the M×M result is returned.
pub fn posterior_theta_gaussian<T: Scalar>(
    y: &[T],
    phi: &DesignMatrix<T>,
    sigma_e2: T,
    prior: &GaussianBelief<T>,
) -> Result<GaussianPosterior<T>> {
    check_sigma(sigma_e2)?;
    phi.check_y(y)?;
    let m = phi.n_basis();
    let prior_chol = prior_cholesky(prior, m)?;
    let p = phi.phi();
    let r = sub_vec(y, &p.matvec(&prior.mean)?);

    // M×M route
    let a = phi.gram().add(&prior_chol.inverse().scale(sigma_e2))?;
    let a_chol = Cholesky::new(&a, T::lit(RANK_TOL)).map_err(|_| Error::SingularPrior)?;
    let shift_m = a_chol.solve(&p.t_matvec(&r)?)?;
    let mean_m: Vec<T> = prior
        .mean
        .iter()
        .zip(&shift_m)
        .map(|(&a, &b)| a + b)
        .collect();
    let cov_m = a_chol.inverse().scale(sigma_e2);

    // N×N route
    let k = marginal_covariance(phi, sigma_e2, prior)?;
    let k_chol = Cholesky::new(&k, T::lit(RANK_TOL))?;
    let sigma_phit = prior.cov.matmul(&p.transpose())?;
    let w = k_chol.solve(&r)?;
    let shift_n = sigma_phit.matvec(&w)?;
    let mean_n: Vec<T> = prior
        .mean
        .iter()
        .zip(&shift_n)
        .map(|(&a, &b)| a + b)
        .collect();
    let reduce = k_chol.solve_matrix(&sigma_phit.transpose())?;
    let mut cov_n = prior.cov.sub(&sigma_phit.matmul(&reduce)?)?;
    cov_n.symmetrize();

    let mut mean_scale = max_abs_vec(&mean_m).max(max_abs_vec(&prior.mean));
    for i in 0..m {
        let row = sigma_phit.row(i);
        let s = row
            .iter()
            .zip(&w)
            .fold(T::zero(), |acc, (&a, &b)| acc + (a * b).abs());
        mean_scale = mean_scale.max(s);
    }
    let mean_gap = max_abs_vec(&sub_vec(&mean_m, &mean_n));
    let mean_discrepancy = if mean_scale > T::zero() {
        mean_gap / mean_scale
    } else {
        mean_gap
    };
    let cov_scale = cov_m.max_abs().max(prior.cov.max_abs());
    let cov_discrepancy = cov_m.sub(&cov_n)?.max_abs() / cov_scale;
    route_check("posterior mean", mean_discrepancy)?;
    route_check("posterior covariance", cov_discrepancy)?;

    Ok(GaussianPosterior {
        belief: GaussianBelief::new(mean_m, cov_m)?,
        mean_discrepancy,
        cov_discrepancy,
        prior: prior.clone(),
        phi: p.clone(),
        k_chol,
    })
}

/// Predictive mean and variance of `f(x)`.
///
/// The variance is evaluated directly as `φᵀΣ_θ|yφ` and through the
/// Woodbury form `φᵀΣφ - φᵀΣΦᵀ(ΦΣΦᵀ + σ_e²I)⁻¹ΦΣφ`; the two must agree to
/// `1e-10` relative to `φᵀΣφ`.
pub fn predictive_f_gaussian<T: Scalar>(
    x: &[T],
    family: &BasisFamily,
    alpha: &[T],
    posterior: &GaussianPosterior<T>,
) -> Result<(T, T)> {
    let feat = family.features(x, alpha)?;
    predictive_from_features(&feat, posterior)
}

pub fn predictive_from_features<T: Scalar>(
    feat: &[T],
    posterior: &GaussianPosterior<T>,
) -> Result<(T, T)> {
    let (mu, var) = posterior.belief.project(feat)?;
    let sphi = posterior.prior.cov.matvec(feat)?;
    let prior_var = dot(feat, &sphi);
    let u = posterior.phi.matvec(&sphi)?;
    let var_w = (prior_var - posterior.k_chol.inv_quad_form(&u)?).max(T::zero());
    let scale = prior_var.max(var);
    if scale > T::zero() {
        route_check("predictive variance", (var - var_w).abs() / scale)?;
    }
    Ok((mu, var))
}

/// `log Z = log N(y | Φμ_θ, ΦΣ_θΦᵀ + σ_e²I_N)` split into
/// fitting `½ rᵀK⁻¹r`, penalty `½ log det K` and constant `N/2 log 2π`.
pub fn log_marginal_likelihood<T: Scalar>(
    y: &[T],
    phi: &DesignMatrix<T>,
    sigma_e2: T,
    prior: &GaussianBelief<T>,
) -> Result<EvidenceReport<T>> {
    check_sigma(sigma_e2)?;
    phi.check_y(y)?;
    prior_cholesky(prior, phi.n_basis())?;
    let k = marginal_covariance(phi, sigma_e2, prior)?;
    let k_chol = Cholesky::new(&k, T::lit(RANK_TOL))?;
    let r = sub_vec(y, &phi.phi().matvec(&prior.mean)?);
    let half = T::lit(0.5);
    Ok(EvidenceReport::from_terms(
        half * k_chol.inv_quad_form(&r)?,
        half * k_chol.log_det(),
        half * T::from_usize_lossy(y.len()) * T::ln_two_pi(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LadderPoint<T> {
    pub sigma_p2: T,
    pub log_z: T,
    /// Fitting term of `-log Z` from the Woodbury-reduced M×M form.
    pub part1: T,
    /// Penalty term `½ log det(σ_p²ΦΦᵀ + σ_e²I)`.
    pub part2: T,
    /// Fitting term from a direct N×N factorization, for comparison.
    pub part1_direct: T,
}

/// Evaluates `-log Z` along increasing prior variances `σ_p²` for the
/// isotropic prior `N(μ_p 1, σ_p² I)`.
///
/// `ΦᵀΦ` is eigendecomposed once; every ladder point then costs `O(M)` for
/// the Woodbury fitting term
/// `(rᵀr - rᵀΦ((σ_e²/σ_p²)I + ΦᵀΦ)⁻¹Φᵀr) / (2σ_e²)`, `r = y - Φμ_p 1`,
/// and for the penalty via `det(σ_p²ΦΦᵀ + σ_e²I) = σ_e^{2(N-M)} Π(σ_p²λ_i + σ_e²)`.
///
/// Each point is also checked against a direct N×N Cholesky evaluation. The
/// agreement tolerance is `1e-8` widened by `64 ε κ`, where `κ` is the
/// condition number of the N×N matrix; the direct route is what loses
/// accuracy when `σ_p²` is huge.
pub fn diffuse_limit_decomposition<T: Scalar>(
    y: &[T],
    phi: &DesignMatrix<T>,
    sigma_e2: T,
    sigma_p2_ladder: &[T],
    mu_p: T,
) -> Result<Vec<LadderPoint<T>>> {
    check_sigma(sigma_e2)?;
    phi.check_y(y)?;
    if sigma_p2_ladder.is_empty() {
        return Err(Error::InvalidParameter("empty sigma_p2 ladder".into()));
    }
    if sigma_p2_ladder
        .iter()
        .any(|s| !(*s > T::zero()) || !s.is_finite())
        || sigma_p2_ladder.windows(2).any(|w| !(w[1] > w[0]))
    {
        return Err(Error::InvalidParameter(
            "sigma_p2 ladder must be positive and strictly increasing".into(),
        ));
    }
    let (n, m) = (phi.n_obs(), phi.n_basis());
    let p = phi.phi();
    let r = sub_vec(y, &p.matvec(&vec![mu_p; m])?);
    let rr = norm_sq(&r);
    let eig = SymmetricEigen::new(phi.gram())?;
    let b = eig.vectors.t_matvec(&p.t_matvec(&r)?)?;
    let lambda_max = eig.values.iter().copied().fold(T::zero(), T::max);
    let ppt = p.matmul(&p.transpose())?;

    let half = T::lit(0.5);
    let two_s2 = T::lit(2.0) * sigma_e2;
    let const_term = half * T::from_usize_lossy(n) * T::ln_two_pi();
    let extra = T::from_usize_lossy(n - m) * sigma_e2.ln();

    sigma_p2_ladder
        .par_iter()
        .map(|&sp2| -> Result<LadderPoint<T>> {
            let a = sigma_e2 / sp2;
            let reduced = eig
                .values
                .iter()
                .zip(&b)
                .fold(T::zero(), |acc, (&l, &bi)| acc + bi * bi / (a + l));
            let part1 = (rr - reduced) / two_s2;
            let part2 = half
                * (extra
                    + eig
                        .values
                        .iter()
                        .fold(T::zero(), |acc, &l| acc + (sp2 * l + sigma_e2).ln()));

            let mut k = ppt.scale(sp2).add_diag(sigma_e2);
            k.symmetrize();
            let k_chol = Cholesky::new(&k, T::lit(RANK_TOL))?;
            let part1_direct = half * k_chol.inv_quad_form(&r)?;
            let kappa = (sp2 * lambda_max + sigma_e2) / sigma_e2;
            let tol = T::lit(LADDER_TOL) + T::lit(64.0) * T::epsilon() * kappa;
            let gap = (part1 - part1_direct).abs()
                / part1.abs().max(part1_direct.abs()).max(T::epsilon());
            if gap > tol {
                return Err(Error::RouteDisagreement {
                    what: "Woodbury fitting term",
                    discrepancy: gap.to_f64_lossy(),
                    tolerance: tol.to_f64_lossy(),
                });
            }
            Ok(LadderPoint {
                sigma_p2: sp2,
                log_z: -(part1 + part2 + const_term),
                part1,
                part2,
                part1_direct,
            })
        })
        .collect()
}

/// Geometric ladder of `count` points from `lo` to `hi` inclusive.
pub fn geometric_ladder<T: Scalar>(lo: T, hi: T, count: usize) -> Vec<T> {
    if count <= 1 {
        return vec![lo];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    let steps = T::from_usize_lossy(count - 1);
    (0..count)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == count - 1 {
                hi
            } else {
                (llo + (lhi - llo) * T::from_usize_lossy(i) / steps).exp()
            }
        })
        .collect()
}

/// CSV with columns `sigma_p2,log_Z,part1,part2`.
pub fn write_ladder_csv<T: Scalar, W: Write>(out: W, points: &[LadderPoint<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sigma_p2", "log_Z", "part1", "part2"])?;
    for p in points {
        w.write_record([
            p.sigma_p2.to_string(),
            p.log_z.to_string(),
            p.part1.to_string(),
            p.part2.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::improper::{log_area_under_likelihood, posterior_theta_improper};

    fn ones(n: usize) -> DesignMatrix<f64> {
        DesignMatrix::new(Matrix::from_fn(n, 1, |_, _| 1.0)).unwrap()
    }

    fn design5x2() -> DesignMatrix<f64> {
        DesignMatrix::new(
            Matrix::from_rows(&[
                vec![1.0, -0.4],
                vec![0.8, 1.3],
                vec![-0.2, 0.7],
                vec![1.5, 0.1],
                vec![0.3, -1.1],
            ])
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn diffuse_prior_recovers_improper_mean() {
        let eye = DesignMatrix::new(Matrix::<f64>::identity(2)).unwrap();
        let y = [1.5, -0.7];
        let prior = GaussianBelief::isotropic(2, 0.0, 1e12);
        let post = posterior_theta_gaussian(&y, &eye, 1.0, &prior).unwrap();
        for (a, b) in post.belief.mean.iter().zip(&y) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn dominating_prior_pins_mean_at_zero() {
        let prior = GaussianBelief::isotropic(2, 0.0, 1e-12);
        let post = posterior_theta_gaussian(&[3.0, 1.0, -2.0, 0.5, 4.0], &design5x2(), 0.5, &prior)
            .unwrap();
        assert!(post.belief.mean.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn routes_agree_on_fixed_instance() {
        let prior = GaussianBelief::new(
            vec![0.5, -1.0],
            Matrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 0.8]]).unwrap(),
        )
        .unwrap();
        let post = posterior_theta_gaussian(&[1.0, 0.2, -0.4, 2.2, 0.0], &design5x2(), 0.3, &prior)
            .unwrap();
        assert!(post.mean_discrepancy <= 1e-10);
        assert!(post.cov_discrepancy <= 1e-10);
    }

    #[test]
    fn singular_prior_is_rejected() {
        let prior = GaussianBelief::new(
            vec![0.0, 0.0],
            Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap(),
        )
        .unwrap();
        let y = [0.0; 5];
        assert!(matches!(
            posterior_theta_gaussian(&y, &design5x2(), 1.0, &prior),
            Err(Error::SingularPrior)
        ));
        assert!(matches!(
            log_marginal_likelihood(&y, &design5x2(), 1.0, &prior),
            Err(Error::SingularPrior)
        ));
    }

    #[test]
    fn predictive_null_feature_and_diffuse_limit() {
        let dm = design5x2();
        let y = [1.0, 0.2, -0.4, 2.2, 0.0];
        let prior = GaussianBelief::isotropic(2, 0.0, 1e10);
        let post = posterior_theta_gaussian(&y, &dm, 0.3, &prior).unwrap();
        assert_eq!(
            predictive_from_features(&[0.0, 0.0], &post).unwrap(),
            (0.0, 0.0)
        );

        let imp = posterior_theta_improper(&y, &dm, 0.3).unwrap();
        let feat = [0.7, -1.2];
        let (mu_g, var_g) = predictive_from_features(&feat, &post).unwrap();
        let (mu_i, var_i) = imp.project(&feat).unwrap();
        assert!((mu_g - mu_i).abs() <= 1e-5 * mu_i.abs());
        assert!((var_g - var_i).abs() <= 1e-5 * var_i);
    }

    #[test]
    fn scalar_marginal_likelihood() {
        let (y, sp2, se2) = (1.3, 2.0, 0.5);
        let z =
            log_marginal_likelihood(&[y], &ones(1), se2, &GaussianBelief::isotropic(1, 0.0, sp2))
                .unwrap();
        let v = sp2 + se2;
        let expect = -0.5 * (2.0 * std::f64::consts::PI * v).ln() - y * y / (2.0 * v);
        assert!((z.log_value - expect).abs() < 1e-14);
    }

    #[test]
    fn constant_design_marginal_covariance_structure() {
        let (sp2, se2) = (3.0, 0.25);
        let k =
            marginal_covariance(&ones(4), se2, &GaussianBelief::isotropic(1, 2.0, sp2)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { sp2 + se2 } else { sp2 };
                assert_eq!(k[(i, j)], want);
            }
        }
    }

    #[test]
    fn ladder_limit_and_monotonicity() {
        let dm = ones(2);
        let y = [-2.0, 2.0];
        let pts = diffuse_limit_decomposition(&y, &dm, 1.0, &[1e8], 0.0).unwrap();
        assert!((pts[0].part1 - 4.0).abs() < 1e-4);

        let ladder: Vec<f64> = (0..40).map(|i| 0.01 * 2f64.powi(i)).collect();
        let pts = diffuse_limit_decomposition(&y, &dm, 1.0, &ladder, 2.0).unwrap();
        assert!(pts.windows(2).all(|w| w[1].part2 > w[0].part2));
        let tail = &pts[20..];
        assert!(tail.windows(2).all(|w| w[1].log_z < w[0].log_z));
        let log_s = log_area_under_likelihood(&y, &dm, 1.0).unwrap().log_value;
        assert!(pts.last().unwrap().log_z < log_s);
    }

    #[test]
    fn ladder_matches_direct_log_z() {
        let dm = design5x2();
        let y = [1.0, 0.2, -0.4, 2.2, 0.0];
        let ladder = [0.1, 1.0, 10.0];
        let pts = diffuse_limit_decomposition(&y, &dm, 0.4, &ladder, 0.5).unwrap();
        for p in &pts {
            let z = log_marginal_likelihood(
                &y,
                &dm,
                0.4,
                &GaussianBelief::isotropic(2, 0.5, p.sigma_p2),
            )
            .unwrap();
            assert!((z.log_value - p.log_z).abs() < 1e-10 * z.log_value.abs().max(1.0));
            assert!((z.penalty_term - p.part2).abs() < 1e-10);
        }
    }

    #[test]
    fn ladder_rejects_non_increasing() {
        assert!(diffuse_limit_decomposition(&[1.0, 2.0], &ones(2), 1.0, &[1.0, 1.0], 0.0).is_err());
        assert!(
            diffuse_limit_decomposition(&[1.0, 2.0], &ones(2), 1.0, &[-1.0, 1.0], 0.0).is_err()
        );
    }

    #[test]
    fn geometric_ladder_endpoints() {
        let l: Vec<f64> = geometric_ladder(0.01, 1e12, 71);
        assert_eq!(l.len(), 71);
        assert_eq!(l[0], 0.01);
        assert_eq!(l[70], 1e12);
        assert!((l[5] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ladder_csv_columns() {
        let pts =
            diffuse_limit_decomposition(&[-2.0, 2.0], &ones(2), 1.0, &[1.0, 2.0], 2.0).unwrap();
        let mut buf = Vec::new();
        write_ladder_csv(&mut buf, &pts).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("sigma_p2,log_Z,part1,part2\n"));
        assert_eq!(s.lines().count(), 3);
    }
}
