//! Inference under the uniform improper prior `g(θ) ∝ 1`.
//!
//! The posterior over `θ` is the normalized likelihood, and the area under
//! the likelihood `S(y | λ) = ∫ ℓ(y | θ, λ) dθ` plays the role of a (fake)
//! evidence. Any constant multiplying the improper prior cancels in ratios of
//! `S`, so it is not represented here.

use log::warn;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq, Matrix};
use crate::model::{
    build_design_matrix, check_sigma, BasisFamily, Dataset, DesignMatrix, GaussianBelief,
};
use crate::scalar::Scalar;

/// `log_value = -(fitting_term + penalty_term + constant_term)`.
///
/// Used for both `log S` and `log Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvidenceReport<T> {
    pub log_value: T,
    pub fitting_term: T,
    pub penalty_term: T,
    pub constant_term: T,
}

impl<T: Scalar> EvidenceReport<T> {
    pub fn from_terms(fitting_term: T, penalty_term: T, constant_term: T) -> Self {
        Self {
            log_value: -(fitting_term + penalty_term + constant_term),
            fitting_term,
            penalty_term,
            constant_term,
        }
    }

    /// Negative log value, the cost being minimized.
    pub fn cost(&self) -> T {
        -self.log_value
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// `N(θ̂, σ_e² (ΦᵀΦ)⁻¹)` with `θ̂ = (ΦᵀΦ)⁻¹Φᵀy`.
pub fn posterior_theta_improper<T: Scalar>(
    y: &[T],
    phi: &DesignMatrix<T>,
    sigma_e2: T,
) -> Result<GaussianBelief<T>> {
    check_sigma(sigma_e2)?;
    let ls = phi.least_squares(y)?;
    let cov = phi.gram_cholesky().inverse().scale(sigma_e2);
    GaussianBelief::new(ls.theta, cov)
}

/// Predictive mean and variance of `f(x) = φ(x)ᵀθ` under a coefficient
/// posterior.
pub fn predictive_f_improper<T: Scalar>(
    x: &[T],
    family: &BasisFamily,
    alpha: &[T],
    posterior: &GaussianBelief<T>,
) -> Result<(T, T)> {
    let feat = family.features(x, alpha)?;
    posterior.project(&feat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Smoothing<T> {
    /// Posterior over `f = Φθ` at the training inputs.
    pub belief: GaussianBelief<T>,
    /// `‖y - f̂‖²`.
    pub rss: T,
    /// `yᵀy`.
    pub output_power: T,
    /// `f̂ᵀf̂`.
    pub fitted_power: T,
}

/// Posterior over the latent function at the inputs:
/// `N(Φ(ΦᵀΦ)⁻¹Φᵀy, σ_e² Φ(ΦᵀΦ)⁻¹Φᵀ)`.
///
/// Checks `f̂ᵀf̂ = yᵀΦ(ΦᵀΦ)⁻¹Φᵀy` and `‖y - f̂‖² = yᵀy - f̂ᵀf̂` to `1e-9`
/// relative to `yᵀy`, and the denoising inequality `yᵀy >= f̂ᵀf̂`.
pub fn smoothing_improper<T: Scalar>(
    y: &[T],
    phi: &DesignMatrix<T>,
    sigma_e2: T,
) -> Result<Smoothing<T>> {
    check_sigma(sigma_e2)?;
    let ls = phi.least_squares(y)?;
    let phit_y = phi.phi().t_matvec(y)?;
    let output_power = norm_sq(y);
    let fitted_power = norm_sq(&ls.fitted);
    let quad = dot(&phit_y, &ls.theta);

    let tol = T::lit(1e-9);
    let floor = T::min_positive_value();
    let check = |what: &'static str, a: T, b: T| -> Result<()> {
        if (a - b).abs() <= tol * output_power.max(floor) {
            Ok(())
        } else {
            Err(Error::RouteDisagreement {
                what,
                discrepancy: ((a - b).abs() / output_power.max(floor)).to_f64_lossy(),
                tolerance: 1e-9,
            })
        }
    };
    check(
        "fitted power vs projection quadratic form",
        fitted_power,
        quad,
    )?;
    check(
        "residual vs power difference",
        ls.rss,
        output_power - fitted_power,
    )?;
    if fitted_power > output_power * (T::one() + T::lit(1e-12)) {
        return Err(Error::RouteDisagreement {
            what: "denoising inequality",
            discrepancy: (fitted_power - output_power).to_f64_lossy(),
            tolerance: 0.0,
        });
    }

    // Φ(ΦᵀΦ)⁻¹Φᵀ = B Bᵀ with rows of B equal to L⁻¹φ_n.
    let chol = phi.gram_cholesky();
    let n = phi.n_obs();
    let b: Vec<Vec<T>> = (0..n).map(|i| chol.forward(phi.phi().row(i))).collect();
    let cov = Matrix::from_fn(n, n, |i, j| sigma_e2 * dot(&b[i], &b[j]));
    Ok(Smoothing {
        belief: GaussianBelief::new(ls.fitted, cov)?,
        rss: ls.rss,
        output_power,
        fitted_power,
    })
}

/// `log S(y | λ) = -[‖y-f̂‖²/(2σ_e²) + (N-M)/2 log(2πσ_e²) + ½ log det(ΦᵀΦ)]`.
pub fn log_area_under_likelihood<T: Scalar>(
    y: &[T],
    phi: &DesignMatrix<T>,
    sigma_e2: T,
) -> Result<EvidenceReport<T>> {
    check_sigma(sigma_e2)?;
    let ls = phi.least_squares(y)?;
    let half = T::lit(0.5);
    let dof = T::from_usize_lossy(phi.n_obs() - phi.n_basis());
    Ok(EvidenceReport::from_terms(
        ls.rss / (T::lit(2.0) * sigma_e2),
        half * phi.log_det_gram(),
        half * dof * (T::ln_two_pi() + sigma_e2.ln()),
    ))
}

/// `σ̂_e² = ‖y - f̂‖² / (N - M)`, the stationary point of `S` in `σ_e²`.
///
/// Returns `0` (with a warning) when `y` lies in the column space of `Φ`.
pub fn unbiased_noise_variance<T: Scalar>(y: &[T], phi: &DesignMatrix<T>) -> Result<T> {
    let (n, m) = (phi.n_obs(), phi.n_basis());
    if n == m {
        return Err(Error::DegenerateDof(n));
    }
    let ls = phi.least_squares(y)?;
    if ls.rss == T::zero() {
        warn!("degenerate fit: y lies in the column space of the design, noise variance estimate is 0");
    }
    Ok(ls.rss / T::from_usize_lossy(n - m))
}

/// Profiled cost `C(α) = (N-M)/2 log ‖y - f̂‖² + ½ log det(ΦᵀΦ)`.
///
/// The additive constant is fixed to 0, so only differences of `C` between
/// basis parameters carry meaning. `log_value` is `-C(α)`, which equals
/// `log S` at `σ̂_e²` up to an `α`-independent constant.
///
/// A perfect fit gives `C = -∞`; that value is returned (with a warning)
/// rather than an error so optimizers can discard it.
pub fn cost_alpha<T: Scalar>(
    dataset: &Dataset<T>,
    family: &BasisFamily,
    alpha: &[T],
) -> Result<EvidenceReport<T>> {
    let phi = build_design_matrix(dataset, family, alpha)?;
    cost_alpha_for_design(dataset.outputs(), &phi)
}

pub fn cost_alpha_for_design<T: Scalar>(
    y: &[T],
    phi: &DesignMatrix<T>,
) -> Result<EvidenceReport<T>> {
    let (n, m) = (phi.n_obs(), phi.n_basis());
    if n == m {
        return Err(Error::DegenerateDof(n));
    }
    let ls = phi.least_squares(y)?;
    let half = T::lit(0.5);
    let fitting = if ls.rss == T::zero() {
        warn!("degenerate fit: zero residual, C(alpha) = -inf");
        T::neg_infinity()
    } else {
        half * T::from_usize_lossy(n - m) * ls.rss.ln()
    };
    Ok(EvidenceReport::from_terms(
        fitting,
        half * phi.log_det_gram(),
        T::zero(),
    ))
}

/// `exp(-C(α)) = det(ΦᵀΦ)^{-1/2} ‖y - f̂‖^{-(N-M)}` evaluated as a product,
/// for cross-checking [`cost_alpha`] on small problems.
pub fn cost_alpha_product_form<T: Scalar>(y: &[T], phi: &DesignMatrix<T>) -> Result<T> {
    let ls = phi.least_squares(y)?;
    let det = phi
        .gram_cholesky()
        .lower()
        .diag()
        .into_iter()
        .fold(T::one(), |p, d| p * d);
    let dof = (phi.n_obs() - phi.n_basis()) as i32;
    Ok(T::one() / det * ls.rss.sqrt().powi(-dof))
}
