//! Data model for the linear-in-parameters regression `y = Φ(α) θ + e`,
//! `e ~ N(0, σ_e² I)`, the closed basis families, and classical maximum
//! likelihood estimators.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq, sub_vec, Cholesky, Matrix, RANK_TOL};
use crate::scalar::Scalar;

/// Paired observations `(x_n, y_n)`, `n = 1..N`, inputs of dimension `d_X`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    inputs: Matrix<T>,
    outputs: Vec<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(inputs: Matrix<T>, outputs: Vec<T>) -> Result<Self> {
        if outputs.is_empty() {
            return Err(Error::DimensionMismatch("dataset needs N >= 1".into()));
        }
        if inputs.nrows() != outputs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} input rows but {} outputs",
                inputs.nrows(),
                outputs.len()
            )));
        }
        if !inputs.is_finite() || outputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite dataset entry".into()));
        }
        Ok(Self { inputs, outputs })
    }

    /// One-dimensional inputs.
    pub fn from_scalar_inputs(x: &[T], y: Vec<T>) -> Result<Self> {
        Self::new(Matrix::column(x), y)
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> &Matrix<T> {
        &self.inputs
    }

    pub fn input(&self, n: usize) -> &[T] {
        self.inputs.row(n)
    }

    pub fn outputs(&self) -> &[T] {
        &self.outputs
    }

    /// Same inputs, new outputs.
    pub fn with_outputs(&self, outputs: Vec<T>) -> Result<Self> {
        Self::new(self.inputs.clone(), outputs)
    }
}

/// Basis functions `φ_m(x, α)`.
///
/// Parameter layout of `α` per family (`d` is the input dimension):
///
/// | family          | `M`          | `α`                                     |
/// |-----------------|--------------|-----------------------------------------|
/// | `Constant`      | 1            | empty                                   |
/// | `Polynomial`    | `degree + 1` | empty (requires `d = 1`)                |
/// | `GaussianRbf`   | `count`      | `count * d` centers, then one width `ℓ` |
/// | `ExpAbs`        | `count`      | `count * d` centers                     |
///
/// `GaussianRbf` evaluates `exp(-‖x - c_m‖² / (2ℓ²))` and `ExpAbs` evaluates
/// `exp(‖x - c_m‖)`. New families are added as enum variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BasisFamily {
    Constant,
    Polynomial { degree: usize },
    GaussianRbf { count: usize },
    ExpAbs { count: usize },
}

impl BasisFamily {
    pub fn num_basis(&self) -> usize {
        match *self {
            Self::Constant => 1,
            Self::Polynomial { degree } => degree + 1,
            Self::GaussianRbf { count } | Self::ExpAbs { count } => count,
        }
    }

    pub fn param_len(&self, input_dim: usize) -> usize {
        match *self {
            Self::Constant | Self::Polynomial { .. } => 0,
            Self::GaussianRbf { count } => count * input_dim + 1,
            Self::ExpAbs { count } => count * input_dim,
        }
    }

    fn validate(&self, input_dim: usize, alpha_len: usize) -> Result<()> {
        if self.num_basis() == 0 {
            return Err(Error::DimensionMismatch("basis family with M = 0".into()));
        }
        if matches!(self, Self::Polynomial { .. }) && input_dim != 1 {
            return Err(Error::DimensionMismatch(format!(
                "polynomial basis needs scalar inputs, got d = {input_dim}"
            )));
        }
        let want = self.param_len(input_dim);
        if alpha_len != want {
            return Err(Error::DimensionMismatch(format!(
                "{self:?} with d = {input_dim} expects {want} basis parameters, got {alpha_len}"
            )));
        }
        Ok(())
    }

    /// Feature vector `φ(x) = [φ_1(x, α), ..., φ_M(x, α)]`.
    pub fn features<T: Scalar>(&self, x: &[T], alpha: &[T]) -> Result<Vec<T>> {
        let d = x.len();
        self.validate(d, alpha.len())?;
        let dist = |m: usize| -> T {
            let c = &alpha[m * d..(m + 1) * d];
            norm_sq(&sub_vec(x, c)).sqrt()
        };
        Ok(match *self {
            Self::Constant => vec![T::one()],
            Self::Polynomial { degree } => {
                let mut out = Vec::with_capacity(degree + 1);
                let mut p = T::one();
                for _ in 0..=degree {
                    out.push(p);
                    p *= x[0];
                }
                out
            }
            Self::GaussianRbf { count } => {
                let width = alpha[count * d];
                if !(width > T::zero()) {
                    return Err(Error::InvalidParameter("RBF width must be > 0".into()));
                }
                let denom = T::lit(2.0) * width * width;
                (0..count)
                    .map(|m| (-(dist(m).powi(2)) / denom).exp())
                    .collect()
            }
            Self::ExpAbs { count } => (0..count).map(|m| dist(m).exp()).collect(),
        })
    }
}

/// Hyperparameters `λ`: basis parameters, noise variance and the optional
/// isotropic Gaussian prior `N(μ_p 1, σ_p² I)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperParams<T> {
    pub alpha: Vec<T>,
    pub sigma_e2: T,
    pub prior_scale: Option<T>,
    pub prior_mean: Option<T>,
}

impl<T: Scalar> HyperParams<T> {
    pub fn new(alpha: Vec<T>, sigma_e2: T) -> Result<Self> {
        let hp = Self {
            alpha,
            sigma_e2,
            prior_scale: None,
            prior_mean: None,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn with_prior(mut self, scale: T, mean: T) -> Result<Self> {
        self.prior_scale = Some(scale);
        self.prior_mean = Some(mean);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_e2 > T::zero()) || !self.sigma_e2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma_e2 must be positive, got {}",
                self.sigma_e2
            )));
        }
        if let Some(s) = self.prior_scale {
            if !(s > T::zero()) || !s.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "prior scale must be positive, got {s}"
                )));
            }
        }
        if self.alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter("non-finite alpha".into()));
        }
        Ok(())
    }

    /// The isotropic prior over `M` coefficients, if one is configured.
    pub fn prior(&self, m: usize) -> Option<GaussianBelief<T>> {
        self.prior_scale
            .map(|s| GaussianBelief::isotropic(m, self.prior_mean.unwrap_or_else(T::zero), s))
    }
}

/// Design matrix `Φ` with its Gram matrix `ΦᵀΦ` factored at construction.
///
/// Construction fails for `M > N` or a Gram pivot below `1e-12 × max diag`,
/// so every value of this type has full column rank.
#[derive(Debug, Clone)]
pub struct DesignMatrix<T> {
    phi: Matrix<T>,
    gram: Matrix<T>,
    gram_chol: Cholesky<T>,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn new(phi: Matrix<T>) -> Result<Self> {
        if phi.nrows() == 0 || phi.ncols() == 0 {
            return Err(Error::DimensionMismatch("empty design matrix".into()));
        }
        if phi.ncols() > phi.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "M = {} > N = {} is not supported",
                phi.ncols(),
                phi.nrows()
            )));
        }
        if !phi.is_finite() {
            return Err(Error::InvalidParameter(
                "non-finite design matrix entry".into(),
            ));
        }
        let gram = phi.gram();
        let gram_chol = Cholesky::new(&gram, T::lit(RANK_TOL))?;
        Ok(Self {
            phi,
            gram,
            gram_chol,
        })
    }

    pub fn phi(&self) -> &Matrix<T> {
        &self.phi
    }

    pub fn gram(&self) -> &Matrix<T> {
        &self.gram
    }

    pub fn gram_cholesky(&self) -> &Cholesky<T> {
        &self.gram_chol
    }

    /// `N`.
    pub fn n_obs(&self) -> usize {
        self.phi.nrows()
    }

    /// `M`.
    pub fn n_basis(&self) -> usize {
        self.phi.ncols()
    }

    /// `log det(ΦᵀΦ)` from the Cholesky pivots.
    pub fn log_det_gram(&self) -> T {
        self.gram_chol.log_det()
    }

    pub(crate) fn check_y(&self, y: &[T]) -> Result<()> {
        if y.len() != self.n_obs() {
            return Err(Error::DimensionMismatch(format!(
                "y has length {} but design has N = {}",
                y.len(),
                self.n_obs()
            )));
        }
        Ok(())
    }

    /// Least squares fit: `θ̂ = (ΦᵀΦ)⁻¹Φᵀy`, `f̂ = Φθ̂`, `‖y - f̂‖²`.
    pub fn least_squares(&self, y: &[T]) -> Result<LeastSquares<T>> {
        self.check_y(y)?;
        let theta = self.gram_chol.solve(&self.phi.t_matvec(y)?)?;
        let fitted = self.phi.matvec(&theta)?;
        let mut rss = norm_sq(&sub_vec(y, &fitted));
        // residual at rounding level: y lies in the column space
        let floor =
            (T::epsilon() * T::lit(16.0)).powi(2) * T::from_usize_lossy(y.len()) * norm_sq(y);
        if rss <= floor {
            rss = T::zero();
        }
        Ok(LeastSquares { theta, fitted, rss })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares<T> {
    pub theta: Vec<T>,
    pub fitted: Vec<T>,
    /// `‖y - Φθ̂‖²`, computed from the residual vector and snapped to zero
    /// when it is at rounding level.
    pub rss: T,
}

/// Gaussian over a coefficient vector or a latent function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianBelief<T> {
    pub mean: Vec<T>,
    pub cov: Matrix<T>,
}

impl<T: Scalar> GaussianBelief<T> {
    pub fn new(mean: Vec<T>, cov: Matrix<T>) -> Result<Self> {
        if !cov.is_square() || cov.nrows() != mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "mean of length {} with {}x{} covariance",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let asym = cov.asymmetry();
        if asym > T::lit(1e-10) {
            return Err(Error::InvalidParameter(format!(
                "covariance asymmetric (relative {asym})"
            )));
        }
        Ok(Self { mean, cov })
    }

    /// `N(μ 1, s I)`.
    pub fn isotropic(dim: usize, mean: T, var: T) -> Self {
        Self {
            mean: vec![mean; dim],
            cov: Matrix::identity(dim).scale(var),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Per-coordinate standard deviations.
    pub fn std_devs(&self) -> Vec<T> {
        self.cov
            .diag()
            .into_iter()
            .map(|v| v.max(T::zero()).sqrt())
            .collect()
    }

    /// Moments of the linear functional `aᵀx`.
    pub fn project(&self, a: &[T]) -> Result<(T, T)> {
        if a.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "feature of length {} for a {}-dim belief",
                a.len(),
                self.dim()
            )));
        }
        let mu = dot(a, &self.mean);
        let var = dot(a, &self.cov.matvec(a)?).max(T::zero());
        Ok((mu, var))
    }
}

/// `Φ[n][m] = φ_m(x_n, α)` with rank check.
pub fn build_design_matrix<T: Scalar>(
    dataset: &Dataset<T>,
    family: &BasisFamily,
    alpha: &[T],
) -> Result<DesignMatrix<T>> {
    family.validate(dataset.input_dim(), alpha.len())?;
    let n = dataset.len();
    let m = family.num_basis();
    let mut data = Vec::with_capacity(n * m);
    for i in 0..n {
        data.extend(family.features(dataset.input(i), alpha)?);
    }
    DesignMatrix::new(Matrix::from_row_major(n, m, data)?)
}

pub(crate) fn check_sigma<T: Scalar>(sigma_e2: T) -> Result<()> {
    if !(sigma_e2 > T::zero()) || !sigma_e2.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sigma_e2 must be positive and finite, got {sigma_e2}"
        )));
    }
    Ok(())
}

/// `log ℓ(y | θ) = -N/2 log(2πσ_e²) - ‖y - Φθ‖² / (2σ_e²)`.
pub fn log_likelihood<T: Scalar>(
    y: &[T],
    phi: &DesignMatrix<T>,
    theta: &[T],
    sigma_e2: T,
) -> Result<T> {
    phi.check_y(y)?;
    check_sigma(sigma_e2)?;
    let resid = sub_vec(y, &phi.phi().matvec(theta)?);
    Ok(gaussian_log_lik(norm_sq(&resid), y.len(), sigma_e2))
}

/// Log-likelihood from a residual sum of squares.
#[inline]
pub(crate) fn gaussian_log_lik<T: Scalar>(rss: T, n: usize, sigma_e2: T) -> T {
    let half = T::lit(0.5);
    -half * T::from_usize_lossy(n) * (T::ln_two_pi() + sigma_e2.ln())
        - rss / (T::lit(2.0) * sigma_e2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlEstimate<T> {
    pub theta: Vec<T>,
    /// `‖y - Φθ̂‖² / N`, consistent but biased.
    pub sigma2: T,
}

pub fn ml_estimate<T: Scalar>(y: &[T], phi: &DesignMatrix<T>) -> Result<MlEstimate<T>> {
    let ls = phi.least_squares(y)?;
    Ok(MlEstimate {
        theta: ls.theta,
        sigma2: ls.rss / T::from_usize_lossy(y.len()),
    })
}

/// Sampling distribution of `θ̂_ML` over repeated noise draws:
/// `N(θ_true, σ_e² (ΦᵀΦ)⁻¹)`.
pub fn ml_sampling_distribution<T: Scalar>(
    theta_true: &[T],
    phi: &DesignMatrix<T>,
    sigma_e2: T,
) -> Result<GaussianBelief<T>> {
    check_sigma(sigma_e2)?;
    if theta_true.len() != phi.n_basis() {
        return Err(Error::DimensionMismatch(format!(
            "theta of length {} for M = {}",
            theta_true.len(),
            phi.n_basis()
        )));
    }
    let cov = phi.gram_cholesky().inverse().scale(sigma_e2);
    GaussianBelief::new(theta_true.to_vec(), cov)
}
