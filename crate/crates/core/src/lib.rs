//! Exact Bayesian inference and hyperparameter selection for linear-in-the-
//! parameters regression `y = Φ(α)θ + e`.
//!
//! Two evidences are contrasted:
//!
//! * the area under the likelihood `S(y | λ)`, obtained with a flat improper
//!   prior on `θ` ([`improper`]). It is only meaningful up to a constant, so it
//!   is used for ratios, weights and maximization within one model family;
//! * the proper marginal likelihood `Z(y | λ)` under a Gaussian prior
//!   ([`gaussian`]), which tends to zero as the prior is made diffuse and never
//!   approaches `S`.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below cover the usual case.

// NaN must fail positivity checks, hence `!(x > 0)` throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod experiments;
pub mod full_bayes;
pub mod gaussian;
pub mod improper;
pub mod io;
pub mod linalg;
pub mod logspace;
pub mod model;
pub mod oracles;
pub mod scalar;
pub mod selection;
pub mod simplex;

pub use error::{Error, Result};
pub use gaussian::{
    diffuse_limit_decomposition, log_marginal_likelihood, posterior_theta_gaussian,
    predictive_f_gaussian, GaussianPosterior, LadderPoint,
};
pub use improper::{
    cost_alpha, log_area_under_likelihood, posterior_theta_improper, predictive_f_improper,
    smoothing_improper, unbiased_noise_variance, EvidenceReport, Smoothing,
};
pub use linalg::{Cholesky, Matrix};
pub use model::{
    build_design_matrix, log_likelihood, ml_estimate, ml_sampling_distribution, BasisFamily,
    Dataset, DesignMatrix, GaussianBelief, HyperParams, MlEstimate,
};
pub use scalar::Scalar;
pub use selection::{
    bma_weights, empirical_bayes_optimize, log_bayes_factor, profile_likelihood, EvidenceKind,
    FreeParam, ModelScore, Objective, OptimizeResult, OptimizerConfig,
};

pub type Matrix64 = Matrix<f64>;
pub type Dataset64 = Dataset<f64>;
pub type DesignMatrix64 = DesignMatrix<f64>;
pub type GaussianBelief64 = GaussianBelief<f64>;
pub type HyperParams64 = HyperParams<f64>;
pub type EvidenceReport64 = EvidenceReport<f64>;
