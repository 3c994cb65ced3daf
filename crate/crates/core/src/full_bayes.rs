//! Full Bayesian treatment with a uniform prior on both `θ` and the model
//! parameters `η`: `p(η | y) ∝ S(y | η)` is discretized on a grid, then
//! `η_r` is drawn from the grid and `θ` from its exact Gaussian posterior.

use std::io::Write;

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::improper::{log_area_under_likelihood, posterior_theta_improper};
use crate::linalg::Cholesky;
use crate::logspace::{log_sum_exp, normalize_log_weights};
use crate::model::{
    build_design_matrix, log_likelihood, BasisFamily, Dataset, GaussianBelief, HyperParams,
};
use crate::scalar::Scalar;
use crate::selection::{apply_params, FreeParam};

/// Fraction of posterior mass on the grid boundary above which the grid is
/// suspected of truncating a non-integrable `S(y | η)`.
pub const BOUNDARY_MASS_WARN: f64 = 0.5;

#[derive(Debug, Clone, Serialize)]
pub struct EtaPosteriorGrid<T> {
    pub params: Vec<FreeParam>,
    pub grid: Vec<Vec<T>>,
    /// `log S(y | η_i)`; `-∞` where the design was rank deficient.
    pub log_weights: Vec<T>,
    pub normalized_probs: Vec<T>,
    pub flagged: Vec<usize>,
    pub boundary_mass: T,
    pub boundary_warning: bool,
    #[serde(skip)]
    fixed: HyperParams<T>,
    #[serde(skip)]
    posteriors: Vec<Option<GaussianBelief<T>>>,
}

impl<T: Scalar> EtaPosteriorGrid<T> {
    pub fn fixed(&self) -> &HyperParams<T> {
        &self.fixed
    }

    /// Exact `θ` posterior at grid point `i`, if that point is admissible.
    pub fn theta_posterior(&self, i: usize) -> Option<&GaussianBelief<T>> {
        self.posteriors.get(i).and_then(Option::as_ref)
    }

    pub fn mode_index(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.normalized_probs.iter().enumerate() {
            if p > self.normalized_probs[best] {
                best = i;
            }
        }
        best
    }

    /// Mixture mean `Σ_i p_i E[θ | y, η_i]`.
    pub fn mixture_mean(&self) -> Vec<T> {
        let m = self
            .posteriors
            .iter()
            .flatten()
            .next()
            .map_or(0, GaussianBelief::dim);
        let mut out = vec![T::zero(); m];
        for (p, post) in self.normalized_probs.iter().zip(&self.posteriors) {
            if let Some(post) = post {
                for (o, &mu) in out.iter_mut().zip(&post.mean) {
                    *o += *p * mu;
                }
            }
        }
        out
    }
}

fn boundary_indices<T: Scalar>(grid: &[Vec<T>]) -> Vec<bool> {
    let d = grid[0].len();
    let lo: Vec<T> = (0..d)
        .map(|j| grid.iter().map(|p| p[j]).fold(T::infinity(), T::min))
        .collect();
    let hi: Vec<T> = (0..d)
        .map(|j| grid.iter().map(|p| p[j]).fold(T::neg_infinity(), T::max))
        .collect();
    grid.iter()
        .map(|p| (0..d).any(|j| lo[j] < hi[j] && (p[j] == lo[j] || p[j] == hi[j])))
        .collect()
}

/// Evaluates `log S(y | η)` over `eta_grid` and normalizes.
pub fn build_eta_posterior<T: Scalar>(
    dataset: &Dataset<T>,
    family: &BasisFamily,
    params: &[FreeParam],
    eta_grid: &[Vec<T>],
    fixed: &HyperParams<T>,
) -> Result<EtaPosteriorGrid<T>> {
    if eta_grid.is_empty() {
        return Err(Error::InvalidParameter("empty eta grid".into()));
    }
    if eta_grid.iter().any(|p| p.len() != params.len()) {
        return Err(Error::DimensionMismatch("eta grid point length".into()));
    }
    let y = dataset.outputs();
    let evaluated: Vec<Option<(T, GaussianBelief<T>)>> = eta_grid
        .par_iter()
        .map(|eta| {
            let hp = apply_params(fixed, params, eta).ok()?;
            let phi = build_design_matrix(dataset, family, &hp.alpha).ok()?;
            let s = log_area_under_likelihood(y, &phi, hp.sigma_e2)
                .ok()?
                .log_value;
            let post = posterior_theta_improper(y, &phi, hp.sigma_e2).ok()?;
            s.is_finite().then_some((s, post))
        })
        .collect();

    let mut flagged = Vec::new();
    let mut log_weights = Vec::with_capacity(eta_grid.len());
    let mut posteriors = Vec::with_capacity(eta_grid.len());
    for (i, e) in evaluated.into_iter().enumerate() {
        match e {
            Some((s, post)) => {
                log_weights.push(s);
                posteriors.push(Some(post));
            }
            None => {
                flagged.push(i);
                log_weights.push(T::neg_infinity());
                posteriors.push(None);
            }
        }
    }
    let normalized_probs = normalize_log_weights(&log_weights)?;
    let on_boundary = boundary_indices(eta_grid);
    let boundary_mass: T = normalized_probs
        .iter()
        .zip(&on_boundary)
        .filter(|(_, &b)| b)
        .map(|(&p, _)| p)
        .sum();
    let boundary_warning = boundary_mass > T::lit(BOUNDARY_MASS_WARN);
    if boundary_warning {
        warn!("{boundary_mass} of the eta posterior mass lies on the grid boundary; S_Z may be infinite");
    }
    Ok(EtaPosteriorGrid {
        params: params.to_vec(),
        grid: eta_grid.to_vec(),
        log_weights,
        normalized_probs,
        flagged,
        boundary_mass,
        boundary_warning,
        fixed: fixed.clone(),
        posteriors,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FullBayesSamples<T> {
    /// Grid index of each `η_r`.
    pub eta_index: Vec<usize>,
    pub eta_samples: Vec<Vec<T>>,
    /// `theta_samples[r * n_inner + n] = θ_{r,n}`.
    pub theta_samples: Vec<Vec<T>>,
    pub n_inner: usize,
}

impl<T: Scalar> FullBayesSamples<T> {
    /// Columns `run_id, <eta names...>, theta_1, ..., theta_M`; one row per
    /// `θ` draw.
    pub fn write_csv<W: Write>(&self, out: W, params: &[FreeParam]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let m = self.theta_samples.first().map_or(0, Vec::len);
        let mut header = vec!["run_id".to_string()];
        header.extend(params.iter().map(FreeParam::name));
        header.extend((1..=m).map(|j| format!("theta_{j}")));
        w.write_record(&header)?;
        for (k, theta) in self.theta_samples.iter().enumerate() {
            let r = k / self.n_inner;
            let mut rec = vec![r.to_string()];
            rec.extend(self.eta_samples[r].iter().map(|v| v.to_string()));
            rec.extend(theta.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws `η_1..η_R` from the grid posterior and `N_inner` coefficient vectors
/// from `p(θ | y, η_r)` for each.
pub fn sample_full_bayes<T: Scalar>(
    grid: &EtaPosteriorGrid<T>,
    runs: usize,
    n_inner: usize,
    seed: u64,
) -> Result<FullBayesSamples<T>> {
    if runs == 0 || n_inner == 0 {
        return Err(Error::InvalidParameter(
            "R and N_inner must be at least 1".into(),
        ));
    }
    let probs: Vec<f64> = grid
        .normalized_probs
        .iter()
        .map(|p| p.to_f64_lossy())
        .collect();
    let categorical = WeightedIndex::new(&probs)
        .map_err(|e| Error::InvalidParameter(format!("grid probabilities: {e}")))?;
    let mut factors: Vec<Option<Cholesky<T>>> = vec![None; grid.grid.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut eta_index = Vec::with_capacity(runs);
    let mut eta_samples = Vec::with_capacity(runs);
    let mut theta_samples = Vec::with_capacity(runs * n_inner);
    for _ in 0..runs {
        let i = categorical.sample(&mut rng);
        let post = grid
            .theta_posterior(i)
            .ok_or_else(|| Error::InvalidParameter("sampled a flagged grid point".into()))?;
        if factors[i].is_none() {
            factors[i] = Some(Cholesky::new(&post.cov, T::zero())?);
        }
        let chol = factors[i].as_ref().expect("factor cached above");
        for _ in 0..n_inner {
            let z: Vec<T> = (0..post.dim())
                .map(|_| T::lit(StandardNormal.sample(&mut rng)))
                .collect();
            let dev = chol.lower_mul(&z);
            theta_samples.push(post.mean.iter().zip(dev).map(|(&m, d)| m + d).collect());
        }
        eta_index.push(i);
        eta_samples.push(grid.grid[i].clone());
    }
    Ok(FullBayesSamples {
        eta_index,
        eta_samples,
        theta_samples,
        n_inner,
    })
}

/// `log Σ_i p(η_i | y) ℓ(y | θ, η_i)`, the grid version of the likelihood
/// averaged over the model parameters.
pub fn averaged_model_loglik<T: Scalar>(
    grid: &EtaPosteriorGrid<T>,
    dataset: &Dataset<T>,
    family: &BasisFamily,
    theta: &[T],
) -> Result<T> {
    let y = dataset.outputs();
    let terms: Vec<T> = grid
        .grid
        .iter()
        .zip(&grid.normalized_probs)
        .map(|(eta, &p)| {
            if p <= T::zero() {
                return Ok(T::neg_infinity());
            }
            let hp = apply_params(&grid.fixed, &grid.params, eta)?;
            let phi = build_design_matrix(dataset, family, &hp.alpha)?;
            Ok(p.ln() + log_likelihood(y, &phi, theta, hp.sigma_e2)?)
        })
        .collect::<Result<_>>()?;
    Ok(log_sum_exp(&terms))
}
