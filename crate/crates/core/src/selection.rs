//! Hyperparameter (type-2) selection: Bayes factors between evidences of one
//! kind, model-averaging weights, empirical Bayes by grid search plus simplex
//! refinement, and profile likelihoods.

use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::log_marginal_likelihood;
use crate::improper::{cost_alpha_for_design, log_area_under_likelihood};
use crate::logspace::normalize_log_weights;
use crate::model::{build_design_matrix, gaussian_log_lik, BasisFamily, Dataset, HyperParams};
use crate::scalar::Scalar;
use crate::simplex::{nelder_mead, SimplexOptions};

/// Whether an evidence came from an improper prior (defined up to a
/// constant) or a proper one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceKind {
    Fake,
    Proper,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelScore<T> {
    pub model_id: String,
    /// `log S` or `log Z`; `-∞` marks a rejected model.
    pub log_evidence: T,
    pub kind: EvidenceKind,
}

impl<T: Scalar> ModelScore<T> {
    pub fn new(model_id: impl Into<String>, log_evidence: T, kind: EvidenceKind) -> Self {
        Self {
            model_id: model_id.into(),
            log_evidence,
            kind,
        }
    }

    pub fn fake(model_id: impl Into<String>, log_evidence: T) -> Self {
        Self::new(model_id, log_evidence, EvidenceKind::Fake)
    }

    pub fn proper(model_id: impl Into<String>, log_evidence: T) -> Self {
        Self::new(model_id, log_evidence, EvidenceKind::Proper)
    }
}

/// `log(E_a / E_b)`.
pub fn log_bayes_factor<T: Scalar>(a: &ModelScore<T>, b: &ModelScore<T>) -> Result<T> {
    if a.kind != b.kind {
        return Err(Error::MixedKinds);
    }
    Ok(a.log_evidence - b.log_evidence)
}

/// Posterior model probabilities under a uniform model prior, via
/// log-sum-exp. Adding a constant to every score leaves them unchanged.
pub fn bma_weights<T: Scalar>(scores: &[ModelScore<T>]) -> Result<Vec<T>> {
    let Some(first) = scores.first() else {
        return Err(Error::InvalidParameter("no scores to weight".into()));
    };
    if scores.iter().any(|s| s.kind != first.kind) {
        return Err(Error::MixedKinds);
    }
    let logs: Vec<T> = scores.iter().map(|s| s.log_evidence).collect();
    normalize_log_weights(&logs)
}

/// A hyperparameter left free for optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FreeParam {
    /// Component `i` of the basis parameters `α`.
    Alpha(usize),
    SigmaE2,
    /// Prior variance `σ_p²`.
    SigmaP2,
}

impl FreeParam {
    pub fn name(&self) -> String {
        match self {
            Self::Alpha(i) => format!("alpha_{}", i + 1),
            Self::SigmaE2 => "sigma_e2".into(),
            Self::SigmaP2 => "sigma_p2".into(),
        }
    }
}

/// Apply free-parameter values on top of a fixed set.
pub fn apply_params<T: Scalar>(
    fixed: &HyperParams<T>,
    free: &[FreeParam],
    values: &[T],
) -> Result<HyperParams<T>> {
    let mut hp = fixed.clone();
    for (p, &v) in free.iter().zip(values) {
        match *p {
            FreeParam::Alpha(i) => {
                if i >= hp.alpha.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "alpha index {i} with {} components",
                        hp.alpha.len()
                    )));
                }
                hp.alpha[i] = v;
            }
            FreeParam::SigmaE2 => hp.sigma_e2 = v,
            FreeParam::SigmaP2 => hp.prior_scale = Some(v),
        }
    }
    hp.validate()?;
    Ok(hp)
}

/// Quantity maximized over the hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `log S(y | α, σ_e²)`.
    LogS,
    /// `log Z(y | α, σ_e², σ_p², μ_p)`; needs a prior scale.
    LogZ,
    /// `-C(α)`: `log S` with `σ_e²` profiled out, up to a constant.
    ProfiledLogS,
    /// `max_θ log ℓ(y | θ, α, σ_e²)`, the frequentist profile.
    ProfileLikelihood,
}

/// Evaluates `objective` at `hp`.
pub fn evaluate_objective<T: Scalar>(
    dataset: &Dataset<T>,
    family: &BasisFamily,
    objective: Objective,
    hp: &HyperParams<T>,
) -> Result<T> {
    let phi = build_design_matrix(dataset, family, &hp.alpha)?;
    let y = dataset.outputs();
    match objective {
        Objective::LogS => Ok(log_area_under_likelihood(y, &phi, hp.sigma_e2)?.log_value),
        Objective::LogZ => {
            let prior = hp.prior(phi.n_basis()).ok_or_else(|| {
                Error::InvalidParameter("log Z objective needs a prior scale".into())
            })?;
            Ok(log_marginal_likelihood(y, &phi, hp.sigma_e2, &prior)?.log_value)
        }
        Objective::ProfiledLogS => Ok(cost_alpha_for_design(y, &phi)?.log_value),
        Objective::ProfileLikelihood => {
            let ls = phi.least_squares(y)?;
            Ok(gaussian_log_lik(ls.rss, y.len(), hp.sigma_e2))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerConfig<T> {
    /// `(lo, hi)` per free parameter.
    pub bounds: Vec<(T, T)>,
    pub grid_points: Vec<usize>,
    pub local_refine: bool,
    pub max_evals: usize,
    /// Stopping tolerance on parameter change during refinement.
    pub tolerance: T,
    /// `(i, j)` requires free parameter `i` < free parameter `j`.
    pub ordering_constraints: Vec<(usize, usize)>,
}

impl<T: Scalar> OptimizerConfig<T> {
    pub fn new(bounds: Vec<(T, T)>, grid_points: Vec<usize>) -> Self {
        Self {
            bounds,
            grid_points,
            local_refine: true,
            max_evals: 2000,
            tolerance: T::lit(1e-6),
            ordering_constraints: Vec::new(),
        }
    }

    pub fn with_ordering(mut self, i: usize, j: usize) -> Self {
        self.ordering_constraints.push((i, j));
        self
    }

    fn validate(&self, dims: usize) -> Result<()> {
        if self.bounds.len() != dims || self.grid_points.len() != dims {
            return Err(Error::DimensionMismatch(format!(
                "{dims} free parameters but {} bounds and {} grid sizes",
                self.bounds.len(),
                self.grid_points.len()
            )));
        }
        for &(lo, hi) in &self.bounds {
            if !lo.is_finite() || !hi.is_finite() || !(hi > lo) {
                return Err(Error::InvalidParameter(format!(
                    "bounds must be finite with lo < hi, got ({lo}, {hi})"
                )));
            }
        }
        if self.grid_points.iter().any(|&g| g < 2) {
            return Err(Error::InvalidParameter(
                "grid needs >= 2 points per dimension".into(),
            ));
        }
        if self
            .ordering_constraints
            .iter()
            .any(|&(i, j)| i >= dims || j >= dims || i == j)
        {
            return Err(Error::InvalidParameter(
                "bad ordering constraint index".into(),
            ));
        }
        Ok(())
    }

    fn feasible(&self, x: &[T]) -> bool {
        x.iter()
            .zip(&self.bounds)
            .all(|(&v, &(lo, hi))| v >= lo && v <= hi)
            && self.ordering_constraints.iter().all(|&(i, j)| x[i] < x[j])
    }

    fn axis(&self, d: usize) -> Vec<T> {
        let (lo, hi) = self.bounds[d];
        let k = self.grid_points[d];
        let steps = T::from_usize_lossy(k - 1);
        (0..k)
            .map(|i| {
                if i == k - 1 {
                    hi
                } else {
                    lo + (hi - lo) * T::from_usize_lossy(i) / steps
                }
            })
            .collect()
    }

    /// Feasible grid points in lexicographic order.
    pub fn grid(&self) -> Vec<Vec<T>> {
        let axes: Vec<Vec<T>> = (0..self.bounds.len()).map(|d| self.axis(d)).collect();
        cartesian(&axes)
            .into_iter()
            .filter(|x| self.ordering_constraints.iter().all(|&(i, j)| x[i] < x[j]))
            .collect()
    }
}

/// Cartesian product, first axis most significant.
pub fn cartesian<T: Scalar>(axes: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Grid,
    Refine,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow<T> {
    pub stage: Stage,
    pub params: Vec<T>,
    /// `-∞` when the point was rejected.
    pub objective: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeResult<T> {
    pub best: HyperParams<T>,
    pub best_point: Vec<T>,
    pub best_score: T,
    pub objective: Objective,
    pub free: Vec<FreeParam>,
    /// Free parameters sitting on a bound of the search box.
    pub at_bound: Vec<bool>,
    #[serde(skip)]
    pub trace: Vec<TraceRow<T>>,
}

impl<T: Scalar> OptimizeResult<T> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per evaluation: `stage, <param names...>, objective`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["stage".to_string()];
        header.extend(self.free.iter().map(FreeParam::name));
        header.push("objective".into());
        w.write_record(&header)?;
        for row in &self.trace {
            let mut rec = vec![match row.stage {
                Stage::Grid => "grid".to_string(),
                Stage::Refine => "refine".to_string(),
            }];
            rec.extend(row.params.iter().map(|v| v.to_string()));
            rec.push(row.objective.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn score_or_reject<T: Scalar>(r: Result<T>) -> T {
    match r {
        Ok(v) if v.is_finite() => v,
        _ => T::neg_infinity(),
    }
}

/// Empirical Bayes: maximize `objective` over the free hyperparameters.
///
/// A coarse grid over `config.bounds` (skipping points that break the
/// ordering constraints) is evaluated first; ties keep the lexicographically
/// smallest point. With `local_refine`, a Nelder–Mead simplex restricted to
/// the box then starts from the best grid point. Points that fail to
/// evaluate or return a non-finite value are rejected and recorded as `-∞`.
pub fn empirical_bayes_optimize<T: Scalar>(
    dataset: &Dataset<T>,
    family: &BasisFamily,
    objective: Objective,
    free: &[FreeParam],
    config: &OptimizerConfig<T>,
    fixed: &HyperParams<T>,
) -> Result<OptimizeResult<T>> {
    config.validate(free.len())?;
    if objective == Objective::LogZ
        && fixed.prior_scale.is_none()
        && !free.contains(&FreeParam::SigmaP2)
    {
        return Err(Error::InvalidParameter(
            "log Z objective needs a prior scale".into(),
        ));
    }
    let eval = |x: &[T]| -> T {
        score_or_reject(
            apply_params(fixed, free, x)
                .and_then(|hp| evaluate_objective(dataset, family, objective, &hp)),
        )
    };

    let grid = config.grid();
    if grid.is_empty() {
        return Err(Error::EmptyFeasibleGrid);
    }
    let values: Vec<T> = grid.par_iter().map(|x| eval(x)).collect();
    let mut trace: Vec<TraceRow<T>> = grid
        .iter()
        .zip(&values)
        .map(|(x, &v)| TraceRow {
            stage: Stage::Grid,
            params: x.clone(),
            objective: v,
        })
        .collect();

    let mut best_idx = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_finite() && best_idx.is_none_or(|b: usize| v > values[b]) {
            best_idx = Some(i);
        }
    }
    let best_idx = best_idx.ok_or(Error::AllDegenerate)?;
    let mut best_point = grid[best_idx].clone();
    let mut best_score = values[best_idx];

    if config.local_refine {
        let steps: Vec<T> = (0..free.len())
            .map(|d| {
                let (lo, hi) = config.bounds[d];
                (hi - lo) / T::from_usize_lossy(config.grid_points[d] - 1) * T::lit(0.5)
            })
            .collect();
        let budget = config
            .max_evals
            .saturating_sub(grid.len())
            .max(4 * (free.len() + 1));
        let res = nelder_mead(
            |x| {
                let v = if config.feasible(x) {
                    eval(x)
                } else {
                    T::neg_infinity()
                };
                trace.push(TraceRow {
                    stage: Stage::Refine,
                    params: x.to_vec(),
                    objective: v,
                });
                -v
            },
            &best_point,
            &steps,
            SimplexOptions {
                max_evals: budget,
                x_tol: config.tolerance,
                f_tol: T::zero(),
            },
        );
        if -res.value > best_score {
            best_score = -res.value;
            best_point = res.x;
        }
    }

    let at_bound: Vec<bool> = best_point
        .iter()
        .zip(&config.bounds)
        .map(|(&v, &(lo, hi))| {
            let tol = config.tolerance.max((hi - lo) * T::lit(1e-9));
            (v - lo).abs() <= tol || (hi - v).abs() <= tol
        })
        .collect();
    if at_bound.iter().any(|&b| b) {
        warn!("empirical Bayes optimum sits on the search box boundary");
    }
    Ok(OptimizeResult {
        best: apply_params(fixed, free, &best_point)?,
        best_point,
        best_score,
        objective,
        free: free.to_vec(),
        at_bound,
        trace,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileLikelihoodResult<T> {
    pub points: Vec<Vec<T>>,
    /// `log L_p(η)`; `-∞` at flagged points.
    pub log_values: Vec<T>,
    /// `L_p(η) / max_{η,θ} ℓ`, in `[0, 1]`.
    pub normalized: Vec<T>,
    /// Indices of grid points where the design was rank deficient or the
    /// evaluation failed.
    pub flagged: Vec<usize>,
    pub log_joint_max: T,
    pub joint_argmax: Vec<T>,
}

/// Profile likelihood `L_p(η) = max_θ ℓ(y | θ, η)` on a grid, normalized by
/// the joint maximum over `(η, θ)`.
///
/// The joint maximum is the larger of the grid maximum and a Nelder–Mead
/// refinement started from it, so the normalized values never exceed 1.
pub fn profile_likelihood<T: Scalar>(
    dataset: &Dataset<T>,
    family: &BasisFamily,
    free: &[FreeParam],
    eta_grid: &[Vec<T>],
    fixed: &HyperParams<T>,
) -> Result<ProfileLikelihoodResult<T>> {
    if eta_grid.is_empty() {
        return Err(Error::InvalidParameter("empty eta grid".into()));
    }
    if eta_grid.iter().any(|p| p.len() != free.len()) {
        return Err(Error::DimensionMismatch("eta grid point length".into()));
    }
    let eval = |x: &[T]| -> Result<T> {
        let hp = apply_params(fixed, free, x)?;
        evaluate_objective(dataset, family, Objective::ProfileLikelihood, &hp)
    };
    let results: Vec<Result<T>> = eta_grid.par_iter().map(|x| eval(x)).collect();
    let mut flagged = Vec::new();
    let log_values: Vec<T> = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| match r {
            Ok(v) if v.is_finite() => v,
            _ => {
                flagged.push(i);
                T::neg_infinity()
            }
        })
        .collect();
    let best = (0..log_values.len())
        .filter(|&i| log_values[i].is_finite())
        .fold(None, |b: Option<usize>, i| match b {
            Some(j) if log_values[j] >= log_values[i] => Some(j),
            _ => Some(i),
        })
        .ok_or(Error::AllDegenerate)?;

    let mut joint_argmax = eta_grid[best].clone();
    let mut log_joint_max = log_values[best];
    let steps: Vec<T> = (0..free.len())
        .map(|d| {
            let lo = eta_grid.iter().map(|p| p[d]).fold(T::infinity(), T::min);
            let hi = eta_grid
                .iter()
                .map(|p| p[d])
                .fold(T::neg_infinity(), T::max);
            let span = hi - lo;
            if span > T::zero() {
                span * T::lit(0.1)
            } else {
                joint_argmax[d].abs().max(T::one()) * T::lit(0.1)
            }
        })
        .collect();
    let res = nelder_mead(
        |x| -score_or_reject(eval(x)),
        &joint_argmax,
        &steps,
        SimplexOptions {
            max_evals: 4000,
            x_tol: T::lit(1e-10),
            f_tol: T::zero(),
        },
    );
    if -res.value > log_joint_max {
        log_joint_max = -res.value;
        joint_argmax = res.x;
    }
    let normalized = log_values
        .iter()
        .map(|&v| (v - log_joint_max).exp().min(T::one()))
        .collect();
    Ok(ProfileLikelihoodResult {
        points: eta_grid.to_vec(),
        log_values,
        normalized,
        flagged,
        log_joint_max,
        joint_argmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn two_points(y: [f64; 2]) -> Dataset<f64> {
        Dataset::new(Matrix::column(&[0.0, 1.0]), y.to_vec()).unwrap()
    }

    #[test]
    fn bayes_factor_contract() {
        let a = ModelScore::fake("a", -5.0);
        let b = ModelScore::fake("b", -7.0);
        assert_eq!(log_bayes_factor(&a, &b).unwrap(), 2.0);
        assert_eq!(log_bayes_factor(&a, &a).unwrap(), 0.0);
        assert_eq!(log_bayes_factor(&b, &a).unwrap(), -2.0);
        let c = ModelScore::proper("c", -7.0);
        assert!(matches!(log_bayes_factor(&a, &c), Err(Error::MixedKinds)));
    }

    #[test]
    fn bma_equal_and_extreme_scores() {
        let eq: Vec<ModelScore<f64>> = (0..4)
            .map(|i| ModelScore::fake(format!("m{i}"), -3.2))
            .collect();
        for w in bma_weights(&eq).unwrap() {
            assert!((w - 0.25).abs() < 1e-15);
        }
        let w: Vec<f64> =
            bma_weights(&[ModelScore::fake("a", 0.0), ModelScore::fake("b", -700.0)]).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn bma_against_direct_ratio() {
        let scores: Vec<_> = [-1.0, -2.0, -3.0]
            .iter()
            .enumerate()
            .map(|(i, &s)| ModelScore::fake(i.to_string(), s))
            .collect();
        let w = bma_weights(&scores).unwrap();
        let raw = [(-1f64).exp(), (-2f64).exp(), (-3f64).exp()];
        let total: f64 = raw.iter().sum();
        for (a, b) in w.iter().zip(raw) {
            assert!((a - b / total).abs() < 1e-15);
        }
    }

    #[test]
    fn bma_errors() {
        assert!(matches!(
            bma_weights(&[ModelScore::fake("a", 0.0), ModelScore::proper("b", 0.0)]),
            Err(Error::MixedKinds)
        ));
        assert!(matches!(
            bma_weights(&[ModelScore::fake("a", f64::NEG_INFINITY)]),
            Err(Error::AllDegenerate)
        ));
    }

    #[test]
    fn log_s_over_noise_gives_unbiased_value() {
        let ds = two_points([-2.0, 2.0]);
        let fixed = HyperParams::new(vec![], 1.0).unwrap();
        let cfg = OptimizerConfig::new(vec![(1e-6, 100.0)], vec![101]);
        let r = empirical_bayes_optimize(
            &ds,
            &BasisFamily::Constant,
            Objective::LogS,
            &[FreeParam::SigmaE2],
            &cfg,
            &fixed,
        )
        .unwrap();
        assert!((r.best.sigma_e2 - 8.0).abs() < 1e-2, "{}", r.best.sigma_e2);
        let r = empirical_bayes_optimize(
            &ds,
            &BasisFamily::Constant,
            Objective::ProfileLikelihood,
            &[FreeParam::SigmaE2],
            &cfg,
            &fixed,
        )
        .unwrap();
        assert!((r.best.sigma_e2 - 4.0).abs() < 1e-2, "{}", r.best.sigma_e2);
    }

    #[test]
    fn zero_data_pins_lower_bound() {
        let ds = two_points([0.0, 0.0]);
        let fixed = HyperParams::new(vec![], 1.0).unwrap();
        let cfg = OptimizerConfig::new(vec![(1e-6, 100.0)], vec![101]);
        let r = empirical_bayes_optimize(
            &ds,
            &BasisFamily::Constant,
            Objective::LogS,
            &[FreeParam::SigmaE2],
            &cfg,
            &fixed,
        )
        .unwrap();
        assert_eq!(r.best.sigma_e2, 1e-6);
        assert_eq!(r.at_bound, vec![true]);
    }

    #[test]
    fn ordering_constraint_can_empty_the_grid() {
        let ds = two_points([0.0, 1.0]);
        let fixed = HyperParams::new(vec![0.0, 1.0], 1.0).unwrap();
        let cfg =
            OptimizerConfig::new(vec![(5.0, 6.0), (0.0, 1.0)], vec![3, 3]).with_ordering(0, 1);
        let err = empirical_bayes_optimize(
            &ds,
            &BasisFamily::ExpAbs { count: 2 },
            Objective::LogS,
            &[FreeParam::Alpha(0), FreeParam::Alpha(1)],
            &cfg,
            &fixed,
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyFeasibleGrid));
    }

    #[test]
    fn grid_ties_keep_lexicographic_first() {
        // objective independent of sigma_p2 when the prior is unused: use LogS with
        // sigma_p2 free, so every grid point ties
        let ds = two_points([-1.0, 1.0]);
        let fixed = HyperParams::new(vec![], 1.0).unwrap();
        let mut cfg = OptimizerConfig::new(vec![(1.0, 3.0)], vec![3]);
        cfg.local_refine = false;
        let r = empirical_bayes_optimize(
            &ds,
            &BasisFamily::Constant,
            Objective::LogS,
            &[FreeParam::SigmaP2],
            &cfg,
            &fixed,
        )
        .unwrap();
        assert_eq!(r.best_point, vec![1.0]);
        assert_eq!(r.trace.len(), 3);
    }

    #[test]
    fn log_z_requires_prior() {
        let ds = two_points([-1.0, 1.0]);
        let fixed = HyperParams::new(vec![], 1.0).unwrap();
        let cfg = OptimizerConfig::new(vec![(0.1, 3.0)], vec![3]);
        assert!(empirical_bayes_optimize(
            &ds,
            &BasisFamily::Constant,
            Objective::LogZ,
            &[FreeParam::SigmaE2],
            &cfg,
            &fixed
        )
        .is_err());
        let fixed = fixed.with_prior(10.0, 0.0).unwrap();
        assert!(empirical_bayes_optimize(
            &ds,
            &BasisFamily::Constant,
            Objective::LogZ,
            &[FreeParam::SigmaE2],
            &cfg,
            &fixed
        )
        .is_ok());
    }

    #[test]
    fn trace_csv_has_one_row_per_evaluation() {
        let ds = two_points([-1.0, 1.0]);
        let fixed = HyperParams::new(vec![], 1.0).unwrap();
        let cfg = OptimizerConfig::new(vec![(0.1, 5.0)], vec![5]);
        let r = empirical_bayes_optimize(
            &ds,
            &BasisFamily::Constant,
            Objective::LogS,
            &[FreeParam::SigmaE2],
            &cfg,
            &fixed,
        )
        .unwrap();
        let mut buf = Vec::new();
        r.write_trace_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("stage,sigma_e2,objective\n"));
        assert_eq!(s.lines().count(), r.trace.len() + 1);
        assert!(r.to_json().unwrap().contains("best_score"));
    }

    #[test]
    fn profile_over_noise_peaks_at_ml_value() {
        let ds = two_points([-2.0, 2.0]);
        let fixed = HyperParams::new(vec![], 1.0).unwrap();
        let grid: Vec<Vec<f64>> = (1..=40).map(|i| vec![0.25 * i as f64]).collect();
        let p = profile_likelihood(
            &ds,
            &BasisFamily::Constant,
            &[FreeParam::SigmaE2],
            &grid,
            &fixed,
        )
        .unwrap();
        // grid contains 4.0 = σ̂²_ML
        let at4 = grid.iter().position(|g| g[0] == 4.0).unwrap();
        assert!((p.normalized[at4] - 1.0).abs() < 1e-9);
        assert!(p.normalized.iter().all(|&v| v > 0.0 && v <= 1.0));
        assert!((p.joint_argmax[0] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn profile_flags_rank_deficient_points() {
        let ds = Dataset::from_scalar_inputs(&[0.0, 1.0, 2.0], vec![1.0, 0.5, 2.0]).unwrap();
        let fixed = HyperParams::new(vec![0.5, 1.5], 1.0).unwrap();
        let grid = vec![vec![0.5], vec![1.5], vec![1.0]];
        let p = profile_likelihood(
            &ds,
            &BasisFamily::ExpAbs { count: 2 },
            &[FreeParam::Alpha(0)],
            &grid,
            &fixed,
        )
        .unwrap();
        assert_eq!(p.flagged, vec![1]);
        assert_eq!(p.normalized[1], 0.0);
    }
}
