//! Reproducible numerical experiments: the noise-variance table, the
//! diffuse-prior asymptote, the two-exponential regression study and the
//! oracle self-check. Each produces a serializable report; [`Artifact`]
//! renders reports to CSV or JSON with a metadata header.

use std::fmt::Write as _;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::gaussian::{
    diffuse_limit_decomposition, geometric_ladder, log_marginal_likelihood,
    posterior_theta_gaussian,
};
use crate::improper::{log_area_under_likelihood, smoothing_improper};
use crate::linalg::Matrix;
use crate::model::{
    build_design_matrix, ml_estimate, BasisFamily, Dataset, DesignMatrix, GaussianBelief,
    HyperParams,
};
use crate::oracles::{monte_carlo_z, quadrature_s, resampling_estimator_stats, QuadratureSpec};
use crate::selection::{empirical_bayes_optimize, FreeParam, Objective, OptimizerConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

/// Settings shared by every experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: String,
    pub seed: Option<u64>,
    pub replicates: usize,
    pub format: Format,
}

impl RunConfig {
    pub fn new(experiment: impl Into<String>) -> Self {
        Self {
            experiment: experiment.into(),
            seed: None,
            replicates: 1,
            format: Format::Csv,
        }
    }

    fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::InvalidParameter(format!("experiment {} needs a seed", self.experiment))
        })
    }
}

/// A rendered output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub contents: String,
}

fn metadata(config: &RunConfig) -> serde_json::Value {
    json!({
        "experiment": config.experiment,
        "seed": config.seed,
        "version": VERSION,
    })
}

fn csv_artifact(config: &RunConfig, stem: &str, header: &[&str], rows: &[Vec<String>]) -> Artifact {
    let mut s = String::new();
    writeln!(s, "# experiment: {}", config.experiment).unwrap();
    match config.seed {
        Some(seed) => writeln!(s, "# seed: {seed}").unwrap(),
        None => writeln!(s, "# seed: none").unwrap(),
    }
    writeln!(s, "# version: {VERSION}").unwrap();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    s.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"));
    Artifact {
        file_name: format!("{stem}.csv"),
        contents: s,
    }
}

fn json_artifact<S: Serialize>(config: &RunConfig, stem: &str, body: &S) -> Result<Artifact> {
    let doc = json!({ "meta": metadata(config), "data": body });
    Ok(Artifact {
        file_name: format!("{stem}.json"),
        contents: serde_json::to_string_pretty(&doc)? + "\n",
    })
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn ones_design(n: usize) -> Result<DesignMatrix<f64>> {
    DesignMatrix::new(Matrix::from_fn(n, 1, |_, _| 1.0))
}

// ----------------------------------------------------------------- table2

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table2Row {
    pub y: [f64; 2],
    pub sigma2_ml: f64,
    pub sigma2_s: f64,
    pub at_lower_bound: bool,
}

pub const TABLE2_OUTPUTS: [[f64; 2]; 4] = [[0.0, 0.0], [-1.0, 1.0], [-2.0, 2.0], [-3.0, 3.0]];

/// For `Φ = 1₂`, the closed-form ML noise variance next to the maximizer of
/// `log S` over `σ_e² ∈ [1e-6, 100]`.
pub fn table2() -> Result<Vec<Table2Row>> {
    let fixed = HyperParams::new(vec![], 1.0)?;
    let mut config = OptimizerConfig::new(vec![(1e-6, 100.0)], vec![201]);
    config.tolerance = 1e-3;
    TABLE2_OUTPUTS
        .iter()
        .map(|&y| {
            let ds = Dataset::new(Matrix::column(&[0.0, 1.0]), y.to_vec())?;
            let phi = ones_design(2)?;
            let sigma2_ml = ml_estimate(&y, &phi)?.sigma2;
            let opt = empirical_bayes_optimize(
                &ds,
                &BasisFamily::Constant,
                Objective::LogS,
                &[FreeParam::SigmaE2],
                &config,
                &fixed,
            )?;
            if opt.at_bound[0] {
                warn!("y = {y:?}: log S maximizer pinned at the search bound (degenerate fit)");
            }
            Ok(Table2Row {
                y,
                sigma2_ml,
                sigma2_s: opt.best.sigma_e2,
                at_lower_bound: opt.at_bound[0] && opt.best.sigma_e2 <= 1e-6 + 1e-3,
            })
        })
        .collect()
}

pub fn table2_artifacts(config: &RunConfig, rows: &[Table2Row]) -> Result<Vec<Artifact>> {
    Ok(vec![match config.format {
        Format::Json => json_artifact(config, "table2", &rows)?,
        Format::Csv => csv_artifact(
            config,
            "table2",
            &["y1", "y2", "sigma2_ml", "sigma2_s", "at_lower_bound"],
            &rows
                .iter()
                .map(|r| {
                    vec![
                        r.y[0].to_string(),
                        r.y[1].to_string(),
                        r.sigma2_ml.to_string(),
                        format!("{:.6}", r.sigma2_s),
                        r.at_lower_bound.to_string(),
                    ]
                })
                .collect::<Vec<_>>(),
        ),
    }])
}

// -------------------------------------------------------------- asymptote

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoteConfig {
    pub y: Vec<f64>,
    pub sigma_e: [f64; 2],
    pub mu_p: f64,
    pub sigma_p_lo: f64,
    pub sigma_p_hi: f64,
    pub points_per_decade: usize,
}

impl Default for AsymptoteConfig {
    fn default() -> Self {
        Self {
            y: vec![-2.0, 2.0],
            sigma_e: [1.0, 4.0],
            mu_p: 2.0,
            sigma_p_lo: 0.1,
            sigma_p_hi: 1e6,
            points_per_decade: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoteRow {
    pub sigma_p: f64,
    pub log_z1: f64,
    pub part1_1: f64,
    pub part2_1: f64,
    pub log_z2: f64,
    pub part1_2: f64,
    pub part2_2: f64,
    pub diff_log_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoteReport {
    pub config: AsymptoteConfig,
    /// `log S` for each noise level; constant in `σ_p`.
    pub log_s: [f64; 2],
    /// `‖y - f̂‖² / (2σ_e²)`, the limit of part 1, for each noise level.
    pub part1_limit: [f64; 2],
    pub rows: Vec<AsymptoteRow>,
}

/// `log Z` and its two parts along a geometric `σ_p` ladder, for a constant
/// basis and two noise levels.
pub fn asymptote(cfg: &AsymptoteConfig) -> Result<AsymptoteReport> {
    let n = cfg.y.len();
    let ds = Dataset::new(Matrix::from_fn(n, 1, |i, _| i as f64), cfg.y.clone())?;
    let phi = build_design_matrix(&ds, &BasisFamily::Constant, &[])?;
    let decades = (cfg.sigma_p_hi / cfg.sigma_p_lo).log10();
    let count = (decades * cfg.points_per_decade as f64).round() as usize + 1;
    let sigma_p = geometric_ladder(cfg.sigma_p_lo, cfg.sigma_p_hi, count);
    let ladder: Vec<f64> = sigma_p.iter().map(|s| s * s).collect();

    let mut log_s = [0.0; 2];
    let mut part1_limit = [0.0; 2];
    let mut series = Vec::with_capacity(2);
    for (k, &se) in cfg.sigma_e.iter().enumerate() {
        let s2 = se * se;
        let s = log_area_under_likelihood(&cfg.y, &phi, s2)?;
        log_s[k] = s.log_value;
        part1_limit[k] = s.fitting_term;
        series.push(diffuse_limit_decomposition(
            &cfg.y, &phi, s2, &ladder, cfg.mu_p,
        )?);
    }
    let rows = sigma_p
        .iter()
        .enumerate()
        .map(|(i, &sp)| {
            let (a, b) = (&series[0][i], &series[1][i]);
            AsymptoteRow {
                sigma_p: sp,
                log_z1: a.log_z,
                part1_1: a.part1,
                part2_1: a.part2,
                log_z2: b.log_z,
                part1_2: b.part1,
                part2_2: b.part2,
                diff_log_z: a.log_z - b.log_z,
            }
        })
        .collect();
    Ok(AsymptoteReport {
        config: cfg.clone(),
        log_s,
        part1_limit,
        rows,
    })
}

pub fn asymptote_artifacts(config: &RunConfig, report: &AsymptoteReport) -> Result<Vec<Artifact>> {
    Ok(vec![match config.format {
        Format::Json => json_artifact(config, "asymptote", report)?,
        Format::Csv => csv_artifact(
            config,
            "asymptote",
            &[
                "sigma_p",
                "log_Z1",
                "part1_1",
                "part2_1",
                "log_S1",
                "log_Z2",
                "part1_2",
                "part2_2",
                "log_S2",
                "log_Z1_minus_log_Z2",
            ],
            &report
                .rows
                .iter()
                .map(|r| {
                    [
                        r.sigma_p,
                        r.log_z1,
                        r.part1_1,
                        r.part2_1,
                        report.log_s[0],
                        r.log_z2,
                        r.part1_2,
                        r.part2_2,
                        report.log_s[1],
                        r.diff_log_z,
                    ]
                    .iter()
                    .map(f64::to_string)
                    .collect()
                })
                .collect::<Vec<_>>(),
        ),
    }])
}

// ---------------------------------------------------------------- example2

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example2Config {
    pub runs: usize,
    pub seed: u64,
    pub n_points: usize,
    pub x_range: (f64, f64),
    pub theta_true: [f64; 2],
    pub alpha_true: [f64; 2],
    pub sigma_e2: f64,
    pub alpha_bounds: (f64, f64),
    pub grid_points: usize,
}

impl Example2Config {
    pub fn new(runs: usize, seed: u64) -> Self {
        Self {
            runs,
            seed,
            n_points: 200,
            x_range: (-10.0, 10.0),
            theta_true: [2.0, -5.0],
            alpha_true: [-4.0, 6.0],
            sigma_e2: 0.5,
            alpha_bounds: (-10.0, 10.0),
            grid_points: 41,
        }
    }

    pub fn inputs(&self) -> Vec<f64> {
        let (lo, hi) = self.x_range;
        let last = (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|i| lo + (hi - lo) * i as f64 / last)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example2Replicate {
    pub run_id: usize,
    pub alpha_hat: [f64; 2],
    pub theta_hat: [f64; 2],
    /// Mean over components of the squared error.
    pub sq_err_alpha: f64,
    pub sq_err_theta: f64,
    pub at_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example2Summary {
    pub runs: usize,
    pub mse_theta: f64,
    pub mse_alpha: f64,
    pub alpha_bias: [f64; 2],
    pub alpha_bias_se: [f64; 2],
    pub alpha_var: [f64; 2],
    pub runs_at_bound: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example2Report {
    pub config: Example2Config,
    pub summary: Example2Summary,
    pub replicates: Vec<Example2Replicate>,
}

fn example2_replicate(cfg: &Example2Config, x: &[f64], run_id: usize) -> Result<Example2Replicate> {
    let family = BasisFamily::ExpAbs { count: 2 };
    let mut rng = rng_for(cfg.seed, run_id as u64);
    let sd = cfg.sigma_e2.sqrt();
    let y: Vec<f64> = x
        .iter()
        .map(|&xi| {
            let f = cfg.theta_true[0] * (xi - cfg.alpha_true[0]).abs().exp()
                + cfg.theta_true[1] * (xi - cfg.alpha_true[1]).abs().exp();
            f + sd * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    let ds = Dataset::from_scalar_inputs(x, y)?;
    let fixed = HyperParams::new(cfg.alpha_true.to_vec(), cfg.sigma_e2)?;
    let (lo, hi) = cfg.alpha_bounds;
    let opt_cfg = OptimizerConfig::new(vec![(lo, hi), (lo, hi)], vec![cfg.grid_points; 2])
        .with_ordering(0, 1);
    let opt = empirical_bayes_optimize(
        &ds,
        &family,
        Objective::LogS,
        &[FreeParam::Alpha(0), FreeParam::Alpha(1)],
        &opt_cfg,
        &fixed,
    )?;
    let alpha_hat = [opt.best_point[0], opt.best_point[1]];
    let phi = build_design_matrix(&ds, &family, &alpha_hat)?;
    let theta = phi.least_squares(ds.outputs())?.theta;
    let theta_hat = [theta[0], theta[1]];
    let sq = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)) / 2.0;
    Ok(Example2Replicate {
        run_id,
        alpha_hat,
        theta_hat,
        sq_err_alpha: sq(alpha_hat, cfg.alpha_true),
        sq_err_theta: sq(theta_hat, cfg.theta_true),
        at_bound: opt.at_bound.iter().any(|&b| b),
    })
}

/// Repeated data generation and `α` selection by maximizing `S(y | α)` with
/// known noise. Replicate `r` draws its noise from stream `r` of the seed.
pub fn example2(cfg: &Example2Config) -> Result<Example2Report> {
    if cfg.runs == 0 {
        return Err(Error::InvalidParameter(
            "example2 needs at least one run".into(),
        ));
    }
    let x = cfg.inputs();
    let replicates: Vec<Example2Replicate> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| example2_replicate(cfg, &x, r))
        .collect::<Result<_>>()?;
    let nr = cfg.runs as f64;
    let mean = |f: &dyn Fn(&Example2Replicate) -> f64| replicates.iter().map(f).sum::<f64>() / nr;
    let mut alpha_bias = [0.0; 2];
    let mut alpha_var = [0.0; 2];
    let mut alpha_bias_se = [0.0; 2];
    for j in 0..2 {
        let m = mean(&|r| r.alpha_hat[j]);
        alpha_bias[j] = m - cfg.alpha_true[j];
        alpha_var[j] = if cfg.runs > 1 {
            replicates
                .iter()
                .map(|r| (r.alpha_hat[j] - m).powi(2))
                .sum::<f64>()
                / (nr - 1.0)
        } else {
            0.0
        };
        alpha_bias_se[j] = (alpha_var[j] / nr).sqrt();
    }
    let summary = Example2Summary {
        runs: cfg.runs,
        mse_theta: mean(&|r| r.sq_err_theta),
        mse_alpha: mean(&|r| r.sq_err_alpha),
        alpha_bias,
        alpha_bias_se,
        alpha_var,
        runs_at_bound: replicates.iter().filter(|r| r.at_bound).count(),
    };
    Ok(Example2Report {
        config: cfg.clone(),
        summary,
        replicates,
    })
}

pub fn example2_artifacts(config: &RunConfig, report: &Example2Report) -> Result<Vec<Artifact>> {
    let s = &report.summary;
    Ok(match config.format {
        Format::Json => vec![json_artifact(config, "example2", report)?],
        Format::Csv => vec![
            csv_artifact(
                config,
                "example2_summary",
                &["quantity", "value"],
                &[
                    ("runs", s.runs as f64),
                    ("mse_theta", s.mse_theta),
                    ("mse_alpha", s.mse_alpha),
                    ("alpha1_bias", s.alpha_bias[0]),
                    ("alpha2_bias", s.alpha_bias[1]),
                    ("alpha1_bias_se", s.alpha_bias_se[0]),
                    ("alpha2_bias_se", s.alpha_bias_se[1]),
                    ("alpha1_var", s.alpha_var[0]),
                    ("alpha2_var", s.alpha_var[1]),
                    ("runs_at_bound", s.runs_at_bound as f64),
                ]
                .iter()
                .map(|(k, v)| vec![k.to_string(), v.to_string()])
                .collect::<Vec<_>>(),
            ),
            csv_artifact(
                config,
                "example2_replicates",
                &[
                    "run_id",
                    "alpha1",
                    "alpha2",
                    "theta1",
                    "theta2",
                    "sq_err_alpha",
                    "sq_err_theta",
                ],
                &report
                    .replicates
                    .iter()
                    .map(|r| {
                        vec![
                            r.run_id.to_string(),
                            r.alpha_hat[0].to_string(),
                            r.alpha_hat[1].to_string(),
                            r.theta_hat[0].to_string(),
                            r.theta_hat[1].to_string(),
                            r.sq_err_alpha.to_string(),
                            r.sq_err_theta.to_string(),
                        ]
                    })
                    .collect::<Vec<_>>(),
            ),
        ],
    })
}

// ------------------------------------------------------------------ verify

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Flips the sign of the noise variance fed to the quadrature check;
    /// a negative control that must make the run fail.
    pub corrupt_noise_sign: bool,
    pub mc_samples: usize,
    pub resampling_reps: usize,
}

impl VerifyConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            corrupt_noise_sign: false,
            mc_samples: 200_000,
            resampling_reps: 4000,
        }
    }
}

/// A random regression instance with well-conditioned Gaussian design.
pub fn random_instance(
    rng: &mut impl Rng,
    n: usize,
    m: usize,
) -> Result<(Vec<f64>, DesignMatrix<f64>)> {
    let phi = Matrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = (0..n)
        .map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok((y, DesignMatrix::new(phi)?))
}

fn check(name: &str, outcome: Result<(bool, String)>) -> Check {
    match outcome {
        Ok((passed, detail)) => Check {
            name: name.into(),
            passed,
            detail,
        },
        Err(e) => Check {
            name: name.into(),
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

/// Runs every oracle against the corresponding closed form.
pub fn verify(cfg: &VerifyConfig) -> VerifyReport {
    let mut checks = Vec::new();

    checks.push(check(
        "quadrature_vs_closed_form_S",
        (|| {
            let mut rng = rng_for(cfg.seed, 0);
            let mut worst = 0.0f64;
            for i in 0..5 {
                let (y, phi) = random_instance(&mut rng, 3 + i, 1 + i % 2)?;
                let s2 = 0.3 + rng.random::<f64>();
                let s2_used = if cfg.corrupt_noise_sign { -s2 } else { s2 };
                let q = quadrature_s(&y, &phi, s2_used, &QuadratureSpec::default())?;
                let c = log_area_under_likelihood(&y, &phi, s2)?.log_value;
                worst = worst.max((q - c).abs() / c.abs().max(1.0));
            }
            Ok((
                worst <= 1e-6,
                format!("max relative gap {worst:.3e} (tolerance 1e-6)"),
            ))
        })(),
    ));

    checks.push(check(
        "monte_carlo_vs_closed_form_Z",
        (|| {
            let mut rng = rng_for(cfg.seed, 1);
            let mut worst = 0.0f64;
            for i in 0..3 {
                let (y, phi) = random_instance(&mut rng, 2 + i, 1 + i % 2)?;
                let prior = GaussianBelief::isotropic(phi.n_basis(), 0.5, 1.0);
                let (est, se) = monte_carlo_z(
                    &y,
                    &phi,
                    1.0,
                    &prior,
                    cfg.mc_samples,
                    cfg.seed.wrapping_add(i as u64),
                )?;
                let exact = log_marginal_likelihood(&y, &phi, 1.0, &prior)?.log_value;
                worst = worst.max((est - exact).abs() / se);
            }
            Ok((
                worst <= 3.0,
                format!("max gap {worst:.2} standard errors (tolerance 3)"),
            ))
        })(),
    ));

    checks.push(check(
        "dual_route_identities",
        (|| {
            let mut rng = rng_for(cfg.seed, 2);
            for _ in 0..20 {
                let (y, phi) = random_instance(&mut rng, 6, 3)?;
                let s2 = 0.1 + rng.random::<f64>();
                let prior = GaussianBelief::isotropic(
                    3,
                    rng.sample::<f64, _>(StandardNormal),
                    0.5 + rng.random::<f64>(),
                );
                posterior_theta_gaussian(&y, &phi, s2, &prior)?;
                smoothing_improper(&y, &phi, s2)?;
            }
            Ok((
                true,
                "20 instances, posterior routes and smoothing identities agree".into(),
            ))
        })(),
    ));

    checks.push(check("noise_variance_unbiasedness", (|| {
        let mut rng = rng_for(cfg.seed, 3);
        let (_, phi) = random_instance(&mut rng, 12, 3)?;
        let stats = resampling_estimator_stats(&[1.0, -2.0, 0.5], &phi, 0.5, cfg.resampling_reps, cfg.seed)?;
        let z_unbiased = (stats.unbiased_mean - 0.5).abs() / stats.unbiased_se;
        let z_ml = (stats.ml_mean - 0.5 * 9.0 / 12.0).abs() / stats.ml_se;
        Ok((
            z_unbiased <= 3.0 && z_ml <= 3.0,
            format!("unbiased off by {z_unbiased:.2} se, ML off its bias-corrected target by {z_ml:.2} se"),
        ))
    })()));

    let passed = checks.iter().all(|c| c.passed);
    VerifyReport {
        seed: cfg.seed,
        passed,
        checks,
    }
}

pub fn verify_artifacts(config: &RunConfig, report: &VerifyReport) -> Result<Vec<Artifact>> {
    Ok(vec![match config.format {
        Format::Json => json_artifact(config, "verify", report)?,
        Format::Csv => csv_artifact(
            config,
            "verify",
            &["check", "passed", "detail"],
            &report
                .checks
                .iter()
                .map(|c| vec![c.name.clone(), c.passed.to_string(), c.detail.clone()])
                .collect::<Vec<_>>(),
        ),
    }])
}

/// Convenience used by the CLI: seed and replicate checks per experiment.
pub fn example2_from_run(config: &RunConfig) -> Result<Example2Report> {
    let seed = config.require_seed()?;
    example2(&Example2Config::new(config.replicates, seed))
}
