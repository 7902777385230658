//! Nested Laplace approximation: inner Gaussian approximation of the latent
//! field, mode and curvature of the hyperparameter posterior, exploration
//! of the hyperparameter space and posterior summaries.

mod explore;
mod newton;
mod optimize;
mod summary;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use explore::{explore, Exploration, HyperPoint, Strategy};
pub use newton::{inner_newton, GaussianApprox, GRADIENT_TOL, MAX_HALVINGS, MAX_NEWTON_ITER};
pub use optimize::{optimize_hyper, HyperMode, OptimizeOptions};
pub use summary::{
    hyper_summaries, latent_marginals, natural_quantities, sample_joint_posterior, HyperSampler, HyperSummary,
    LatentSummary, MarginalMixture, PosteriorDraws,
};

use crate::error::Result;
use crate::lgm::AssembledModel;

/// Log hyperposterior at one point together with the Gaussian
/// approximation it was computed from.
#[derive(Debug, Clone)]
pub struct HyperEval {
    pub lhp: f64,
    pub log_prior: f64,
    pub approx: GaussianApprox,
}

/// `log p(θ | D)` up to a constant: prior (with Jacobian), latent prior
/// and likelihood at the conditional mode, minus the Gaussian approximation
/// at its own mode.
pub fn log_hyper_post(model: &AssembledModel, theta: &[f64], warm: Option<&[f64]>) -> Result<HyperEval> {
    let prep = model.prepare(theta)?;
    let log_prior = model.layout.log_prior(theta)?;
    let zero;
    let start = match warm {
        Some(w) => w,
        None => {
            zero = vec![0.0; model.dim()];
            &zero
        }
    };
    let approx = inner_newton(model, &prep, start)?;
    let lhp = log_prior + 0.5 * prep.logdet_q - 0.5 * approx.quad + approx.loglik - 0.5 * approx.factor.logdet();
    Ok(HyperEval { lhp, log_prior, approx })
}

/// Laplace approximation of `log p(D | θ)`.
pub fn log_marginal_likelihood(model: &AssembledModel, theta: &[f64]) -> Result<f64> {
    let e = log_hyper_post(model, theta, None)?;
    Ok(e.lhp - e.log_prior)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub strategy: Strategy,
    /// Axial distance of the exploration points in standardized units.
    pub ccd_radius: f64,
    #[serde(flatten)]
    pub optimizer: OptimizeOptions,
    pub n_hyper_samples: usize,
    pub seed: u64,
    /// Start point in free hyperparameter coordinates; zeros when absent.
    pub start: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            strategy: Strategy::EB,
            ccd_radius: 3f64.sqrt(),
            optimizer: OptimizeOptions::default(),
            n_hyper_samples: 5000,
            seed: 1,
            start: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub optimize: f64,
    pub explore: f64,
    pub summaries: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub optimizer_iterations: usize,
    pub lhp_evaluations: usize,
    pub optimizer_message: String,
    pub gradient: Vec<f64>,
    pub newton_iterations_at_mode: usize,
    pub latent_dim: usize,
    pub n_observations: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub strategy: Strategy,
    /// Strategy actually used; EB when FULL had to fall back.
    pub strategy_used: Strategy,
    pub converged: bool,
    pub theta_names: Vec<String>,
    pub theta_mode: Vec<f64>,
    pub lhp_mode: f64,
    pub hessian: Vec<Vec<f64>>,
    pub log_marginal_likelihood: f64,
    pub points: Vec<HyperPoint>,
    pub hyper: Vec<HyperSummary>,
    pub latent: Vec<LatentSummary>,
    pub timings: Timings,
    pub diagnostics: Diagnostics,
    #[serde(skip)]
    pub mixtures: Vec<MarginalMixture>,
    #[serde(skip)]
    pub sampler: Option<HyperSampler>,
}

impl FitResult {
    pub fn latent_by_name(&self, name: &str) -> Option<&LatentSummary> {
        self.latent.iter().find(|s| s.name == name)
    }

    pub fn hyper_by_name(&self, name: &str) -> Option<&HyperSummary> {
        self.hyper.iter().find(|s| s.name == name)
    }
}

/// Names of the free hyperparameter coordinates.
pub fn theta_names(model: &AssembledModel) -> Vec<String> {
    let mut names = Vec::with_capacity(model.layout.dim());
    for e in &model.layout.entries {
        let w = e.free.len();
        for j in 0..w {
            names.push(if w == 1 { e.name.clone() } else { format!("{}[{j}]", e.name) });
        }
    }
    names
}

/// Full pipeline: mode search, exploration, latent and hyperparameter
/// summaries.
pub fn fit(model: &AssembledModel, opts: &FitOptions) -> Result<FitResult> {
    let t0 = Instant::now();
    let start = opts.start.clone().unwrap_or_else(|| model.layout.initial_theta());
    let mode = optimize_hyper(model, &start, &opts.optimizer)?;
    let t_opt = t0.elapsed().as_secs_f64();
    log::info!(
        "hyper mode after {} iterations ({} evaluations): lhp {:.4}, converged {}",
        mode.iterations,
        mode.evaluations,
        mode.lhp,
        mode.converged
    );

    let t1 = Instant::now();
    let mut warnings = mode.warnings.clone();
    let exploration = explore(model, &mode, opts.strategy, opts.ccd_radius)?;
    warnings.extend(exploration.warnings.iter().cloned());
    let t_explore = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let mixtures = latent_marginals(&exploration.points);
    let latent_names = model.index.names(&model.spec, &model.subjects);
    let latent = mixtures
        .iter()
        .zip(latent_names)
        .map(|(m, name)| LatentSummary::from_mixture(name, m))
        .collect();
    let sampler = HyperSampler::new(&mode, &exploration);
    let hyper = hyper_summaries(&model.layout, &model.spec, &mode.theta, &sampler, opts.n_hyper_samples, opts.seed);
    let t_summ = t2.elapsed().as_secs_f64();

    let d = mode.theta.len();
    let lml = match (-&mode.hessian).cholesky() {
        Some(c) => {
            let logdet: f64 = c.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
            mode.lhp + 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * logdet
        }
        None => f64::NAN,
    };
    let hessian = (0..d).map(|i| (0..d).map(|j| mode.hessian[(i, j)]).collect()).collect();
    Ok(FitResult {
        strategy: opts.strategy,
        strategy_used: exploration.strategy,
        converged: mode.converged,
        theta_names: theta_names(model),
        theta_mode: mode.theta.clone(),
        lhp_mode: mode.lhp,
        hessian,
        log_marginal_likelihood: lml,
        points: exploration.points,
        hyper,
        latent,
        timings: Timings {
            optimize: t_opt,
            explore: t_explore,
            summaries: t_summ,
            total: t0.elapsed().as_secs_f64(),
        },
        diagnostics: Diagnostics {
            optimizer_iterations: mode.iterations,
            lhp_evaluations: mode.evaluations,
            optimizer_message: mode.message.clone(),
            gradient: mode.gradient.clone(),
            newton_iterations_at_mode: mode.approx.iterations,
            latent_dim: model.dim(),
            n_observations: model.n_obs(),
            warnings,
        },
        mixtures,
        sampler: Some(sampler),
    })
}
