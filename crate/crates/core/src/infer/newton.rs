use crate::error::{Error, Result};
use crate::lgm::{AssembledModel, Prepared};
use crate::numkernel::{takahashi_marginal_variances, CholFactor};

pub const MAX_NEWTON_ITER: usize = 100;
pub const MAX_HALVINGS: usize = 50;
pub const GRADIENT_TOL: f64 = 1e-6;
/// Below this relative gradient no polishing step is taken.
const POLISH_TOL: f64 = 1e-10;

/// Gaussian approximation of `p(u | ω, D)` at its mode.
#[derive(Debug, Clone)]
pub struct GaussianApprox {
    pub mode: Vec<f64>,
    /// Factor of `H = Q + Aᵀ diag(−ℓ'') A` at the mode.
    pub factor: CholFactor<f64>,
    pub iterations: usize,
    /// `Σ ℓ(η(u*))`.
    pub loglik: f64,
    /// `u*ᵀ Q u*`.
    pub quad: f64,
    pub max_gradient: f64,
}

impl GaussianApprox {
    pub fn marginal_sd(&self) -> Vec<f64> {
        takahashi_marginal_variances(&self.factor).into_iter().map(f64::sqrt).collect()
    }
}

struct State {
    u: Vec<f64>,
    objective: f64,
    loglik: f64,
    quad: f64,
    d1: Vec<f64>,
    d2: Vec<f64>,
    qu: Vec<f64>,
}

fn evaluate(model: &AssembledModel, prep: &Prepared, u: Vec<f64>) -> State {
    let eta = model.eta(prep, &u);
    let (loglik, d1, d2) = model.loglik(prep, &eta);
    let qu = model.q_mul(prep, &u);
    let quad: f64 = u.iter().zip(&qu).map(|(a, b)| a * b).sum();
    State {
        objective: loglik - 0.5 * quad,
        u,
        loglik,
        quad,
        d1,
        d2,
        qu,
    }
}

/// Maximizes `−½ uᵀQu + Σ ℓ(η)` by Newton's method with step halving.
pub fn inner_newton(model: &AssembledModel, prep: &Prepared, start: &[f64]) -> Result<GaussianApprox> {
    if start.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: start.len(),
        });
    }
    if start.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite Newton start".into()));
    }
    let mut state = evaluate(model, prep, start.to_vec());
    let mut max_g = f64::INFINITY;
    let mut polished = false;
    for iteration in 0..=MAX_NEWTON_ITER {
        let at = model.at_mul(prep, &state.d1);
        let g: Vec<f64> = at.iter().zip(&state.qu).map(|(a, q)| a - q).collect();
        max_g = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let unorm = state.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let w: Vec<f64> = state.d2.iter().map(|d| -d).collect();
        let factor = model.symbolic().factorize_slots(&model.hessian_slots(prep, &w))?;
        let converged = max_g <= GRADIENT_TOL * (1.0 + unorm);
        log::trace!("newton {iteration}: objective {:.12e} |g| {max_g:.3e} |u| {unorm:.3e}", state.objective);
        // once within tolerance, one extra Newton step drives the gradient
        // to rounding level at the cost of a single factorization
        let done = converged && (polished || max_g <= POLISH_TOL * (1.0 + unorm) || iteration == MAX_NEWTON_ITER);
        let finish = |state: State, factor| GaussianApprox {
            mode: state.u,
            factor,
            iterations: iteration,
            loglik: state.loglik,
            quad: state.quad,
            max_gradient: max_g,
        };
        if done {
            return Ok(finish(state, factor));
        }
        if iteration == MAX_NEWTON_ITER || !max_g.is_finite() {
            break;
        }
        polished = converged;
        let delta = factor.solve(&g)?;
        let mut step = 1.0;
        let mut accepted = None;
        let tol = 1e-12 * (1.0 + state.objective.abs());
        // a predicted gain below the rounding noise of the objective makes
        // the comparison meaningless; trust the quadratic model then
        let predicted: f64 = 0.5 * g.iter().zip(&delta).map(|(a, b)| a * b).sum::<f64>();
        let trust = predicted <= tol;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = state.u.iter().zip(&delta).map(|(u, d)| u + step * d).collect();
            let next = evaluate(model, prep, trial);
            if next.objective.is_finite() && (trust || next.objective >= state.objective - tol) {
                accepted = Some(next);
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some(next) => state = next,
            None if converged => return Ok(finish(state, factor)),
            None => break,
        }
    }
    Err(Error::InnerDivergence {
        iterations: MAX_NEWTON_ITER,
        gradient: max_g,
    })
}
