use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::newton::GaussianApprox;
use super::{log_hyper_post, HyperEval};
use crate::error::{Error, Result};
use crate::lgm::AssembledModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeOptions {
    /// Central-difference step for the gradient.
    pub fd_step: f64,
    /// Step for the finite-difference Hessian at the mode.
    pub hessian_step: f64,
    pub gradient_tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
    /// Largest coordinate change of one quasi-Newton step.
    pub max_step: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            fd_step: 1e-4,
            hessian_step: 1e-3,
            gradient_tol: 1e-3,
            step_tol: 1e-4,
            max_iter: 200,
            max_step: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HyperMode {
    pub theta: Vec<f64>,
    pub lhp: f64,
    /// Finite-difference Hessian of the log posterior at `theta`.
    pub hessian: DMatrix<f64>,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub message: String,
    pub approx: GaussianApprox,
    pub warnings: Vec<String>,
}

struct Objective<'a> {
    model: &'a AssembledModel,
    evaluations: std::sync::atomic::AtomicUsize,
}

impl Objective<'_> {
    fn eval(&self, theta: &[f64], warm: &[f64]) -> Option<HyperEval> {
        self.evaluations.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        match log_hyper_post(self.model, theta, Some(warm)) {
            Ok(e) if e.lhp.is_finite() => Some(e),
            Ok(_) => None,
            Err(err) => {
                log::debug!("infeasible hyperparameter point: {err}");
                None
            }
        }
    }

    fn value(&self, theta: &[f64], warm: &[f64]) -> f64 {
        self.eval(theta, warm).map_or(f64::NEG_INFINITY, |e| e.lhp)
    }

    /// Central-difference gradient of the log posterior and the matching
    /// diagonal curvature estimates.
    fn gradient(&self, theta: &[f64], f0: f64, warm: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = theta.len();
        let vals: Vec<f64> = (0..2 * d)
            .into_par_iter()
            .map(|k| {
                let mut t = theta.to_vec();
                t[k / 2] += if k % 2 == 0 { h } else { -h };
                self.value(&t, warm)
            })
            .collect();
        let mut g = vec![0.0; d];
        let mut curv = vec![0.0; d];
        for i in 0..d {
            let (up, dn) = (vals[2 * i], vals[2 * i + 1]);
            g[i] = match (up.is_finite(), dn.is_finite()) {
                (true, true) => (up - dn) / (2.0 * h),
                (true, false) => (up - f0) / h,
                (false, true) => (f0 - dn) / h,
                (false, false) => {
                    return Err(Error::Validation(format!("hyperparameter {i} is infeasible on both sides")))
                }
            };
            curv[i] = if up.is_finite() && dn.is_finite() {
                (up - 2.0 * f0 + dn) / (h * h)
            } else {
                f64::NAN
            };
        }
        Ok((g, curv))
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn scaled_identity(curv: &[f64]) -> DMatrix<f64> {
    // inverse Hessian of −lhp from the diagonal curvature where it is usable
    DMatrix::from_fn(curv.len(), curv.len(), |i, j| {
        if i != j {
            0.0
        } else if curv[i].is_finite() && -curv[i] > 0.1 {
            -1.0 / curv[i]
        } else {
            1.0
        }
    })
}

/// Quasi-Newton (BFGS) ascent of the log hyperposterior with
/// finite-difference gradients, followed by a finite-difference Hessian.
pub fn optimize_hyper(model: &AssembledModel, start: &[f64], opts: &OptimizeOptions) -> Result<HyperMode> {
    let obj = Objective {
        model,
        evaluations: Default::default(),
    };
    let d = start.len();
    let zero = vec![0.0; model.dim()];
    let first = obj
        .eval(start, &zero)
        .ok_or_else(|| Error::Validation("log hyperposterior is not finite at the start point".into()))?;
    let mut x = start.to_vec();
    let mut f = first.lhp;
    let mut approx = first.approx;
    let (mut g, curv) = obj.gradient(&x, f, &approx.mode, opts.fd_step)?;
    let mut hinv = scaled_identity(&curv);
    let mut fresh = true;
    let mut last_step = f64::INFINITY;
    let mut converged = false;
    let mut message = String::from("maximum iterations reached");
    let mut iterations = 0;

    while iterations <= opts.max_iter {
        let gnorm = inf_norm(&g);
        log::trace!("hyper iteration {iterations}: lhp {f:.6} |g| {gnorm:.3e} theta {x:.3?}");
        if gnorm <= opts.gradient_tol && (iterations == 0 || last_step <= opts.step_tol) {
            converged = true;
            message = "gradient and step within tolerance".into();
            break;
        }
        if iterations == opts.max_iter {
            break;
        }
        iterations += 1;
        // ascent direction for lhp: hinv is the inverse Hessian of −lhp
        let gv = nalgebra::DVector::from_column_slice(&g);
        let mut p: Vec<f64> = (&hinv * &gv).iter().copied().collect();
        if p.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() <= 0.0 {
            hinv = DMatrix::identity(d, d);
            fresh = true;
            p = g.clone();
        }
        let pn = inf_norm(&p);
        if pn > opts.max_step {
            p.iter_mut().for_each(|v| *v *= opts.max_step / pn);
        }
        let slope: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut alpha = 1.0;
        let mut found = None;
        for _ in 0..30 {
            let t: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + alpha * b).collect();
            if let Some(e) = obj.eval(&t, &approx.mode) {
                if e.lhp >= f + 1e-4 * alpha * slope {
                    found = Some((t, e));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xn, en)) = found else {
            if gnorm <= opts.gradient_tol {
                converged = true;
                message = "gradient within tolerance; no further ascent possible".into();
                break;
            }
            if !fresh {
                let (_, curv) = obj.gradient(&x, f, &approx.mode, opts.fd_step)?;
                hinv = scaled_identity(&curv);
                fresh = true;
                continue;
            }
            message = "line search failed".into();
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let (gn, _) = obj.gradient(&xn, en.lhp, &en.approx.mode, opts.fd_step)?;
        // curvature pair for −lhp
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            let sv = nalgebra::DVector::from_vec(s.clone());
            let yv = nalgebra::DVector::from_vec(y);
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(d, d);
            let left = &eye - rho * &sv * yv.transpose();
            let right = &eye - rho * &yv * sv.transpose();
            hinv = &left * &hinv * &right + rho * &sv * sv.transpose();
            fresh = false;
        }
        last_step = inf_norm(&s);
        x = xn;
        f = en.lhp;
        approx = en.approx;
        g = gn;
    }

    let (hessian, warnings) = fd_hessian(&obj, &x, f, &approx.mode, opts.hessian_step);
    Ok(HyperMode {
        theta: x,
        lhp: f,
        hessian,
        gradient: g,
        iterations,
        evaluations: obj.evaluations.load(std::sync::atomic::Ordering::Relaxed),
        converged,
        message,
        approx,
        warnings,
    })
}

/// Second differences using the axial points and one diagonal pair per
/// coordinate pair:
/// `H_ij ≈ [f(+i+j) − f(+i) − f(+j) + 2f − f(−i) − f(−j) + f(−i−j)] / 2h²`.
///
/// Non-finite entries are repaired: diagonals fall back to a one-sided
/// difference on the finite side, and whatever remains (including
/// off-diagonals) is replaced by unit curvature or zero with a warning.
fn fd_hessian(obj: &Objective, x: &[f64], f0: f64, warm: &[f64], h: f64) -> (DMatrix<f64>, Vec<String>) {
    let d = x.len();
    let shifted = |moves: &[(usize, f64)]| {
        let mut t = x.to_vec();
        for &(i, s) in moves {
            t[i] += s;
        }
        t
    };
    let axial: Vec<f64> = (0..2 * d)
        .into_par_iter()
        .map(|k| obj.value(&shifted(&[(k / 2, if k % 2 == 0 { h } else { -h })]), warm))
        .collect();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
    let diag: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            (
                obj.value(&shifted(&[(i, h), (j, h)]), warm),
                obj.value(&shifted(&[(i, -h), (j, -h)]), warm),
            )
        })
        .collect();
    let mut hm = DMatrix::zeros(d, d);
    for i in 0..d {
        hm[(i, i)] = (axial[2 * i] - 2.0 * f0 + axial[2 * i + 1]) / (h * h);
    }
    for (&(i, j), &(pp, mm)) in pairs.iter().zip(&diag) {
        let v = (pp - axial[2 * i] - axial[2 * j] + 2.0 * f0 - axial[2 * i + 1] - axial[2 * j + 1] + mm) / (2.0 * h * h);
        hm[(i, j)] = v;
        hm[(j, i)] = v;
    }
    let mut warnings = Vec::new();
    for i in 0..d {
        if hm[(i, i)].is_finite() {
            continue;
        }
        let side = [(axial[2 * i], h), (axial[2 * i + 1], -h)].into_iter().find(|(v, _)| v.is_finite());
        let repaired = side
            .map(|(f1, s)| (obj.value(&shifted(&[(i, 2.0 * s)]), warm) - 2.0 * f1 + f0) / (h * h))
            .filter(|v| v.is_finite());
        match repaired {
            Some(v) => {
                hm[(i, i)] = v;
                warnings.push(format!("hessian diagonal {i} used a one-sided difference"));
            }
            None => {
                hm[(i, i)] = -1.0;
                warnings.push(format!("hessian diagonal {i} is not finite; unit curvature substituted"));
            }
        }
    }
    let mut zeroed = 0;
    for i in 0..d {
        for j in 0..i {
            if !hm[(i, j)].is_finite() {
                hm[(i, j)] = 0.0;
                hm[(j, i)] = 0.0;
                zeroed += 1;
            }
        }
    }
    if zeroed > 0 {
        warnings.push(format!("{zeroed} non-finite hessian cross terms set to zero"));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    (hm, warnings)
}
