use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::log_hyper_post;
use super::newton::GaussianApprox;
use super::optimize::HyperMode;
use crate::error::{Error, Result};
use crate::lgm::AssembledModel;

/// How the hyperparameter posterior is integrated out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Strategy {
    /// Plug in the posterior mode.
    #[default]
    EB,
    /// Weighted design around the mode.
    FULL,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::EB => "EB",
            Strategy::FULL => "FULL",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "EB" => Ok(Strategy::EB),
            "FULL" => Ok(Strategy::FULL),
            _ => Err(Error::Validation(format!("unknown strategy `{s}` (expected EB or FULL)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperPoint {
    pub theta: Vec<f64>,
    pub lhp: f64,
    pub weight: f64,
    /// Position in standardized coordinates of the mode curvature.
    pub z: Vec<f64>,
    #[serde(skip)]
    pub approx: Option<GaussianApprox>,
}

#[derive(Debug, Clone)]
pub struct Exploration {
    pub strategy: Strategy,
    pub points: Vec<HyperPoint>,
    pub radius: f64,
    /// Eigen-decomposition of `−Ĥ`; eigenvalues replaced by their absolute
    /// value, floored at a small positive constant.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub positive_definite: bool,
    pub warnings: Vec<String>,
}

const MIN_EIGENVALUE: f64 = 1e-6;

fn decompose(hessian: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>, bool) {
    let d = hessian.nrows();
    if d == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0), true);
    }
    let neg = -hessian;
    let sym = (&neg + neg.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let pd = eig.eigenvalues.iter().all(|&l| l > 0.0 && l.is_finite());
    let vals = eig
        .eigenvalues
        .iter()
        .map(|&l| if l.is_finite() { l.abs().max(MIN_EIGENVALUE) } else { 1.0 })
        .collect();
    (vals, eig.eigenvectors, pd)
}

/// Evaluation points around the mode. EB keeps the mode alone; FULL adds
/// two points per eigendirection of `−Ĥ` at standardized distance
/// `r = max(radius, √d)`.
///
/// The FULL weights are the spherical cubature weights of the standard
/// Gaussian (`1 − d/r²` for the mode, `1/(2r²)` per axial point) times the
/// ratio of the posterior to its Gaussian approximation, so a Gaussian
/// hyperposterior is integrated exactly up to second moments.
pub fn explore(model: &AssembledModel, mode: &HyperMode, strategy: Strategy, radius: f64) -> Result<Exploration> {
    let warm = mode.approx.mode.clone();
    explore_with(&mode.theta, mode.lhp, Some(mode.approx.clone()), &mode.hessian, strategy, radius, |t| {
        match log_hyper_post(model, t, Some(&warm)) {
            Ok(e) if e.lhp.is_finite() => Some((e.lhp, Some(e.approx))),
            _ => None,
        }
    })
}

pub(crate) fn explore_with<F>(
    theta: &[f64],
    lhp0: f64,
    approx0: Option<GaussianApprox>,
    hessian: &DMatrix<f64>,
    strategy: Strategy,
    radius: f64,
    eval: F,
) -> Result<Exploration>
where
    F: Fn(&[f64]) -> Option<(f64, Option<GaussianApprox>)> + Sync,
{
    if !(radius > 0.0) {
        return Err(Error::Validation(format!("exploration radius must be positive, got {radius}")));
    }
    let d = theta.len();
    let (eigenvalues, eigenvectors, pd) = decompose(hessian);
    let mut warnings = Vec::new();
    let centre = HyperPoint {
        theta: theta.to_vec(),
        lhp: lhp0,
        weight: 1.0,
        z: vec![0.0; d],
        approx: approx0,
    };
    let mut used = strategy;
    if strategy == Strategy::FULL && !pd {
        let msg = "negated hyperparameter Hessian is not positive definite; falling back to EB".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
        used = Strategy::EB;
    }
    let r = radius.max((d as f64).sqrt());
    if used == Strategy::EB || d == 0 {
        return Ok(Exploration {
            strategy: used,
            points: vec![centre],
            radius: r,
            eigenvalues,
            eigenvectors,
            positive_definite: pd,
            warnings,
        });
    }

    let axial: Vec<(usize, f64)> = (0..d).flat_map(|i| [(i, 1.0), (i, -1.0)]).collect();
    let evaluated: Vec<HyperPoint> = axial
        .par_iter()
        .map(|&(i, sign)| {
            let scale = sign * r / eigenvalues[i].sqrt();
            let t: Vec<f64> = (0..d).map(|k| theta[k] + scale * eigenvectors[(k, i)]).collect();
            let mut z = vec![0.0; d];
            z[i] = sign * r;
            match eval(&t) {
                Some((lhp, approx)) => HyperPoint {
                    theta: t,
                    lhp,
                    weight: 1.0 / (2.0 * r * r) * (lhp - lhp0 + 0.5 * r * r).exp(),
                    z,
                    approx,
                },
                None => HyperPoint {
                    theta: t,
                    lhp: f64::NEG_INFINITY,
                    weight: 0.0,
                    z,
                    approx: None,
                },
            }
        })
        .collect();
    let infeasible = evaluated.iter().filter(|p| p.weight == 0.0).count();
    if infeasible > 0 {
        warnings.push(format!("{infeasible} exploration point(s) infeasible; given zero weight"));
    }
    let mut points = vec![HyperPoint {
        weight: (1.0 - d as f64 / (r * r)).max(0.0),
        ..centre
    }];
    points.extend(evaluated);
    let total: f64 = points.iter().map(|p| p.weight).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Validation("exploration weights do not normalize".into()));
    }
    for p in &mut points {
        p.weight /= total;
    }
    Ok(Exploration {
        strategy: used,
        points,
        radius: r,
        eigenvalues,
        eigenvectors,
        positive_definite: pd,
        warnings,
    })
}
