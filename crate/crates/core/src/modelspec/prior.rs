use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `P(σ > 1) = 0.01` for `σ = τ^{-1/2}`.
pub const DEFAULT_PC_LAMBDA: f64 = 4.605_170_185_988_091;

/// Prior on a scalar hyperparameter, stated on its natural scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarPrior {
    Normal { mean: f64, sd: f64 },
    Gamma { shape: f64, rate: f64 },
    /// Penalized-complexity prior on a precision.
    PcPrec { lambda: f64 },
    /// Point mass; the parameter is removed from the optimized vector.
    Fixed { value: f64 },
}

impl ScalarPrior {
    pub fn fixed_value(&self) -> Option<f64> {
        match self {
            ScalarPrior::Fixed { value } => Some(*value),
            _ => None,
        }
    }

    pub fn validate(&self, precision: bool, path: &str) -> Result<()> {
        let bad = |m: &str| Err(Error::spec(path, m));
        match *self {
            ScalarPrior::Normal { sd, .. } if !(sd > 0.0) => bad("normal sd must be positive"),
            ScalarPrior::Normal { .. } if precision => bad("a precision needs a gamma, pc_prec or fixed prior"),
            ScalarPrior::Gamma { shape, rate } if !(shape > 0.0 && rate > 0.0) => {
                bad("gamma shape and rate must be positive")
            }
            ScalarPrior::PcPrec { lambda } if !(lambda > 0.0) => bad("pc_prec lambda must be positive"),
            ScalarPrior::Gamma { .. } | ScalarPrior::PcPrec { .. } if !precision => {
                bad("gamma and pc_prec priors apply to precisions only")
            }
            ScalarPrior::Fixed { value } if !value.is_finite() || (precision && value <= 0.0) => {
                bad("fixed value outside support")
            }
            _ => Ok(()),
        }
    }

    pub fn log_density(&self, x: f64) -> Result<f64> {
        match *self {
            ScalarPrior::Normal { mean, sd } => Ok(normal_logpdf(x, mean, sd)),
            ScalarPrior::Gamma { shape, rate } => gamma_logpdf(x, shape, rate),
            ScalarPrior::PcPrec { lambda } => pc_prec_logpdf(x, lambda),
            ScalarPrior::Fixed { .. } => Ok(0.0),
        }
    }
}

/// Prior on the covariance matrix of a random-effects block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariancePrior {
    /// Inverse-Wishart with `df` degrees of freedom and scale matrix
    /// `diag(scale)`. Unset fields default to `dim + 2` and the identity.
    InverseWishart {
        #[serde(default)]
        df: Option<f64>,
        #[serde(default)]
        scale: Option<Vec<f64>>,
    },
    /// Point mass at a covariance matrix given row by row.
    Fixed { covariance: Vec<Vec<f64>> },
}

impl Default for CovariancePrior {
    fn default() -> Self {
        CovariancePrior::InverseWishart { df: None, scale: None }
    }
}

/// Fully resolved inverse-Wishart parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseWishart {
    pub df: f64,
    pub scale: DMatrix<f64>,
}

impl CovariancePrior {
    pub fn resolve(&self, dim: usize, path: &str) -> Result<ResolvedCovPrior> {
        match self {
            CovariancePrior::InverseWishart { df, scale } => {
                let df = df.unwrap_or(dim as f64 + 2.0);
                if !(df > dim as f64 - 1.0) {
                    return Err(Error::spec(path, format!("inverse-Wishart df must exceed {}", dim - 1)));
                }
                let diag = scale.clone().unwrap_or_else(|| vec![1.0; dim]);
                if diag.len() != dim || diag.iter().any(|&s| !(s > 0.0)) {
                    return Err(Error::spec(path, format!("scale must be {dim} positive values")));
                }
                Ok(ResolvedCovPrior::InverseWishart(InverseWishart {
                    df,
                    scale: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)),
                }))
            }
            CovariancePrior::Fixed { covariance } => {
                if covariance.len() != dim || covariance.iter().any(|r| r.len() != dim) {
                    return Err(Error::spec(path, format!("fixed covariance must be {dim}x{dim}")));
                }
                let m = DMatrix::from_fn(dim, dim, |i, j| covariance[i][j]);
                if (&m - m.transpose()).abs().max() > 1e-12 || m.clone().cholesky().is_none() {
                    return Err(Error::spec(path, "fixed covariance must be symmetric positive definite"));
                }
                Ok(ResolvedCovPrior::Fixed(m))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResolvedCovPrior {
    InverseWishart(InverseWishart),
    Fixed(DMatrix<f64>),
}

pub fn normal_logpdf<T: Real>(x: T, mean: T, sd: T) -> T {
    let z = (x - mean) / sd;
    -T::half() * z * z - sd.ln() - T::half() * T::TAU().ln()
}

pub fn gamma_logpdf(x: f64, shape: f64, rate: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Support(format!("gamma density at {x}")));
    }
    Ok(shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x)
}

/// `π(τ) = (λ/2) τ^{-3/2} exp(−λ τ^{-1/2})`.
pub fn pc_prec_logpdf(tau: f64, lambda: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Support(format!("pc prior density at precision {tau}")));
    }
    Ok((lambda / 2.0).ln() - 1.5 * tau.ln() - lambda / tau.sqrt())
}

/// Log of the multivariate gamma function `Γ_d(a)`.
pub fn ln_mvgamma(d: usize, a: f64) -> f64 {
    let df = d as f64;
    df * (df - 1.0) / 4.0 * std::f64::consts::PI.ln()
        + (0..d).map(|j| ln_gamma(a - j as f64 / 2.0)).sum::<f64>()
}

pub fn inverse_wishart_logpdf(sigma: &DMatrix<f64>, prior: &InverseWishart) -> Result<f64> {
    let d = sigma.nrows();
    if sigma.ncols() != d || prior.scale.nrows() != d {
        return Err(Error::DimensionMismatch {
            expected: prior.scale.nrows(),
            got: d,
        });
    }
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Support("inverse-Wishart argument is not positive definite".into()))?;
    let logdet_sigma = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let logdet_s = 2.0
        * prior
            .scale
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Support("inverse-Wishart scale is not positive definite".into()))?
            .l()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>();
    let trace = (&prior.scale * chol.inverse()).trace();
    let nu = prior.df;
    let df = d as f64;
    Ok(nu / 2.0 * logdet_s - nu * df / 2.0 * std::f64::consts::LN_2 - ln_mvgamma(d, nu / 2.0)
        - (nu + df + 1.0) / 2.0 * logdet_sigma
        - 0.5 * trace)
}
