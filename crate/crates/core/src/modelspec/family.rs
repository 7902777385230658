use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Poisson,
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Log,
    Logit,
}

impl Family {
    pub fn canonical_link(self) -> Link {
        match self {
            Family::Gaussian => Link::Identity,
            Family::Poisson => Link::Log,
            Family::Binomial => Link::Logit,
        }
    }

    pub fn check_support<T: Real>(self, y: T) -> Result<()> {
        let ok = match self {
            Family::Gaussian => y.is_finite(),
            Family::Poisson => y >= T::zero() && y.fract() == T::zero() && y.is_finite(),
            Family::Binomial => y == T::zero() || y == T::one(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Support(format!("{y} is not a valid {self} response")))
        }
    }

    /// Log density of `y` given the linear predictor `eta`, with its first
    /// and second derivatives in `eta`. `precision` is only read by the
    /// Gaussian family.
    pub fn loglik<T: Real>(self, y: T, eta: T, precision: T) -> (T, T, T) {
        match self {
            Family::Gaussian => {
                let r = y - eta;
                let v = T::half() * (precision.ln() - T::TAU().ln()) - T::half() * precision * r * r;
                (v, precision * r, -precision)
            }
            Family::Poisson => {
                let mu = eta.exp();
                let v = y * eta - mu - ln_factorial(y);
                (v, y - mu, -mu)
            }
            Family::Binomial => {
                // log(1 + e^eta) without overflow
                let softplus = if eta > T::zero() {
                    eta + (-eta).exp().ln_1p()
                } else {
                    eta.exp().ln_1p()
                };
                let p = if eta >= T::zero() {
                    T::one() / (T::one() + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (T::one() + e)
                };
                (y * eta - softplus, y - p, -p * (T::one() - p))
            }
        }
    }
}

fn ln_factorial<T: Real>(y: T) -> T {
    if y <= T::one() {
        T::zero()
    } else {
        T::lit(statrs::function::gamma::ln_gamma(y.as_f64() + 1.0))
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Gaussian => "gaussian",
            Family::Poisson => "poisson",
            Family::Binomial => "binomial",
        };
        f.write_str(s)
    }
}

/// Family log-likelihood and derivatives with support checking.
pub fn loglik_eta<T: Real>(family: Family, y: T, eta: T, precision: T) -> Result<(T, T, T)> {
    family.check_support(y)?;
    if family == Family::Gaussian && !(precision > T::zero()) {
        return Err(Error::Support(format!("residual precision {precision} must be positive")));
    }
    Ok(family.loglik(y, eta, precision))
}
