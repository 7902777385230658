//! Unconstrained coordinates for hyperparameters.
//!
//! Scalar precisions map to `θ = log τ`. A random-effects block with
//! covariance `Σ` is parameterized through the Cholesky factor of its
//! precision `Q = Σ⁻¹ = L Lᵀ`: the first `d` coordinates are `log L_ii²`, the
//! remaining `d(d−1)/2` are the strictly lower entries of `L` in column-major
//! order. Association scalars are used as they are.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub fn n_chol_coords(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

pub fn precision_to_theta(tau: f64) -> Result<f64> {
    if tau > 0.0 && tau.is_finite() {
        Ok(tau.ln())
    } else {
        Err(Error::Support(format!("precision {tau} must be positive")))
    }
}

pub fn theta_to_precision(theta: f64) -> f64 {
    theta.exp()
}

/// `log |dτ/dθ|`.
pub fn precision_log_jacobian(theta: f64) -> f64 {
    theta
}

/// Lower-triangular factor `L` of the block precision.
pub fn chol_factor(dim: usize, theta: &[f64]) -> DMatrix<f64> {
    assert_eq!(theta.len(), n_chol_coords(dim), "theta length for block of dim {dim}");
    let mut l = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        l[(i, i)] = (0.5 * theta[i]).exp();
    }
    let mut k = dim;
    for j in 0..dim {
        for i in j + 1..dim {
            l[(i, j)] = theta[k];
            k += 1;
        }
    }
    l
}

pub fn re_precision(dim: usize, theta: &[f64]) -> DMatrix<f64> {
    let l = chol_factor(dim, theta);
    &l * l.transpose()
}

pub fn theta_to_covariance(dim: usize, theta: &[f64]) -> DMatrix<f64> {
    let l = chol_factor(dim, theta);
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(dim, dim))
        .expect("diagonal of L is positive");
    linv.transpose() * linv
}

pub fn covariance_to_theta(sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    let q = sigma
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Support("covariance block is singular".into()))?;
    precision_to_chol_theta(&q)
}

pub fn precision_to_chol_theta(q: &DMatrix<f64>) -> Result<Vec<f64>> {
    let dim = q.nrows();
    let sym = 0.5 * (q + q.transpose());
    let l = sym
        .cholesky()
        .ok_or_else(|| Error::Support("precision block is not positive definite".into()))?
        .unpack();
    let mut theta = Vec::with_capacity(n_chol_coords(dim));
    theta.extend((0..dim).map(|i| 2.0 * l[(i, i)].ln()));
    for j in 0..dim {
        for i in j + 1..dim {
            theta.push(l[(i, j)]);
        }
    }
    Ok(theta)
}

/// `log |d vech(Σ) / dθ|`, the term that carries a density on `Σ` over to `θ`.
pub fn chol_log_jacobian(dim: usize, theta: &[f64]) -> f64 {
    let d = dim as f64;
    // |dQ/dθ| = Π L_ii^{d−i+2} (1-based i), |dΣ/dQ| = |Q|^{−(d+1)}
    let log_l = theta[..dim].iter().map(|t| 0.5 * t);
    let logdet_q: f64 = theta[..dim].iter().sum();
    let dq: f64 = log_l.enumerate().map(|(i, l)| (d - i as f64 + 1.0) * l).sum();
    dq - (d + 1.0) * logdet_q
}

/// Lower-triangle entries of a symmetric matrix, column-major.
pub fn vech(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut v = Vec::with_capacity(n_chol_coords(n));
    for j in 0..n {
        for i in j..n {
            v.push(m[(i, j)]);
        }
    }
    v
}
