//! Latent Gaussian model: layout of the latent vector, prior precision
//! `Q(ω)` and the observation terms tying data to linear functionals of it.

mod assemble;
mod hyper;

use nalgebra::DMatrix;

pub use assemble::{AssembledModel, ObservationTerm, Prepared, Source, RW_RIDGE};
pub use hyper::{Hyper, HyperEntry, HyperLayout, HyperRole};

use crate::error::{Error, Result};
use crate::modelspec::{theta, CheckedSpec, RandomWalk};
use crate::numkernel::SymSparse;

/// Segments of the latent vector: per-subject random effects (subject
/// contiguous), per-cause baseline values, hazard covariate effects, then
/// longitudinal fixed effects.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentIndex {
    pub n_subjects: usize,
    pub re_dim: usize,
    pub n_bins: usize,
    pub n_causes: usize,
    pub baseline_start: usize,
    pub gamma_start: Vec<usize>,
    pub beta_start: Vec<usize>,
    pub dim: usize,
}

impl LatentIndex {
    pub fn new(spec: &CheckedSpec, n_subjects: usize) -> Self {
        let re_total = n_subjects * spec.re_dim;
        let baseline_start = re_total;
        let mut next = baseline_start + spec.n_causes() * spec.n_bins;
        let gamma_start = spec
            .hazards
            .iter()
            .map(|h| {
                let s = next;
                next += h.covariates.len();
                s
            })
            .collect();
        let beta_start = spec
            .markers
            .iter()
            .map(|m| {
                let s = next;
                next += m.fixed.len();
                s
            })
            .collect();
        LatentIndex {
            n_subjects,
            re_dim: spec.re_dim,
            n_bins: spec.n_bins,
            n_causes: spec.n_causes(),
            baseline_start,
            gamma_start,
            beta_start,
            dim: next,
        }
    }

    pub fn re(&self, subject: usize, slot: usize) -> usize {
        subject * self.re_dim + slot
    }

    pub fn baseline(&self, hazard: usize, bin: usize) -> usize {
        self.baseline_start + hazard * self.n_bins + bin
    }

    pub fn gamma(&self, hazard: usize, j: usize) -> usize {
        self.gamma_start[hazard] + j
    }

    pub fn beta(&self, marker: usize, j: usize) -> usize {
        self.beta_start[marker] + j
    }

    /// First coordinate after the random effects and baselines.
    pub fn fixed_start(&self) -> usize {
        self.baseline_start + self.n_causes * self.n_bins
    }

    /// Readable name of every latent coordinate.
    pub fn names(&self, spec: &CheckedSpec, subjects: &[String]) -> Vec<String> {
        let mut names = vec![String::new(); self.dim];
        let mut re_names = vec![String::new(); self.re_dim];
        for m in &spec.markers {
            for (t, &slot) in m.random.iter().zip(&m.re_slot) {
                re_names[slot] = format!("{}:{}", m.id, t);
            }
        }
        for (i, s) in subjects.iter().enumerate() {
            for (slot, rn) in re_names.iter().enumerate() {
                names[self.re(i, slot)] = format!("b[{s}][{rn}]");
            }
        }
        for (h, hz) in spec.hazards.iter().enumerate() {
            for b in 0..self.n_bins {
                names[self.baseline(h, b)] = format!("baseline[{}][{}]", hz.cause, b + 1);
            }
            for (j, w) in hz.covariates.iter().enumerate() {
                names[self.gamma(h, j)] = format!("gamma[{}:{}]", hz.cause, w);
            }
        }
        for (k, m) in spec.markers.iter().enumerate() {
            for (j, t) in m.fixed.iter().enumerate() {
                names[self.beta(k, j)] = format!("beta[{}:{}]", m.id, t);
            }
        }
        names
    }
}

/// Lower-triangle entries of `DᵀD` for the first- or second-difference
/// matrix `D` on `n` equally spaced values.
pub fn rw_structure(kind: RandomWalk, n: usize) -> Vec<(usize, usize, f64)> {
    let stencil: &[f64] = match kind {
        RandomWalk::Rw1 => &[-1.0, 1.0],
        RandomWalk::Rw2 => &[1.0, -2.0, 1.0],
    };
    let w = stencil.len();
    let mut dense = vec![vec![0.0; n]; n];
    for r in 0..n.saturating_sub(w - 1) {
        for (a, &va) in stencil.iter().enumerate() {
            for (b, &vb) in stencil.iter().enumerate() {
                dense[r + a][r + b] += va * vb;
            }
        }
    }
    let mut out = Vec::new();
    for c in 0..n {
        for (r, row) in dense.iter().enumerate().skip(c) {
            if r - c < w {
                out.push((r, c, row[c]));
            }
        }
    }
    out
}

/// `τ DᵀD` for the second-difference matrix `D`, of rank `B − 2`.
pub fn rw2_precision(n_bins: usize, tau: f64) -> Result<SymSparse<f64>> {
    rw_precision(RandomWalk::Rw2, n_bins, tau)
}

pub fn rw_precision(kind: RandomWalk, n_bins: usize, tau: f64) -> Result<SymSparse<f64>> {
    if n_bins < 3 {
        return Err(Error::Validation(format!("random walk needs at least 3 values, got {n_bins}")));
    }
    if !(tau > 0.0) {
        return Err(Error::Support(format!("random walk precision {tau}")));
    }
    SymSparse::from_triplets(n_bins, rw_structure(kind, n_bins).into_iter().map(|(r, c, v)| (r, c, tau * v)))
}

/// Dense precision block `L Lᵀ` for block coordinates `theta`.
pub fn re_precision(dim: usize, theta: &[f64]) -> Result<DMatrix<f64>> {
    if theta.len() != theta::n_chol_coords(dim) {
        return Err(Error::DimensionMismatch {
            expected: theta::n_chol_coords(dim),
            got: theta.len(),
        });
    }
    Ok(theta::re_precision(dim, theta))
}
