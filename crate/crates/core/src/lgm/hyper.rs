use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modelspec::{
    inverse_wishart_logpdf, theta, CheckedSpec, Family, ResolvedCovPrior, ScalarPrior,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HyperRole {
    /// Residual precision of a gaussian marker.
    Residual { marker: usize },
    /// Random-effects block covariance.
    ReBlock { block: usize },
    /// Precision of a cause's random-walk baseline.
    Baseline { hazard: usize },
    /// Association scalar; `index` runs over all hazards in order.
    Association { hazard: usize, index: usize },
}

#[derive(Debug, Clone)]
pub struct HyperEntry {
    pub role: HyperRole,
    pub name: String,
    /// Range inside the full coordinate vector.
    pub full: std::ops::Range<usize>,
    /// Range inside the free (optimized) vector; empty when fixed.
    pub free: std::ops::Range<usize>,
    prior: EntryPrior,
}

#[derive(Debug, Clone)]
enum EntryPrior {
    Scalar(ScalarPrior),
    Block(ResolvedCovPrior),
}

/// Hyperparameter values on the natural scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    /// Per marker; 1 for non-gaussian markers.
    pub residual: Vec<f64>,
    pub block_precision: Vec<DMatrix<f64>>,
    pub baseline: Vec<f64>,
    /// Association scalars in global order.
    pub phi: Vec<f64>,
}

/// Layout of the hyperparameter vector.
///
/// Coordinates: log residual precisions of gaussian markers, log-Cholesky
/// coordinates of each random-effects block precision, log random-walk
/// precisions, then the association scalars. Parameters with a point-mass
/// prior keep their slot in the full vector but are not optimized.
#[derive(Debug, Clone)]
pub struct HyperLayout {
    pub entries: Vec<HyperEntry>,
    n_full: usize,
    n_free: usize,
    fixed_full: Vec<f64>,
    free_mask: Vec<bool>,
    block_dims: Vec<usize>,
    n_markers: usize,
    n_hazards: usize,
    n_phi: usize,
}

impl HyperLayout {
    pub fn new(spec: &CheckedSpec) -> Result<Self> {
        let mut entries = Vec::new();
        let mut fixed_full = Vec::new();
        let mut free_mask = Vec::new();
        let mut n_free = 0;
        let mut push = |role, name: String, prior: EntryPrior, fixed: Option<Vec<f64>>, width: usize| {
            let start = fixed_full.len();
            let free = if fixed.is_some() { n_free..n_free } else { n_free..n_free + width };
            match fixed {
                Some(v) => {
                    fixed_full.extend(v);
                    free_mask.extend(std::iter::repeat(false).take(width));
                }
                None => {
                    fixed_full.extend(std::iter::repeat(0.0).take(width));
                    free_mask.extend(std::iter::repeat(true).take(width));
                    n_free += width;
                }
            }
            entries.push(HyperEntry {
                role,
                name,
                full: start..start + width,
                free,
                prior,
            });
        };

        for (k, m) in spec.markers.iter().enumerate() {
            if m.family != Family::Gaussian {
                continue;
            }
            let prior = m.residual_prior.expect("gaussian markers carry a residual prior");
            let fixed = prior.fixed_value().map(|v| vec![v.ln()]);
            push(HyperRole::Residual { marker: k }, format!("tau_eps[{}]", m.id), EntryPrior::Scalar(prior), fixed, 1);
        }
        for (b, block) in spec.blocks.iter().enumerate() {
            let d = block.dim();
            let fixed = match &block.prior {
                ResolvedCovPrior::Fixed(sigma) => Some(theta::covariance_to_theta(sigma)?),
                ResolvedCovPrior::InverseWishart(_) => None,
            };
            push(
                HyperRole::ReBlock { block: b },
                format!("re_block[{b}]"),
                EntryPrior::Block(block.prior.clone()),
                fixed,
                theta::n_chol_coords(d),
            );
        }
        for (h, hz) in spec.hazards.iter().enumerate() {
            let fixed = hz.prior.fixed_value().map(|v| vec![v.ln()]);
            push(HyperRole::Baseline { hazard: h }, format!("tau_rw[{}]", hz.cause), EntryPrior::Scalar(hz.prior), fixed, 1);
        }
        let mut index = 0;
        for (h, hz) in spec.hazards.iter().enumerate() {
            for a in &hz.associations {
                let fixed = a.prior.fixed_value().map(|v| vec![v]);
                push(
                    HyperRole::Association { hazard: h, index },
                    a.label.clone(),
                    EntryPrior::Scalar(a.prior),
                    fixed,
                    1,
                );
                index += 1;
            }
        }
        Ok(HyperLayout {
            n_full: fixed_full.len(),
            n_free,
            fixed_full,
            free_mask,
            block_dims: spec.blocks.iter().map(|b| b.dim()).collect(),
            n_markers: spec.markers.len(),
            n_hazards: spec.hazards.len(),
            n_phi: index,
            entries,
        })
    }

    /// Number of optimized coordinates.
    pub fn dim(&self) -> usize {
        self.n_free
    }

    pub fn full_dim(&self) -> usize {
        self.n_full
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    /// Default start: unit precisions, identity block precisions, zero
    /// association.
    pub fn initial_theta(&self) -> Vec<f64> {
        vec![0.0; self.n_free]
    }

    pub fn expand(&self, free: &[f64]) -> Result<Vec<f64>> {
        if free.len() != self.n_free {
            return Err(Error::DimensionMismatch {
                expected: self.n_free,
                got: free.len(),
            });
        }
        let mut full = self.fixed_full.clone();
        let mut it = free.iter();
        for (slot, &is_free) in full.iter_mut().zip(&self.free_mask) {
            if is_free {
                *slot = *it.next().expect("length checked");
            }
        }
        Ok(full)
    }

    /// Free coordinates of a full vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        full.iter().zip(&self.free_mask).filter(|(_, &f)| f).map(|(&v, _)| v).collect()
    }

    pub fn decode(&self, free: &[f64]) -> Result<Hyper> {
        let full = self.expand(free)?;
        Ok(self.decode_full(&full))
    }

    pub fn decode_full(&self, full: &[f64]) -> Hyper {
        let mut h = Hyper {
            residual: vec![1.0; self.n_markers],
            block_precision: self.block_dims.iter().map(|&d| DMatrix::identity(d, d)).collect(),
            baseline: vec![1.0; self.n_hazards],
            phi: vec![0.0; self.n_phi],
        };
        for e in &self.entries {
            let v = &full[e.full.clone()];
            match e.role {
                HyperRole::Residual { marker } => h.residual[marker] = theta::theta_to_precision(v[0]),
                HyperRole::ReBlock { block } => {
                    h.block_precision[block] = theta::re_precision(self.block_dims[block], v)
                }
                HyperRole::Baseline { hazard } => h.baseline[hazard] = theta::theta_to_precision(v[0]),
                HyperRole::Association { index, .. } => h.phi[index] = v[0],
            }
        }
        h
    }

    /// Log prior density of the free coordinates, including the Jacobian
    /// of the map to the natural scale.
    pub fn log_prior(&self, free: &[f64]) -> Result<f64> {
        let full = self.expand(free)?;
        let mut lp = 0.0;
        for e in &self.entries {
            if e.free.is_empty() {
                continue;
            }
            let v = &full[e.full.clone()];
            lp += match (&e.prior, e.role) {
                (EntryPrior::Scalar(p), HyperRole::Association { .. }) => p.log_density(v[0])?,
                (EntryPrior::Scalar(p), _) => {
                    p.log_density(theta::theta_to_precision(v[0]))? + theta::precision_log_jacobian(v[0])
                }
                (EntryPrior::Block(ResolvedCovPrior::InverseWishart(iw)), HyperRole::ReBlock { block }) => {
                    let d = self.block_dims[block];
                    let sigma = theta::theta_to_covariance(d, v);
                    inverse_wishart_logpdf(&sigma, iw)? + theta::chol_log_jacobian(d, v)
                }
                _ => unreachable!("fixed blocks have no free coordinates"),
            };
        }
        Ok(lp)
    }

    /// Free coordinates for natural-scale values.
    pub fn encode(&self, hyper: &Hyper) -> Result<Vec<f64>> {
        let mut full = self.fixed_full.clone();
        for e in &self.entries {
            let v: Vec<f64> = match e.role {
                HyperRole::Residual { marker } => vec![theta::precision_to_theta(hyper.residual[marker])?],
                HyperRole::ReBlock { block } => theta::precision_to_chol_theta(&hyper.block_precision[block])?,
                HyperRole::Baseline { hazard } => vec![theta::precision_to_theta(hyper.baseline[hazard])?],
                HyperRole::Association { index, .. } => vec![hyper.phi[index]],
            };
            if !e.free.is_empty() {
                full[e.full.clone()].copy_from_slice(&v);
            }
        }
        Ok(self.restrict(&full))
    }

    pub fn block_dim(&self, block: usize) -> usize {
        self.block_dims[block]
    }
}
