use nalgebra::DMatrix;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::explore::{Exploration, HyperPoint, Strategy};
use super::optimize::HyperMode;
use super::FitResult;
use crate::error::{Error, Result};
use crate::lgm::{HyperLayout, HyperRole};
use crate::modelspec::{theta, CheckedSpec};

/// Gaussian mixture `Σ w N(μ, σ²)` for one latent coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalMixture {
    /// `(weight, mean, sd)`.
    pub components: Vec<(f64, f64, f64)>,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

impl MarginalMixture {
    pub fn mean(&self) -> f64 {
        self.components.iter().map(|&(w, m, _)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let second: f64 = self.components.iter().map(|&(w, m, s)| w * (s * s + m * m)).sum();
        (second - mean * mean).max(0.0)
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|&(w, m, s)| {
                if s > 0.0 {
                    w * std_normal_cdf((x - m) / s)
                } else if x >= m {
                    w
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Root of `cdf(x) = p` by bisection.
    pub fn quantile(&self, p: f64) -> f64 {
        let lo0 = self.components.iter().map(|&(_, m, s)| m - 12.0 * s).fold(f64::INFINITY, f64::min);
        let hi0 = self.components.iter().map(|&(_, m, s)| m + 12.0 * s).fold(f64::NEG_INFINITY, f64::max);
        let (mut lo, mut hi) = (lo0, hi0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * (1.0 + mid.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

impl LatentSummary {
    pub fn from_mixture(name: String, m: &MarginalMixture) -> Self {
        LatentSummary {
            name,
            mean: m.mean(),
            sd: m.sd(),
            q025: m.quantile(0.025),
            q975: m.quantile(0.975),
        }
    }
}

/// Per-coordinate mixtures over the points with positive weight.
pub fn latent_marginals(points: &[HyperPoint]) -> Vec<MarginalMixture> {
    let used: Vec<&HyperPoint> = points.iter().filter(|p| p.weight > 0.0 && p.approx.is_some()).collect();
    let sds: Vec<Vec<f64>> = used.par_iter().map(|p| p.approx.as_ref().unwrap().marginal_sd()).collect();
    let total: f64 = used.iter().map(|p| p.weight).sum();
    let dim = used.first().map_or(0, |p| p.approx.as_ref().unwrap().mode.len());
    (0..dim)
        .map(|i| MarginalMixture {
            components: used
                .iter()
                .zip(&sds)
                .map(|(p, sd)| (p.weight / total, p.approx.as_ref().unwrap().mode[i], sd[i]))
                .collect(),
        })
        .collect()
}

/// Draws of the free hyperparameter coordinates.
///
/// Along each eigendirection of `−Ĥ` the draw is a split normal: the
/// standardized scale on each side comes from the log-posterior drop at the
/// matching exploration point, or is 1 when that point is unavailable (EB).
#[derive(Debug, Clone)]
pub struct HyperSampler {
    pub centre: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub scale_plus: Vec<f64>,
    pub scale_minus: Vec<f64>,
}

impl HyperSampler {
    pub fn new(mode: &HyperMode, exploration: &Exploration) -> Self {
        let d = mode.theta.len();
        let mut plus = vec![1.0; d];
        let mut minus = vec![1.0; d];
        if exploration.strategy == Strategy::FULL {
            let r = exploration.radius;
            for p in &exploration.points {
                let Some(i) = p.z.iter().position(|&z| z != 0.0) else {
                    continue;
                };
                let drop = mode.lhp - p.lhp;
                if drop.is_finite() && drop > 0.0 {
                    let s = (r / (2.0 * drop).sqrt()).clamp(0.1, 10.0);
                    if p.z[i] > 0.0 {
                        plus[i] = s;
                    } else {
                        minus[i] = s;
                    }
                }
            }
        }
        HyperSampler {
            centre: mode.theta.clone(),
            eigenvalues: exploration.eigenvalues.clone(),
            eigenvectors: exploration.eigenvectors.clone(),
            scale_plus: plus,
            scale_minus: minus,
        }
    }

    /// Gaussian `N(centre, V diag(1/λ) Vᵀ)`.
    pub fn gaussian(centre: Vec<f64>, eigenvalues: Vec<f64>, eigenvectors: DMatrix<f64>) -> Self {
        let d = centre.len();
        HyperSampler {
            centre,
            eigenvalues,
            eigenvectors,
            scale_plus: vec![1.0; d],
            scale_minus: vec![1.0; d],
        }
    }

    pub fn draw<R: rand::Rng>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.centre.len();
        let w: Vec<f64> = (0..d)
            .map(|i| {
                let z: f64 = StandardNormal.sample(rng);
                let s = if z > 0.0 { self.scale_plus[i] } else { self.scale_minus[i] };
                z * s / self.eigenvalues[i].sqrt()
            })
            .collect();
        (0..d)
            .map(|k| self.centre[k] + (0..d).map(|i| self.eigenvectors[(k, i)] * w[i]).sum::<f64>())
            .collect()
    }
}

/// Natural-scale quantities for a full coordinate vector: residual SDs,
/// random-effect variances and covariances, random-walk SDs and the
/// association scalars.
pub fn natural_quantities(layout: &HyperLayout, spec: &CheckedSpec, full: &[f64]) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for e in &layout.entries {
        let v = &full[e.full.clone()];
        match e.role {
            HyperRole::Residual { marker } => {
                out.push((format!("sigma_eps[{}]", spec.markers[marker].id), (-0.5 * v[0]).exp()));
            }
            HyperRole::ReBlock { block } => {
                let b = &spec.blocks[block];
                let names: Vec<String> = b
                    .members
                    .iter()
                    .map(|&(k, r)| format!("{}:{}", spec.markers[k].id, spec.markers[k].random[r]))
                    .collect();
                let sigma = theta::theta_to_covariance(b.dim(), v);
                for i in 0..b.dim() {
                    for j in 0..=i {
                        let name = if i == j {
                            format!("var[{}]", names[i])
                        } else {
                            format!("cov[{},{}]", names[j], names[i])
                        };
                        out.push((name, sigma[(i, j)]));
                    }
                }
            }
            HyperRole::Baseline { hazard } => {
                out.push((format!("sigma_rw[{}]", spec.hazards[hazard].cause), (-0.5 * v[0]).exp()));
            }
            HyperRole::Association { .. } => out.push((e.name.clone(), v[0])),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSummary {
    pub name: String,
    /// Value at the hyperparameter mode.
    pub mode: f64,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

/// Type-7 sample quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Monte Carlo summaries of the natural-scale hyperparameters.
pub fn hyper_summaries(
    layout: &HyperLayout,
    spec: &CheckedSpec,
    mode: &[f64],
    sampler: &HyperSampler,
    n: usize,
    seed: u64,
) -> Vec<HyperSummary> {
    let at_mode = natural_quantities(layout, spec, &layout.expand(mode).expect("mode has the free dimension"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n); at_mode.len()];
    for _ in 0..n {
        let t = sampler.draw(&mut rng);
        let full = layout.expand(&t).expect("sampler has the free dimension");
        for (col, (_, v)) in columns.iter_mut().zip(natural_quantities(layout, spec, &full)) {
            col.push(v);
        }
    }
    at_mode
        .into_iter()
        .zip(columns)
        .map(|((name, m), mut col)| {
            if col.is_empty() {
                return HyperSummary {
                    name,
                    mode: m,
                    mean: m,
                    sd: 0.0,
                    q025: m,
                    q975: m,
                };
            }
            let k = col.len() as f64;
            let mean = col.iter().sum::<f64>() / k;
            let var = if col.len() > 1 {
                col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            col.sort_by(f64::total_cmp);
            HyperSummary {
                name,
                mode: m,
                mean,
                sd: var.sqrt(),
                q025: quantile_sorted(&col, 0.025),
                q975: quantile_sorted(&col, 0.975),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PosteriorDraws {
    /// Free hyperparameter coordinates per draw.
    pub theta: Vec<Vec<f64>>,
    pub latent: Vec<Vec<f64>>,
}

/// Joint draws: a point is picked by its weight, the latent vector is drawn
/// from that point's Gaussian approximation and the hyperparameters from
/// the sampler.
pub fn sample_joint_posterior(fit: &FitResult, n: usize, seed: u64) -> Result<PosteriorDraws> {
    sample_from(&fit.points, fit.sampler.as_ref(), n, seed)
}

pub(crate) fn sample_from(
    points: &[HyperPoint],
    sampler: Option<&HyperSampler>,
    n: usize,
    seed: u64,
) -> Result<PosteriorDraws> {
    let mut draws = PosteriorDraws::default();
    if n == 0 {
        return Ok(draws);
    }
    let usable: Vec<&HyperPoint> = points.iter().filter(|p| p.weight > 0.0 && p.approx.is_some()).collect();
    if usable.is_empty() {
        return Err(Error::Validation("no hyperparameter point carries a latent approximation".into()));
    }
    let pick = WeightedIndex::new(usable.iter().map(|p| p.weight))
        .map_err(|e| Error::Validation(format!("point weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n {
        let p = usable[pick.sample(&mut rng)];
        let approx = p.approx.as_ref().unwrap();
        let z: Vec<f64> = (0..approx.mode.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let dev = approx.factor.sample_from_white(&z)?;
        draws.latent.push(approx.mode.iter().zip(&dev).map(|(m, d)| m + d).collect());
        draws.theta.push(match sampler {
            Some(s) => s.draw(&mut rng),
            None => p.theta.clone(),
        });
    }
    Ok(draws)
}
