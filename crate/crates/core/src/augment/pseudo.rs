use serde::{Deserialize, Serialize};

use super::{SurvDataset, SurvRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinPartition {
    pub cuts: Vec<f64>,
}

impl BinPartition {
    pub fn n_bins(&self) -> usize {
        self.cuts.len() - 1
    }

    pub fn width(&self, b: usize) -> f64 {
        self.cuts[b + 1] - self.cuts[b]
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.cuts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Bin holding `t` under left-open, right-closed intervals; times past
    /// the last cut fall in the last bin.
    pub fn bin_of(&self, t: f64) -> usize {
        let upper = self.cuts[1..].partition_point(|&c| c < t);
        upper.min(self.n_bins() - 1)
    }
}

/// Equal-width bins over `[0, max T*]`.
pub fn partition_time(surv: &SurvDataset, n_bins: usize) -> Result<BinPartition> {
    if n_bins < 3 {
        return Err(Error::Validation(format!("need at least 3 bins, got {n_bins}")));
    }
    let tmax = surv.max_time();
    if !(tmax > 0.0) {
        return Err(Error::Validation("survival data has no positive times".into()));
    }
    let cuts = (0..=n_bins).map(|i| tmax * i as f64 / n_bins as f64).collect();
    Ok(BinPartition { cuts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoObservation {
    /// Row of the subject in the survival dataset.
    pub subject: usize,
    /// Cause, 1-based.
    pub cause: usize,
    pub bin: usize,
    pub y: u8,
    pub exposure: f64,
    pub t_eval: f64,
}

/// One pseudo-observation per subject, cause and bin overlapped by `(0, T*]`.
pub fn poisson_augment(surv: &SurvDataset, part: &BinPartition, n_causes: usize) -> Vec<PseudoObservation> {
    let mut out = Vec::new();
    for (i, rec) in surv.records.iter().enumerate() {
        for m in 1..=n_causes {
            push_subject(&mut out, i, rec, part, m);
        }
    }
    out
}

fn push_subject(out: &mut Vec<PseudoObservation>, i: usize, rec: &SurvRecord, part: &BinPartition, m: usize) {
    let last = part.bin_of(rec.time);
    for b in 0..=last {
        let lo = part.cuts[b];
        let hi = if b == last { rec.time } else { part.cuts[b + 1] };
        out.push(PseudoObservation {
            subject: i,
            cause: m,
            bin: b,
            y: u8::from(b == last && rec.event == m),
            exposure: hi - lo,
            t_eval: 0.5 * (lo + hi),
        });
    }
}

/// A hazard that is constant on each bin of a partition and keeps its last
/// value past the final cut.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    pub cuts: Vec<f64>,
    pub rates: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn value_at(&self, t: f64) -> f64 {
        let part = BinPartition { cuts: self.cuts.clone() };
        self.rates[part.bin_of(t)]
    }

    pub fn cumulative(&self, t: f64) -> f64 {
        let n = self.rates.len();
        let mut acc = 0.0;
        for b in 0..n {
            let lo = self.cuts[b];
            if lo >= t {
                break;
            }
            let hi = if b + 1 == n { t } else { self.cuts[b + 1].min(t) };
            acc += self.rates[b] * (hi - lo);
        }
        acc
    }
}

/// `Σ_m 1(δ = m) log λ_m(T*) − Σ_m ∫₀^{T*} λ_m(t) dt`.
pub fn exact_surv_loglik(rec: &SurvRecord, hazards: &[PiecewiseConstant]) -> f64 {
    let mut ll = 0.0;
    for (m, h) in hazards.iter().enumerate() {
        if rec.event == m + 1 {
            ll += h.value_at(rec.time).ln();
        }
        ll -= h.cumulative(rec.time);
    }
    ll
}

/// `Σ [y log λ − λ e]` over pseudo-observations, with `λ = hazards[m−1]` on
/// the observation's bin.
///
/// This is the Poisson log-likelihood with offset `log e` minus the term
/// `y log e`, which does not involve any parameter.
pub fn augmented_loglik(obs: &[PseudoObservation], hazards: &[PiecewiseConstant]) -> f64 {
    obs.iter()
        .map(|o| {
            let lambda = hazards[o.cause - 1].rates[o.bin];
            f64::from(o.y) * lambda.ln() - lambda * o.exposure
        })
        .sum()
}
