use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use super::hyper::{Hyper, HyperLayout};
use super::{rw_structure, LatentIndex};
use crate::augment::{partition_time, poisson_augment, BinPartition, LongDataset, SurvDataset};
use crate::error::{Error, Result};
use crate::modelspec::{design_row, AssociationKind, CheckedSpec, Family, Transform};
use crate::numkernel::{SymSparse, SymbolicCholesky};

/// Diagonal ridge on each random-walk block, relative to its precision.
pub const RW_RIDGE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Longitudinal { record: usize, marker: usize },
    /// `cause` is 1-based.
    Hazard { cause: usize, bin: usize },
}

/// One likelihood contribution: `η = row·u + Σ_j φ_j (copy_j·u) + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTerm {
    pub source: Source,
    pub subject: usize,
    pub family: Family,
    pub y: f64,
    pub offset: f64,
    /// Marker whose residual precision applies (gaussian only).
    pub residual: Option<usize>,
    pub row: Vec<(usize, f64)>,
    /// `(association index, sub-row)` pairs.
    pub copies: Vec<(usize, Vec<(usize, f64)>)>,
}

impl ObservationTerm {
    pub fn eta(&self, u: &[f64], phi: &[f64]) -> f64 {
        let dot = |r: &[(usize, f64)]| r.iter().map(|&(i, c)| c * u[i]).sum::<f64>();
        self.offset + dot(&self.row) + self.copies.iter().map(|(j, r)| phi[*j] * dot(r)).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy)]
enum PriorSrc {
    Block { block: usize, i: usize, j: usize },
    Rw { hazard: usize, coef: f64 },
    Fixed { precision: f64 },
}

#[derive(Debug, Clone, Copy)]
struct PriorEntry {
    row: usize,
    col: usize,
    slot: usize,
    src: PriorSrc,
}

/// Flattened observation rows with precomputed Hessian slots.
#[derive(Debug, Clone, Default)]
struct Compiled {
    start: Vec<usize>,
    idx: Vec<usize>,
    base: Vec<f64>,
    copy_start: Vec<usize>,
    copy_phi: Vec<usize>,
    /// Each copy has one coefficient per entry of its observation's segment.
    copy_coef_start: Vec<usize>,
    copy_coef: Vec<f64>,
    pair_start: Vec<usize>,
    pair_slot: Vec<u32>,
    y: Vec<f64>,
    offset: Vec<f64>,
    family: Vec<Family>,
    residual: Vec<usize>,
    constant: Vec<f64>,
}

/// Quantities that depend on the hyperparameters only.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub theta: Vec<f64>,
    pub hyper: Hyper,
    pub logdet_q: f64,
    coef: Vec<f64>,
    qvals: Vec<f64>,
    /// Per observation term; 1 for non-gaussian families.
    pub obs_precision: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AssembledModel {
    pub spec: CheckedSpec,
    pub layout: HyperLayout,
    pub index: LatentIndex,
    pub partition: Option<BinPartition>,
    pub subjects: Vec<String>,
    terms: Vec<ObservationTerm>,
    compiled: Compiled,
    prior: Vec<PriorEntry>,
    rw_logdet: Vec<f64>,
    symbolic: Arc<SymbolicCholesky>,
}

fn subject_covariates(long: &LongDataset, surv: &SurvDataset) -> Vec<HashMap<String, f64>> {
    let mut maps: Vec<HashMap<String, f64>> = surv
        .records
        .iter()
        .map(|r| {
            surv.covariate_names
                .iter()
                .zip(&r.covariates)
                .filter(|(_, v)| !v.is_nan())
                .map(|(n, &v)| (n.clone(), v))
                .collect()
        })
        .collect();
    let index = surv.subject_index();
    for r in &long.records {
        if let Some(&i) = index.get(r.subject.as_str()) {
            for (n, &v) in long.covariate_names.iter().zip(&r.covariates) {
                if !v.is_nan() {
                    maps[i].entry(n.clone()).or_insert(v);
                }
            }
        }
    }
    maps
}

fn push_nonzero(row: &mut Vec<(usize, f64)>, i: usize, c: f64) {
    if c != 0.0 {
        row.push((i, c));
    }
}

impl AssembledModel {
    pub fn new(spec: &CheckedSpec, long: &LongDataset, surv: &SurvDataset) -> Result<Self> {
        let layout = HyperLayout::new(spec)?;
        let n = surv.len();
        if n == 0 {
            return Err(Error::Validation("no subjects".into()));
        }
        let index = LatentIndex::new(spec, n);
        let subjects: Vec<String> = surv.records.iter().map(|r| r.subject.clone()).collect();
        let subject_of = surv.subject_index();
        let covs = subject_covariates(long, surv);
        let m_causes = spec.n_causes();
        for r in &surv.records {
            if r.event > m_causes && m_causes > 0 {
                return Err(Error::Validation(format!(
                    "subject {}: event code {} exceeds the {m_causes} modelled causes",
                    r.subject, r.event
                )));
            }
        }

        let mut terms = Vec::new();
        let mut skipped = 0usize;
        for (ri, r) in long.records.iter().enumerate() {
            let Some(k) = spec.marker_index(&r.marker) else {
                skipped += 1;
                continue;
            };
            let i = *subject_of
                .get(r.subject.as_str())
                .ok_or_else(|| Error::OrphanSubject(r.subject.clone()))?;
            if r.time > surv.records[i].time {
                return Err(Error::Validation(format!(
                    "subject {}: measurement at {} after observed time {}",
                    r.subject, r.time, surv.records[i].time
                )));
            }
            let m = &spec.markers[k];
            let y = match m.transform {
                Some(Transform::Log) if r.value > 0.0 => r.value.ln(),
                Some(Transform::Log) => {
                    return Err(Error::Support(format!("log transform of {} for marker {}", r.value, m.id)))
                }
                None => r.value,
            };
            m.family.check_support(y)?;
            let (x, _) = design_row(&m.fixed, &m.basis, r.time, |name| {
                long.covariate(ri, name).or_else(|| covs[i].get(name).copied())
            })?;
            let mut row = Vec::new();
            for (j, &v) in x.iter().enumerate() {
                push_nonzero(&mut row, index.beta(k, j), v);
            }
            for (p, fi) in m.random_in_fixed().into_iter().enumerate() {
                push_nonzero(&mut row, index.re(i, m.re_slot[p]), x[fi]);
            }
            terms.push(ObservationTerm {
                source: Source::Longitudinal { record: ri, marker: k },
                subject: i,
                family: m.family,
                y,
                offset: 0.0,
                residual: (m.family == Family::Gaussian).then_some(k),
                row,
                copies: vec![],
            });
        }
        if skipped > 0 {
            log::debug!("{skipped} longitudinal records belong to markers outside the model");
        }

        let partition = if m_causes > 0 {
            Some(partition_time(surv, spec.n_bins)?)
        } else {
            None
        };
        if let Some(part) = &partition {
            let mut phi_start = Vec::with_capacity(m_causes);
            let mut acc = 0;
            for hz in &spec.hazards {
                phi_start.push(acc);
                acc += hz.associations.len();
            }
            let mut design_cache: HashMap<(usize, usize, u64), (Vec<f64>, Vec<f64>)> = HashMap::new();
            for po in poisson_augment(surv, part, m_causes) {
                let h = po.cause - 1;
                let hz = &spec.hazards[h];
                let i = po.subject;
                let mut row = vec![(index.baseline(h, po.bin), 1.0)];
                for (j, w) in hz.covariates.iter().enumerate() {
                    let v = surv.covariate(i, w).ok_or_else(|| {
                        Error::Validation(format!("subject {}: hazard covariate `{w}` is missing", subjects[i]))
                    })?;
                    push_nonzero(&mut row, index.gamma(h, j), v);
                }
                let mut copies = Vec::with_capacity(hz.associations.len());
                for (a, assoc) in hz.associations.iter().enumerate() {
                    let k = assoc.marker;
                    let m = &spec.markers[k];
                    let mut sub = Vec::new();
                    match &assoc.kind {
                        AssociationKind::SharedRandomEffect { term } => {
                            let p = m.random.iter().position(|t| t == term).expect("validated");
                            sub.push((index.re(i, m.re_slot[p]), 1.0));
                        }
                        kind => {
                            let key = (i, k, po.t_eval.to_bits());
                            if !design_cache.contains_key(&key) {
                                let d = design_row(&m.fixed, &m.basis, po.t_eval, |name| covs[i].get(name).copied())?;
                                design_cache.insert(key, d);
                            }
                            let (vals, ders) = &design_cache[&key];
                            let x = if *kind == AssociationKind::CurrentValue { vals } else { ders };
                            for (j, &v) in x.iter().enumerate() {
                                push_nonzero(&mut sub, index.beta(k, j), v);
                            }
                            for (p, fi) in m.random_in_fixed().into_iter().enumerate() {
                                push_nonzero(&mut sub, index.re(i, m.re_slot[p]), x[fi]);
                            }
                        }
                    }
                    copies.push((phi_start[h] + a, sub));
                }
                terms.push(ObservationTerm {
                    source: Source::Hazard {
                        cause: po.cause,
                        bin: po.bin,
                    },
                    subject: i,
                    family: Family::Poisson,
                    y: f64::from(po.y),
                    offset: po.exposure.ln(),
                    residual: None,
                    row,
                    copies,
                });
            }
        }

        let mut prior = Vec::new();
        for i in 0..n {
            for (b, block) in spec.blocks.iter().enumerate() {
                let d = block.dim();
                for c in 0..d {
                    for r in c..d {
                        prior.push(PriorEntry {
                            row: index.re(i, block.offset + r),
                            col: index.re(i, block.offset + c),
                            slot: 0,
                            src: PriorSrc::Block { block: b, i: r, j: c },
                        });
                    }
                }
            }
        }
        let mut rw_logdet = Vec::with_capacity(m_causes);
        for (h, hz) in spec.hazards.iter().enumerate() {
            let structure = rw_structure(hz.walk, spec.n_bins);
            let mut dense = DMatrix::<f64>::zeros(spec.n_bins, spec.n_bins);
            for &(r, c, v) in &structure {
                let coef = if r == c { v + RW_RIDGE } else { v };
                dense[(r, c)] = coef;
                dense[(c, r)] = coef;
                prior.push(PriorEntry {
                    row: index.baseline(h, r),
                    col: index.baseline(h, c),
                    slot: 0,
                    src: PriorSrc::Rw { hazard: h, coef },
                });
            }
            let chol = dense
                .cholesky()
                .ok_or_else(|| Error::Validation("random-walk structure is not positive definite".into()))?;
            rw_logdet.push(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>());
        }
        let fixed_prec = 1.0 / (spec.fixed_effect_sd * spec.fixed_effect_sd);
        for j in index.fixed_start()..index.dim {
            prior.push(PriorEntry {
                row: j,
                col: j,
                slot: 0,
                src: PriorSrc::Fixed { precision: fixed_prec },
            });
        }

        let mut compiled = compile(&terms);
        let symbolic = Arc::new(analyze_pattern(index.dim, &prior, &compiled)?);
        for e in &mut prior {
            e.slot = symbolic.slot(e.row, e.col).expect("prior entry in pattern");
        }
        fill_pair_slots(&mut compiled, &symbolic);

        Ok(AssembledModel {
            spec: spec.clone(),
            layout,
            index,
            partition,
            subjects,
            terms,
            compiled,
            prior,
            rw_logdet,
            symbolic,
        })
    }

    pub fn terms(&self) -> &[ObservationTerm] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.index.dim
    }

    pub fn n_obs(&self) -> usize {
        self.terms.len()
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    pub fn prepare(&self, theta: &[f64]) -> Result<Prepared> {
        let hyper = self.layout.decode(theta)?;
        self.prepare_hyper(theta.to_vec(), hyper)
    }

    fn prepare_hyper(&self, theta: Vec<f64>, hyper: Hyper) -> Result<Prepared> {
        let c = &self.compiled;
        let mut coef = c.base.clone();
        for o in 0..c.y.len() {
            let (s, e) = (c.start[o], c.start[o + 1]);
            for q in c.copy_start[o]..c.copy_start[o + 1] {
                let phi = hyper.phi[c.copy_phi[q]];
                if phi == 0.0 {
                    continue;
                }
                let cc = &c.copy_coef[c.copy_coef_start[q]..c.copy_coef_start[q] + (e - s)];
                for (a, &b) in coef[s..e].iter_mut().zip(cc) {
                    *a += phi * b;
                }
            }
        }
        let qvals: Vec<f64> = self
            .prior
            .iter()
            .map(|p| match p.src {
                PriorSrc::Block { block, i, j } => hyper.block_precision[block][(i, j)],
                PriorSrc::Rw { hazard, coef } => hyper.baseline[hazard] * coef,
                PriorSrc::Fixed { precision } => precision,
            })
            .collect();

        let mut logdet_q = 0.0;
        for q in &hyper.block_precision {
            let chol = q
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Support("random-effects precision is not positive definite".into()))?;
            let ld: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            logdet_q += self.index.n_subjects as f64 * ld;
        }
        for (h, &tau) in hyper.baseline.iter().enumerate() {
            logdet_q += self.index.n_bins as f64 * tau.ln() + self.rw_logdet[h];
        }
        let n_fixed = self.index.dim - self.index.fixed_start();
        logdet_q -= 2.0 * n_fixed as f64 * self.spec.fixed_effect_sd.ln();

        let obs_precision = c
            .residual
            .iter()
            .map(|&k| if k == usize::MAX { 1.0 } else { hyper.residual[k] })
            .collect();
        Ok(Prepared {
            theta,
            hyper,
            logdet_q,
            coef,
            qvals,
            obs_precision,
        })
    }

    pub fn eta(&self, prep: &Prepared, u: &[f64]) -> Vec<f64> {
        let c = &self.compiled;
        (0..c.y.len())
            .map(|o| {
                let (s, e) = (c.start[o], c.start[o + 1]);
                let mut acc = c.offset[o];
                for k in s..e {
                    acc += prep.coef[k] * u[c.idx[k]];
                }
                acc
            })
            .collect()
    }

    /// Log-likelihood sum and per-observation first and second derivatives
    /// in `η`.
    pub fn loglik(&self, prep: &Prepared, eta: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let c = &self.compiled;
        let n = eta.len();
        let (mut d1, mut d2) = (vec![0.0; n], vec![0.0; n]);
        let mut total = 0.0;
        for o in 0..n {
            let (y, e) = (c.y[o], eta[o]);
            let (v, g, h) = match c.family[o] {
                Family::Gaussian => {
                    let tau = prep.obs_precision[o];
                    let r = y - e;
                    (0.5 * tau.ln() - 0.5 * tau * r * r, tau * r, -tau)
                }
                Family::Poisson => {
                    let mu = e.exp();
                    (y * e - mu, y - mu, -mu)
                }
                Family::Binomial => Family::Binomial.loglik(y, e, 1.0),
            };
            total += v + c.constant[o];
            d1[o] = g;
            d2[o] = h;
        }
        (total, d1, d2)
    }

    pub fn q_mul(&self, prep: &Prepared, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for (p, &v) in self.prior.iter().zip(&prep.qvals) {
            out[p.row] += v * u[p.col];
            if p.row != p.col {
                out[p.col] += v * u[p.row];
            }
        }
        out
    }

    /// `Aᵀ w` for per-observation weights `w`.
    pub fn at_mul(&self, prep: &Prepared, w: &[f64]) -> Vec<f64> {
        let c = &self.compiled;
        let mut out = vec![0.0; self.index.dim];
        for (o, &wo) in w.iter().enumerate() {
            if wo == 0.0 {
                continue;
            }
            for k in c.start[o]..c.start[o + 1] {
                out[c.idx[k]] += prep.coef[k] * wo;
            }
        }
        out
    }

    /// Values by slot of `Q + Aᵀ diag(w) A`.
    pub fn hessian_slots(&self, prep: &Prepared, w: &[f64]) -> Vec<f64> {
        let c = &self.compiled;
        let mut h = vec![0.0; self.symbolic.n_slots()];
        for (p, &v) in self.prior.iter().zip(&prep.qvals) {
            h[p.slot] += v;
        }
        for (o, &wo) in w.iter().enumerate() {
            let (s, e) = (c.start[o], c.start[o + 1]);
            let a = &prep.coef[s..e];
            let slots = &c.pair_slot[c.pair_start[o]..c.pair_start[o + 1]];
            let mut k = 0;
            for p in 0..a.len() {
                let wp = wo * a[p];
                for &aq in &a[..=p] {
                    h[slots[k] as usize] += wp * aq;
                    k += 1;
                }
            }
        }
        h
    }

    /// Prior precision `Q(ω)` as a sparse matrix.
    pub fn assemble_prior(&self, prep: &Prepared) -> Result<SymSparse<f64>> {
        SymSparse::from_triplets(
            self.index.dim,
            self.prior.iter().zip(&prep.qvals).map(|(p, &v)| (p.row, p.col, v)),
        )
    }

    /// Observation design with the association copies folded in at the
    /// prepared `φ`, as `(row, col, value)` triplets of `A`.
    pub fn design_triplets(&self, prep: &Prepared) -> Vec<(usize, usize, f64)> {
        let c = &self.compiled;
        let mut out = Vec::with_capacity(c.idx.len());
        for o in 0..c.y.len() {
            for k in c.start[o]..c.start[o + 1] {
                out.push((o, c.idx[k], prep.coef[k]));
            }
        }
        out
    }

    /// Responses with offsets, one per observation term.
    pub fn responses(&self) -> (&[f64], &[f64]) {
        (&self.compiled.y, &self.compiled.offset)
    }
}

fn compile(terms: &[ObservationTerm]) -> Compiled {
    let mut c = Compiled {
        start: vec![0],
        copy_start: vec![0],
        ..Default::default()
    };
    for t in terms {
        let mut union: Vec<usize> = t
            .row
            .iter()
            .map(|&(i, _)| i)
            .chain(t.copies.iter().flat_map(|(_, r)| r.iter().map(|&(i, _)| i)))
            .collect();
        union.sort_unstable();
        union.dedup();
        let pos = |i: usize| union.binary_search(&i).expect("in union");
        let mut base = vec![0.0; union.len()];
        for &(i, v) in &t.row {
            base[pos(i)] += v;
        }
        for (j, r) in &t.copies {
            let mut cc = vec![0.0; union.len()];
            for &(i, v) in r {
                cc[pos(i)] += v;
            }
            c.copy_phi.push(*j);
            c.copy_coef_start.push(c.copy_coef.len());
            c.copy_coef.extend(cc);
        }
        c.copy_start.push(c.copy_phi.len());
        c.idx.extend(&union);
        c.base.extend(base);
        c.start.push(c.idx.len());
        c.y.push(t.y);
        c.offset.push(t.offset);
        c.family.push(t.family);
        c.residual.push(t.residual.unwrap_or(usize::MAX));
        c.constant.push(match t.family {
            Family::Gaussian => -0.5 * std::f64::consts::TAU.ln(),
            Family::Poisson if t.y > 1.0 => -ln_gamma(t.y + 1.0),
            _ => 0.0,
        });
    }
    c
}

fn analyze_pattern(dim: usize, prior: &[PriorEntry], c: &Compiled) -> Result<SymbolicCholesky> {
    let mut seen: HashSet<(usize, usize)> = prior.iter().map(|p| (p.row, p.col)).collect();
    let mut last_union: &[usize] = &[];
    for o in 0..c.y.len() {
        let seg = &c.idx[c.start[o]..c.start[o + 1]];
        if seg == last_union {
            continue;
        }
        for p in 0..seg.len() {
            for q in 0..=p {
                seen.insert((seg[p], seg[q]));
            }
        }
        last_union = seg;
    }
    let pattern = SymSparse::from_triplets(dim, seen.into_iter().map(|(r, c)| (r, c, 0.0)))?;
    Ok(SymbolicCholesky::analyze(&pattern))
}

fn fill_pair_slots(c: &mut Compiled, symbolic: &SymbolicCholesky) {
    c.pair_start = Vec::with_capacity(c.y.len() + 1);
    c.pair_start.push(0);
    c.pair_slot.clear();
    let mut cache: HashMap<(usize, usize), u32> = HashMap::new();
    for o in 0..c.y.len() {
        let seg = &c.idx[c.start[o]..c.start[o + 1]];
        for p in 0..seg.len() {
            for q in 0..=p {
                let key = (seg[p], seg[q]);
                let slot = *cache
                    .entry(key)
                    .or_insert_with(|| symbolic.slot(key.0, key.1).expect("pair in pattern") as u32);
                c.pair_slot.push(slot);
            }
        }
        c.pair_start.push(c.pair_slot.len());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{LongRecord, SurvRecord};
    use crate::modelspec::{
        validate, AssociationTerm, BaselineSpec, LongSubmodelSpec, ModelSpec, PriorSpec, SurvSubmodelSpec,
        TimeBasis,
    };
    use crate::numkernel::factorize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn terms(s: &[&str]) -> Vec<crate::modelspec::Term> {
        s.iter().map(|t| t.parse().unwrap()).collect()
    }

    fn toy_spec(random: &[&str], assoc: Vec<AssociationKind>) -> ModelSpec {
        ModelSpec {
            markers: vec![LongSubmodelSpec {
                id: "y1".into(),
                family: Family::Gaussian,
                transform: None,
                time_basis: TimeBasis::Linear,
                fixed: terms(&["intercept", "time", "x1"]),
                random: terms(random),
                residual_prior: None,
            }],
            re_blocks: None,
            hazards: vec![SurvSubmodelSpec {
                cause: 1,
                covariates: vec!["w".into()],
                baseline: BaselineSpec {
                    bins: 3,
                    ..Default::default()
                },
                associations: assoc
                    .into_iter()
                    .map(|kind| AssociationTerm {
                        marker: "y1".into(),
                        kind,
                        label: None,
                        prior: None,
                    })
                    .collect(),
            }],
            priors: PriorSpec::default(),
        }
    }

    fn all_kinds() -> Vec<AssociationKind> {
        vec![
            AssociationKind::CurrentValue,
            AssociationKind::CurrentSlope,
            AssociationKind::SharedRandomEffect {
                term: "intercept".parse().unwrap(),
            },
        ]
    }

    const X1: [f64; 3] = [0.3, -1.2, 0.8];
    const W: [f64; 3] = [0.5, -1.0, 2.0];
    const TSTAR: [f64; 3] = [2.5, 3.0, 1.2];

    fn toy_data() -> (LongDataset, SurvDataset) {
        let mut long = LongDataset {
            covariate_names: vec!["x1".into()],
            records: vec![],
        };
        for i in 0..3 {
            for (j, t) in [0.0, 1.0, 2.0].iter().enumerate() {
                if *t <= TSTAR[i] {
                    long.records.push(LongRecord {
                        subject: format!("s{i}"),
                        marker: "y1".into(),
                        time: *t,
                        value: 0.1 * (i + j) as f64 - 0.2,
                        covariates: vec![X1[i]],
                    });
                }
            }
        }
        let surv = SurvDataset {
            covariate_names: vec!["w".into(), "x1".into()],
            records: (0..3)
                .map(|i| SurvRecord {
                    subject: format!("s{i}"),
                    time: TSTAR[i],
                    event: [1, 0, 1][i],
                    covariates: vec![W[i], X1[i]],
                })
                .collect(),
        };
        (long, surv)
    }

    fn toy_model(random: &[&str], assoc: Vec<AssociationKind>) -> AssembledModel {
        let spec = validate(&toy_spec(random, assoc)).unwrap();
        let (long, surv) = toy_data();
        AssembledModel::new(&spec, &long, &surv).unwrap()
    }

    fn random_u(dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn random_intercept_layout() {
        let spec = validate(&toy_spec(&["intercept"], vec![])).unwrap();
        let (long, mut surv) = toy_data();
        surv.records.truncate(2);
        let long = LongDataset {
            records: long.records.into_iter().filter(|r| r.subject != "s2").collect(),
            ..long
        };
        let m = AssembledModel::new(&spec, &long, &surv).unwrap();
        assert_eq!(m.dim(), 2 + 3 + 1 + 3);
        assert_eq!(m.dim(), spec.latent_dim(2));
        assert_eq!(m.index.baseline(0, 0), 2);
        assert_eq!(m.index.gamma(0, 0), 5);
        assert_eq!(m.index.beta(0, 0), 6);
    }

    #[test]
    fn longitudinal_row_at_time_two() {
        let m = toy_model(&["intercept", "time"], vec![]);
        let t = m
            .terms()
            .iter()
            .find(|t| matches!(t.source, Source::Longitudinal { .. }) && t.subject == 0 && t.row.contains(&(m.index.beta(0, 1), 2.0)))
            .unwrap();
        let beta: Vec<f64> = (0..3).map(|j| t.row.iter().find(|e| e.0 == m.index.beta(0, j)).unwrap().1).collect();
        assert_eq!(beta, vec![1.0, 2.0, X1[0]]);
        let b: Vec<f64> = (0..2).map(|s| t.row.iter().find(|e| e.0 == m.index.re(0, s)).unwrap().1).collect();
        assert_eq!(b, vec![1.0, 2.0]);
    }

    #[test]
    fn eta_matches_direct_formula_for_all_association_kinds() {
        let m = toy_model(&["intercept", "time"], all_kinds());
        let u = random_u(m.dim(), 1);
        let phi = [0.5, -0.7, 1.3];
        let ix = &m.index;
        let part = m.partition.as_ref().unwrap();
        for t in m.terms() {
            let i = t.subject;
            let b0 = u[ix.re(i, 0)];
            let b1 = u[ix.re(i, 1)];
            let beta: Vec<f64> = (0..3).map(|j| u[ix.beta(0, j)]).collect();
            let direct = match t.source {
                Source::Longitudinal { record: _, .. } => {
                    let time = t.row.iter().find(|e| e.0 == ix.beta(0, 1)).map_or(0.0, |e| e.1);
                    (beta[0] + b0) + (beta[1] + b1) * time + beta[2] * X1[i]
                }
                Source::Hazard { bin, .. } => {
                    let lo = part.cuts[bin];
                    let hi = part.cuts[bin + 1].min(TSTAR[i]);
                    let tm = 0.5 * (lo + hi);
                    let cv = (beta[0] + b0) + (beta[1] + b1) * tm + beta[2] * X1[i];
                    let slope = beta[1] + b1;
                    (hi - lo).ln() + u[ix.baseline(0, bin)] + u[ix.gamma(0, 0)] * W[i]
                        + phi[0] * cv
                        + phi[1] * slope
                        + phi[2] * b0
                }
            };
            assert!((t.eta(&u, &phi) - direct).abs() < 1e-12);
        }
        // compiled path agrees with the term representation
        let mut theta = m.layout.initial_theta();
        let n = theta.len();
        theta[n - 3..].copy_from_slice(&phi);
        let prep = m.prepare(&theta).unwrap();
        let eta = m.eta(&prep, &u);
        for (t, e) in m.terms().iter().zip(&eta) {
            assert!((t.eta(&u, &phi) - e).abs() < 1e-12);
        }
    }

    #[test]
    fn copy_contribution_is_linear_in_phi() {
        let m = toy_model(&["intercept", "time"], vec![AssociationKind::CurrentValue]);
        let u = random_u(m.dim(), 2);
        for t in m.terms().iter().filter(|t| matches!(t.source, Source::Hazard { .. })) {
            let base = t.eta(&u, &[0.0]);
            let half = t.eta(&u, &[0.5]) - base;
            let one = t.eta(&u, &[1.0]) - base;
            assert!((one - 2.0 * half).abs() < 1e-12);
        }
    }

    #[test]
    fn slope_copy_selects_slope_coefficients() {
        let m = toy_model(&["intercept", "time"], vec![AssociationKind::CurrentSlope]);
        let ix = &m.index;
        let t = m.terms().iter().find(|t| matches!(t.source, Source::Hazard { .. })).unwrap();
        let sub = &t.copies[0].1;
        assert_eq!(sub, &vec![(ix.beta(0, 1), 1.0), (ix.re(t.subject, 1), 1.0)]);

        // derivative of the current-value functional in t
        let u = random_u(m.dim(), 3);
        let i = t.subject;
        let cv = |tt: f64| {
            let (x, _) = design_row(&m.spec.markers[0].fixed, &m.spec.markers[0].basis, tt, |_| Some(X1[i])).unwrap();
            (0..3).map(|j| x[j] * u[ix.beta(0, j)]).sum::<f64>() + u[ix.re(i, 0)] + tt * u[ix.re(i, 1)]
        };
        let h = 1e-5;
        let fd = (cv(1.3 + h) - cv(1.3 - h)) / (2.0 * h);
        let exact: f64 = sub.iter().map(|&(j, c)| c * u[j]).sum();
        assert!((fd - exact).abs() < 1e-8);
    }

    fn dense_prior_oracle(m: &AssembledModel, hyper: &Hyper) -> DMatrix<f64> {
        let n = m.dim();
        let mut q = DMatrix::zeros(n, n);
        let d = m.spec.re_dim;
        for i in 0..m.index.n_subjects {
            for r in 0..d {
                for c in 0..d {
                    q[(i * d + r, i * d + c)] = hyper.block_precision[0][(r, c)];
                }
            }
        }
        let b = m.index.n_bins;
        let s = m.index.baseline_start;
        let mut dm = DMatrix::<f64>::zeros(b - 2, b);
        for r in 0..b - 2 {
            dm[(r, r)] = 1.0;
            dm[(r, r + 1)] = -2.0;
            dm[(r, r + 2)] = 1.0;
        }
        let rw = (dm.transpose() * dm + DMatrix::identity(b, b) * RW_RIDGE) * hyper.baseline[0];
        q.view_mut((s, s), (b, b)).copy_from(&rw);
        for j in m.index.fixed_start()..n {
            q[(j, j)] = 1.0 / 6.25;
        }
        q
    }

    #[test]
    fn prior_matches_dense_oracle() {
        let m = toy_model(&["intercept", "time"], all_kinds());
        let theta: Vec<f64> = random_u(m.layout.dim(), 4);
        let prep = m.prepare(&theta).unwrap();
        let oracle = dense_prior_oracle(&m, &prep.hyper);
        let q = m.assemble_prior(&prep).unwrap().to_dense();
        for i in 0..m.dim() {
            for j in 0..m.dim() {
                assert!((q[i][j] - oracle[(i, j)]).abs() < 1e-12, "({i},{j})");
            }
        }
        let eig: f64 = oracle.clone().symmetric_eigen().eigenvalues.iter().map(|l| l.ln()).sum();
        assert!((prep.logdet_q - eig).abs() < 1e-8);
        let f = factorize(&m.assemble_prior(&prep).unwrap()).unwrap();
        assert!((f.logdet() - prep.logdet_q).abs() < 1e-8);

        let block_ld = prep.hyper.block_precision[0].clone().determinant().ln();
        let re = oracle.view((0, 0), (6, 6)).into_owned();
        assert!((re.determinant().ln() - 3.0 * block_ld).abs() < 1e-10);

        let u = random_u(m.dim(), 5);
        let qu = m.q_mul(&prep, &u);
        let dense = &oracle * nalgebra::DVector::from_column_slice(&u);
        for i in 0..m.dim() {
            assert!((qu[i] - dense[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn hessian_slots_match_dense_assembly() {
        let m = toy_model(&["intercept", "time"], all_kinds());
        let theta = random_u(m.layout.dim(), 6);
        let prep = m.prepare(&theta).unwrap();
        let w: Vec<f64> = random_u(m.n_obs(), 7).iter().map(|v| v.abs() + 0.1).collect();
        let mut dense = dense_prior_oracle(&m, &prep.hyper);
        let n = m.dim();
        let mut a = DMatrix::<f64>::zeros(m.n_obs(), n);
        for (o, j, v) in m.design_triplets(&prep) {
            a[(o, j)] += v;
        }
        dense += a.transpose() * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(w.clone())) * &a;
        let slots = m.hessian_slots(&prep, &w);
        let f = m.symbolic().factorize_slots(&slots).unwrap();
        let rec = f.reconstruct_dense();
        for i in 0..n {
            for j in 0..n {
                assert!((rec[i][j] - dense[(i, j)]).abs() < 1e-10 * (1.0 + dense[(i, j)].abs()));
            }
        }
    }

    #[test]
    fn event_code_beyond_causes_is_rejected() {
        let spec = validate(&toy_spec(&["intercept"], vec![])).unwrap();
        let (long, mut surv) = toy_data();
        surv.records[0].event = 2;
        assert!(matches!(AssembledModel::new(&spec, &long, &surv), Err(Error::Validation(_))));
    }
}
