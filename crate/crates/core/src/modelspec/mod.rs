//! Declarative model description and its validation.

mod family;
mod prior;
mod spline;
mod term;
pub mod theta;

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use family::{loglik_eta, Family, Link};
pub use prior::{
    gamma_logpdf, inverse_wishart_logpdf, ln_mvgamma, normal_logpdf, pc_prec_logpdf, CovariancePrior,
    InverseWishart, ResolvedCovPrior, ScalarPrior, DEFAULT_PC_LAMBDA,
};
pub use spline::{ns_basis, NaturalSpline};
pub use term::{design_row, BasisEval, Term, TimeBasis, TimeTerm};

use crate::error::{Error, Result};

/// Largest random-effects block the engine accepts.
pub const MAX_BLOCK_DIM: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub markers: Vec<LongSubmodelSpec>,
    /// Correlated random-effects blocks. When absent each marker gets one
    /// block holding all of its random terms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub re_blocks: Option<Vec<REBlockSpec>>,
    #[serde(default)]
    pub hazards: Vec<SurvSubmodelSpec>,
    #[serde(default)]
    pub priors: PriorSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LongSubmodelSpec {
    pub id: String,
    pub family: Family,
    /// Applied to the response before fitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform: Option<Transform>,
    #[serde(default)]
    pub time_basis: TimeBasis,
    pub fixed: Vec<Term>,
    #[serde(default)]
    pub random: Vec<Term>,
    /// Overrides the default residual-precision prior (gaussian only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_prior: Option<ScalarPrior>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct REMember {
    pub marker: String,
    pub term: Term,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct REBlockSpec {
    pub members: Vec<REMember>,
    #[serde(default)]
    pub prior: CovariancePrior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RandomWalk {
    Rw1,
    Rw2,
}

fn default_rw() -> RandomWalk {
    RandomWalk::Rw2
}

fn default_bins() -> usize {
    15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSpec {
    #[serde(default = "default_rw")]
    pub kind: RandomWalk,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<ScalarPrior>,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        BaselineSpec {
            kind: RandomWalk::Rw2,
            bins: default_bins(),
            prior: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssociationKind {
    CurrentValue,
    CurrentSlope,
    SharedRandomEffect { term: Term },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationTerm {
    pub marker: String,
    #[serde(flatten)]
    pub kind: AssociationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<ScalarPrior>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurvSubmodelSpec {
    pub cause: usize,
    /// Survival-file covariate columns entering the hazard.
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub baseline: BaselineSpec,
    #[serde(default)]
    pub associations: Vec<AssociationTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    /// Standard deviation of the zero-mean Gaussian prior on fixed effects.
    #[serde(default = "default_fixed_sd")]
    pub fixed_effect_sd: f64,
    #[serde(default = "default_residual")]
    pub residual_precision: ScalarPrior,
    #[serde(default = "default_baseline")]
    pub baseline_precision: ScalarPrior,
    #[serde(default = "default_association")]
    pub association: ScalarPrior,
}

fn default_fixed_sd() -> f64 {
    2.5
}
fn default_residual() -> ScalarPrior {
    ScalarPrior::Gamma { shape: 1.0, rate: 5e-5 }
}
fn default_baseline() -> ScalarPrior {
    ScalarPrior::PcPrec {
        lambda: DEFAULT_PC_LAMBDA,
    }
}
fn default_association() -> ScalarPrior {
    ScalarPrior::Normal { mean: 0.0, sd: 2.5 }
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            fixed_effect_sd: default_fixed_sd(),
            residual_precision: default_residual(),
            baseline_precision: default_baseline(),
            association: default_association(),
        }
    }
}

impl ModelSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a spec, choosing the format by extension (`.json`, otherwise TOML).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckedMarker {
    pub id: String,
    pub family: Family,
    pub transform: Option<Transform>,
    pub basis: BasisEval,
    pub fixed: Vec<Term>,
    pub random: Vec<Term>,
    /// Position of each random term inside a subject's random-effect segment.
    pub re_slot: Vec<usize>,
    /// Residual precision prior; `None` unless gaussian.
    pub residual_prior: Option<ScalarPrior>,
}

impl CheckedMarker {
    /// Index in `fixed` of each random term.
    pub fn random_in_fixed(&self) -> Vec<usize> {
        self.random
            .iter()
            .map(|r| self.fixed.iter().position(|f| f == r).expect("validated"))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct CheckedBlock {
    /// `(marker index, index into that marker's random terms)`.
    pub members: Vec<(usize, usize)>,
    /// Offset of the block inside a subject's random-effect segment.
    pub offset: usize,
    pub prior: ResolvedCovPrior,
}

impl CheckedBlock {
    pub fn dim(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone)]
pub struct CheckedAssociation {
    pub marker: usize,
    pub kind: AssociationKind,
    pub label: String,
    pub prior: ScalarPrior,
}

#[derive(Debug, Clone)]
pub struct CheckedHazard {
    pub cause: usize,
    pub covariates: Vec<String>,
    pub walk: RandomWalk,
    pub prior: ScalarPrior,
    pub associations: Vec<CheckedAssociation>,
}

/// A spec whose invariants hold, with derived layout information.
#[derive(Debug, Clone)]
pub struct CheckedSpec {
    pub spec: ModelSpec,
    pub markers: Vec<CheckedMarker>,
    pub blocks: Vec<CheckedBlock>,
    /// Hazards ordered by cause.
    pub hazards: Vec<CheckedHazard>,
    pub re_dim: usize,
    pub n_bins: usize,
    pub fixed_effect_sd: f64,
}

impl CheckedSpec {
    pub fn n_causes(&self) -> usize {
        self.hazards.len()
    }

    pub fn n_fixed(&self) -> usize {
        self.markers.iter().map(|m| m.fixed.len()).sum()
    }

    pub fn n_gamma(&self) -> usize {
        self.hazards.iter().map(|h| h.covariates.len()).sum()
    }

    pub fn latent_dim(&self, n_subjects: usize) -> usize {
        n_subjects * self.re_dim + self.n_causes() * self.n_bins + self.n_gamma() + self.n_fixed()
    }

    pub fn marker_index(&self, id: &str) -> Option<usize> {
        self.markers.iter().position(|m| m.id == id)
    }
}

pub fn validate(spec: &ModelSpec) -> Result<CheckedSpec> {
    if spec.markers.is_empty() {
        return Err(Error::spec("markers", "at least one longitudinal marker is required"));
    }
    let priors = &spec.priors;
    if !(priors.fixed_effect_sd > 0.0) {
        return Err(Error::spec("priors.fixed_effect_sd", "must be positive"));
    }
    priors.residual_precision.validate(true, "priors.residual_precision")?;
    priors.baseline_precision.validate(true, "priors.baseline_precision")?;
    priors.association.validate(false, "priors.association")?;

    let mut seen = HashSet::new();
    let mut markers = Vec::with_capacity(spec.markers.len());
    for (k, m) in spec.markers.iter().enumerate() {
        let path = format!("markers[{k}]");
        if m.id.is_empty() || !seen.insert(m.id.as_str()) {
            return Err(Error::spec(format!("{path}.id"), "marker ids must be non-empty and unique"));
        }
        if m.transform.is_some() && m.family != Family::Gaussian {
            return Err(Error::spec(format!("{path}.transform"), "transforms apply to gaussian markers only"));
        }
        let basis = BasisEval::new(&m.time_basis)?;
        if !m.fixed.contains(&Term::Intercept) {
            return Err(Error::spec(format!("{path}.fixed"), "intercept must be present"));
        }
        let mut uniq = HashSet::new();
        for (j, t) in m.fixed.iter().enumerate() {
            if !uniq.insert(t) {
                return Err(Error::spec(format!("{path}.fixed[{j}]"), format!("duplicate term {t}")));
            }
            if let Some(tt) = t.time_term() {
                if !basis.accepts(tt) {
                    return Err(Error::spec(
                        format!("{path}.fixed[{j}]"),
                        format!("{t} does not belong to the marker's time basis"),
                    ));
                }
            }
        }
        let mut ruq = HashSet::new();
        for (j, t) in m.random.iter().enumerate() {
            if !m.fixed.contains(t) {
                return Err(Error::spec(
                    format!("{path}.random[{j}]"),
                    format!("random term {t} is not among the fixed terms"),
                ));
            }
            if !ruq.insert(t) {
                return Err(Error::spec(format!("{path}.random[{j}]"), format!("duplicate term {t}")));
            }
        }
        let residual_prior = match m.family {
            Family::Gaussian => {
                let p = m.residual_prior.unwrap_or(priors.residual_precision);
                p.validate(true, &format!("{path}.residual_prior"))?;
                Some(p)
            }
            _ if m.residual_prior.is_some() => {
                return Err(Error::spec(format!("{path}.residual_prior"), "only gaussian markers have a residual"));
            }
            _ => None,
        };
        markers.push(CheckedMarker {
            id: m.id.clone(),
            family: m.family,
            transform: m.transform,
            basis,
            fixed: m.fixed.clone(),
            random: m.random.clone(),
            re_slot: vec![usize::MAX; m.random.len()],
            residual_prior,
        });
    }

    let block_specs: Vec<REBlockSpec> = match &spec.re_blocks {
        Some(b) => b.clone(),
        None => spec
            .markers
            .iter()
            .filter(|m| !m.random.is_empty())
            .map(|m| REBlockSpec {
                members: m
                    .random
                    .iter()
                    .map(|t| REMember {
                        marker: m.id.clone(),
                        term: t.clone(),
                    })
                    .collect(),
                prior: CovariancePrior::default(),
            })
            .collect(),
    };
    let mut blocks = Vec::with_capacity(block_specs.len());
    let mut offset = 0;
    for (b, bs) in block_specs.iter().enumerate() {
        let path = format!("re_blocks[{b}]");
        if bs.members.is_empty() {
            return Err(Error::spec(path, "block has no members"));
        }
        if bs.members.len() > MAX_BLOCK_DIM {
            return Err(Error::spec(
                path,
                format!("block dimension {} exceeds the limit of {MAX_BLOCK_DIM}", bs.members.len()),
            ));
        }
        let mut members = Vec::with_capacity(bs.members.len());
        for (j, mem) in bs.members.iter().enumerate() {
            let mpath = format!("{path}.members[{j}]");
            let k = spec
                .markers
                .iter()
                .position(|m| m.id == mem.marker)
                .ok_or_else(|| Error::spec(&mpath, format!("unknown marker {}", mem.marker)))?;
            let r = markers[k]
                .random
                .iter()
                .position(|t| *t == mem.term)
                .ok_or_else(|| Error::spec(&mpath, format!("{} is not a random term of {}", mem.term, mem.marker)))?;
            if markers[k].re_slot[r] != usize::MAX {
                return Err(Error::spec(&mpath, "random term listed in more than one block"));
            }
            markers[k].re_slot[r] = offset + j;
            members.push((k, r));
        }
        let prior = bs.prior.resolve(members.len(), &format!("{path}.prior"))?;
        blocks.push(CheckedBlock { members, offset, prior });
        offset += bs.members.len();
    }
    for (k, m) in markers.iter().enumerate() {
        if let Some(r) = m.re_slot.iter().position(|&s| s == usize::MAX) {
            return Err(Error::spec(
                format!("markers[{k}].random[{r}]"),
                "random term is not covered by any block",
            ));
        }
    }

    let mut hazards = Vec::with_capacity(spec.hazards.len());
    let mut n_bins = 0;
    let mut label_count = 0;
    let mut labels = HashSet::new();
    let mut by_cause: BTreeMap<usize, usize> = BTreeMap::new();
    for (h, hs) in spec.hazards.iter().enumerate() {
        if by_cause.insert(hs.cause, h).is_some() {
            return Err(Error::spec(format!("hazards[{h}].cause"), "duplicate cause"));
        }
    }
    let m_total = spec.hazards.len();
    for (c, (&cause, &h)) in by_cause.iter().enumerate() {
        let path = format!("hazards[{h}]");
        if cause != c + 1 {
            return Err(Error::spec(format!("{path}.cause"), format!("causes must be numbered 1..{m_total}")));
        }
        let hs = &spec.hazards[h];
        if hs.baseline.bins < 3 {
            return Err(Error::spec(format!("{path}.baseline.bins"), "at least 3 bins are required"));
        }
        if n_bins != 0 && hs.baseline.bins != n_bins {
            return Err(Error::spec(format!("{path}.baseline.bins"), "all hazards share one time partition"));
        }
        n_bins = hs.baseline.bins;
        let prior = hs.baseline.prior.unwrap_or(priors.baseline_precision);
        prior.validate(true, &format!("{path}.baseline.prior"))?;
        let mut cov_seen = HashSet::new();
        for (j, w) in hs.covariates.iter().enumerate() {
            if w.is_empty() || !cov_seen.insert(w) {
                return Err(Error::spec(format!("{path}.covariates[{j}]"), "empty or duplicate covariate"));
            }
        }
        let mut associations = Vec::with_capacity(hs.associations.len());
        for (j, a) in hs.associations.iter().enumerate() {
            let apath = format!("{path}.associations[{j}]");
            label_count += 1;
            let k = spec
                .markers
                .iter()
                .position(|m| m.id == a.marker)
                .ok_or_else(|| Error::spec(&apath, format!("unknown marker {}", a.marker)))?;
            if let AssociationKind::SharedRandomEffect { term } = &a.kind {
                if !markers[k].random.contains(term) {
                    return Err(Error::spec(&apath, format!("{term} is not a random term of {}", a.marker)));
                }
            }
            let label = a.label.clone().unwrap_or_else(|| format!("phi{label_count}"));
            if !labels.insert(label.clone()) {
                return Err(Error::spec(format!("{apath}.label"), format!("duplicate label {label}")));
            }
            let prior = a.prior.unwrap_or(priors.association);
            prior.validate(false, &format!("{apath}.prior"))?;
            associations.push(CheckedAssociation {
                marker: k,
                kind: a.kind.clone(),
                label,
                prior,
            });
        }
        hazards.push(CheckedHazard {
            cause,
            covariates: hs.covariates.clone(),
            walk: hs.baseline.kind,
            prior,
            associations,
        });
    }

    Ok(CheckedSpec {
        spec: spec.clone(),
        markers,
        blocks,
        hazards,
        re_dim: offset,
        n_bins,
        fixed_effect_sd: priors.fixed_effect_sd,
    })
}
