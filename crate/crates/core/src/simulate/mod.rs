//! Benchmark data generation: linear marker trajectories with correlated
//! random effects, exponential marginal event times assigned to subjects
//! by the permutational algorithm.

mod permalgo;
mod scenarios;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

pub use permalgo::{permalgo, Candidate, Outcome};
pub use scenarios::scenario_presets;

use crate::augment::{write_long, write_surv, LongDataset, LongRecord, SurvDataset, SurvRecord};
use crate::error::{Error, Result};
use crate::modelspec::{
    AssociationKind, AssociationTerm, BaselineSpec, CovariancePrior, Family, LongSubmodelSpec, ModelSpec, PriorSpec,
    REBlockSpec, REMember, RandomWalk, SurvSubmodelSpec, Term, TimeBasis,
};

/// Fixed-effect terms of every simulated marker, in coefficient order.
pub const FIXED_TERMS: [&str; 4] = ["intercept", "time", "x1", "x2"];
pub const COVARIATES: [&str; 2] = ["x1", "x2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerTruth {
    pub id: String,
    pub family: Family,
    /// Coefficients of intercept, time, x1 and x2.
    pub beta: [f64; 4],
    /// Residual standard deviation (gaussian only).
    pub sigma_eps: Option<f64>,
    pub random_slope: bool,
    /// Visits at 0, step, 2·step, ... until the end of follow-up.
    pub visit_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseTruth {
    pub cause: usize,
    /// Current-value association with each marker.
    pub phi: Vec<f64>,
    /// Marginal rate of this cause relative to the calibrated rate.
    pub rate_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: u32,
    pub name: String,
    pub markers: Vec<MarkerTruth>,
    /// Covariance of all random effects, marker by marker (intercept, then
    /// slope when present).
    pub re_cov: Vec<Vec<f64>>,
    pub causes: Vec<CauseTruth>,
    pub n_subjects: usize,
    /// Administrative censoring time.
    pub horizon: f64,
    /// Drop-out times are uniform on `(0, dropout_max)`; none when absent.
    pub dropout_max: Option<f64>,
    pub target_event_fraction: f64,
    /// Bins of the fitted baseline hazard.
    pub baseline_bins: usize,
}

impl ScenarioConfig {
    pub fn re_dim(&self) -> usize {
        self.markers.iter().map(|m| 1 + m.random_slope as usize).sum()
    }

    /// First random-effect index of each marker.
    fn re_offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.markers.len());
        let mut acc = 0;
        for m in &self.markers {
            off.push(acc);
            acc += 1 + m.random_slope as usize;
        }
        off
    }

    /// Random-effect names as they appear in fit summaries.
    pub fn re_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for m in &self.markers {
            names.push(format!("{}:intercept", m.id));
            if m.random_slope {
                names.push(format!("{}:time", m.id));
            }
        }
        names
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.markers.is_empty() {
            return bad("scenario has no markers".into());
        }
        if self.n_subjects == 0 {
            return bad("scenario has no subjects".into());
        }
        if !(self.target_event_fraction > 0.0 && self.target_event_fraction < 1.0) {
            return bad(format!("target event fraction {} not in (0,1)", self.target_event_fraction));
        }
        if !(self.horizon > 0.0) {
            return bad(format!("horizon {} must be positive", self.horizon));
        }
        for m in &self.markers {
            if m.family == Family::Gaussian && !m.sigma_eps.is_some_and(|s| s >= 0.0) {
                return bad(format!("gaussian marker {} needs a non-negative sigma_eps", m.id));
            }
            if !(m.visit_step > 0.0) {
                return bad(format!("marker {} has a non-positive visit step", m.id));
            }
        }
        for c in &self.causes {
            if c.phi.len() != self.markers.len() {
                return bad(format!("cause {} has {} associations for {} markers", c.cause, c.phi.len(), self.markers.len()));
            }
            if !(c.rate_share > 0.0) {
                return bad(format!("cause {} has a non-positive rate share", c.cause));
            }
        }
        let d = self.re_dim();
        if self.re_cov.len() != d || self.re_cov.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.re_cov.len(),
            });
        }
        let s = DMatrix::from_fn(d, d, |i, j| self.re_cov[i][j]);
        if (&s - s.transpose()).abs().max() > 0.0 || s.cholesky().is_none() {
            return bad("random-effects covariance is not symmetric positive definite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectDraw {
    pub x1: f64,
    pub x2: f64,
    /// Random effects in the order of [`ScenarioConfig::re_names`].
    pub b: Vec<f64>,
}

/// Subject-level draws and the longitudinal observations over the whole
/// visit schedule, before truncation at the observed survival time.
#[derive(Debug, Clone)]
pub struct Trajectories {
    pub subjects: Vec<SubjectDraw>,
    pub long: LongDataset,
    offsets: Vec<usize>,
    markers: Vec<MarkerTruth>,
}

impl Trajectories {
    /// Linear predictor of marker `k` for subject `i` at time `t`.
    pub fn eta(&self, i: usize, k: usize, t: f64) -> f64 {
        let s = &self.subjects[i];
        let m = &self.markers[k];
        let o = self.offsets[k];
        let slope_re = if m.random_slope { s.b[o + 1] } else { 0.0 };
        (m.beta[0] + s.b[o]) + (m.beta[1] + slope_re) * t + m.beta[2] * s.x1 + m.beta[3] * s.x2
    }
}

fn subject_id(i: usize) -> String {
    (i + 1).to_string()
}

/// Symmetric square root factor `V·diag(√λ⁺)`, valid for singular covariances.
fn covariance_factor(cov: &[Vec<f64>]) -> DMatrix<f64> {
    let d = cov.len();
    let s = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
    let eig = SymmetricEigen::new(s);
    let mut f = eig.eigenvectors;
    for (j, l) in eig.eigenvalues.iter().enumerate() {
        let r = l.max(0.0).sqrt();
        f.column_mut(j).scale_mut(r);
    }
    f
}

fn visit_times(step: f64, horizon: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut j = 0usize;
    loop {
        let t = j as f64 * step;
        if t > horizon + 1e-12 {
            break;
        }
        out.push(t);
        j += 1;
    }
    out
}

/// Covariates, random effects and noisy observations at every scheduled
/// visit up to the horizon.
pub fn gen_covariates_and_trajectories<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Trajectories> {
    let d = cfg.re_dim();
    let factor = covariance_factor(&cfg.re_cov);
    let mut subjects = Vec::with_capacity(cfg.n_subjects);
    for _ in 0..cfg.n_subjects {
        let x1: f64 = rng.sample(StandardNormal);
        let x2 = if rng.gen::<bool>() { 1.0 } else { 0.0 };
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let b = (0..d).map(|i| (0..d).map(|j| factor[(i, j)] * z[j]).sum()).collect();
        subjects.push(SubjectDraw { x1, x2, b });
    }
    let traj = Trajectories {
        subjects,
        long: LongDataset::default(),
        offsets: cfg.re_offsets(),
        markers: cfg.markers.clone(),
    };
    let horizon = if cfg.horizon.is_finite() { cfg.horizon } else { 0.0 };
    let mut records = Vec::new();
    for i in 0..cfg.n_subjects {
        let s = &traj.subjects[i];
        for (k, m) in cfg.markers.iter().enumerate() {
            for t in visit_times(m.visit_step, horizon) {
                let eta = traj.eta(i, k, t);
                let value = match m.family {
                    Family::Gaussian => {
                        let e: f64 = rng.sample(StandardNormal);
                        eta + m.sigma_eps.unwrap_or(0.0) * e
                    }
                    Family::Poisson => {
                        let mu = eta.exp();
                        if mu > 0.0 && mu.is_finite() {
                            Poisson::new(mu).map_err(|e| Error::Validation(e.to_string()))?.sample(rng)
                        } else if mu == 0.0 {
                            0.0
                        } else {
                            return Err(Error::Validation(format!("poisson mean overflow for eta {eta}")));
                        }
                    }
                    Family::Binomial => {
                        let p = 1.0 / (1.0 + (-eta).exp());
                        let hit = Bernoulli::new(p).map_err(|e| Error::Validation(e.to_string()))?.sample(rng);
                        if hit {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                records.push(LongRecord {
                    subject: subject_id(i),
                    marker: m.id.clone(),
                    time: t,
                    value,
                    covariates: vec![s.x1, s.x2],
                });
            }
        }
    }
    Ok(Trajectories {
        long: LongDataset {
            covariate_names: COVARIATES.iter().map(|s| s.to_string()).collect(),
            records,
        },
        ..traj
    })
}

/// `n` pairs of exponential event time (competing causes with rates
/// `rate·share`) and censoring time, reduced to the observed minimum.
///
/// Uses a fixed number of uniforms per pair so draws with the same rng
/// state are monotone in `rate`.
pub fn draw_candidates<R: Rng + ?Sized>(cfg: &ScenarioConfig, rate: f64, n: usize, rng: &mut R) -> Vec<Candidate> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best = (f64::INFINITY, 0usize);
        for c in &cfg.causes {
            let u: f64 = rng.gen();
            let t = -(1.0 - u).ln() / (rate * c.rate_share);
            if t < best.0 {
                best = (t, c.cause);
            }
        }
        let u: f64 = rng.gen();
        let dropout = cfg.dropout_max.map_or(f64::INFINITY, |m| u * m);
        let censor = cfg.horizon.min(dropout);
        out.push(if best.0 <= censor {
            Candidate {
                time: best.0,
                cause: best.1,
            }
        } else {
            Candidate { time: censor, cause: 0 }
        });
    }
    out
}

const PILOTS: usize = 20;
const CALIBRATION_TOL: f64 = 0.02;
const MAX_BISECTIONS: usize = 40;
const RATE_BRACKET: (f64, f64) = (1e-6, 1e3);

fn pilot_fraction(cfg: &ScenarioConfig, rate: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let n = cfg.n_subjects * PILOTS;
    let events = draw_candidates(cfg, rate, n, &mut rng).iter().filter(|c| c.cause != 0).count();
    events as f64 / n as f64
}

/// Marginal exponential rate giving the target fraction of observed events.
///
/// Bisects the log rate over a fixed bracket; every evaluation reuses the
/// same pilot random numbers so the fraction is monotone in the rate.
pub fn calibrate_event_rate(cfg: &ScenarioConfig, target: f64, seed: u64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Calibration(format!("target fraction {target} not in (0,1)")));
    }
    if cfg.causes.is_empty() {
        return Err(Error::Calibration("scenario has no event causes".into()));
    }
    let (mut lo, mut hi) = (RATE_BRACKET.0.ln(), RATE_BRACKET.1.ln());
    let f_lo = pilot_fraction(cfg, lo.exp(), seed);
    let f_hi = pilot_fraction(cfg, hi.exp(), seed);
    if f_hi - f_lo < CALIBRATION_TOL {
        return Err(Error::Calibration(format!(
            "event fraction insensitive to the rate ({f_lo:.3} to {f_hi:.3} over the bracket)"
        )));
    }
    if target < f_lo || target > f_hi {
        return Err(Error::Calibration(format!(
            "target {target} outside attainable range [{f_lo:.3}, {f_hi:.3}]"
        )));
    }
    let mut best = (f64::INFINITY, f64::NAN);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let f = pilot_fraction(cfg, mid.exp(), seed);
        if (f - target).abs() < best.0 {
            best = ((f - target).abs(), mid.exp());
        }
        // keep refining past the tolerance; the pilot sample is cheap
        if (f - target).abs() <= 1e-3 {
            break;
        }
        if f < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.0 <= CALIBRATION_TOL {
        Ok(best.1)
    } else {
        Err(Error::Calibration(format!(
            "no rate within {CALIBRATION_TOL} of target {target} after {MAX_BISECTIONS} bisections"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthParam {
    pub name: String,
    pub value: f64,
}

/// Generating parameters of one simulated dataset, named as in fit
/// summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub scenario: u32,
    pub seed: u64,
    pub replicate: u64,
    pub rate: f64,
    pub event_fraction: f64,
    pub parameters: Vec<TruthParam>,
    pub config: ScenarioConfig,
    pub metadata: BTreeMap<String, String>,
}

impl Truth {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.value)
    }
}

/// Association labels in hazard order, matching [`model_spec`].
fn phi_labels(cfg: &ScenarioConfig) -> Vec<Vec<String>> {
    let mut n = 0;
    cfg.causes
        .iter()
        .map(|c| {
            c.phi
                .iter()
                .map(|_| {
                    n += 1;
                    format!("phi{n}")
                })
                .collect()
        })
        .collect()
}

pub fn truth_parameters(cfg: &ScenarioConfig) -> Vec<TruthParam> {
    let mut out = Vec::new();
    let mut push = |name: String, value: f64| out.push(TruthParam { name, value });
    for m in &cfg.markers {
        for (t, b) in FIXED_TERMS.iter().zip(m.beta) {
            push(format!("beta[{}:{t}]", m.id), b);
        }
    }
    for m in &cfg.markers {
        if let Some(s) = m.sigma_eps {
            push(format!("sigma_eps[{}]", m.id), s);
        }
    }
    let names = cfg.re_names();
    for i in 0..names.len() {
        for j in 0..=i {
            if i == j {
                push(format!("var[{}]", names[i]), cfg.re_cov[i][i]);
            } else {
                push(format!("cov[{},{}]", names[j], names[i]), cfg.re_cov[i][j]);
            }
        }
    }
    for (c, labels) in cfg.causes.iter().zip(phi_labels(cfg)) {
        for (v, l) in c.phi.iter().zip(labels) {
            push(l, *v);
        }
    }
    out
}

fn metadata(cfg: &ScenarioConfig) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert(
        "design".into(),
        "reconstructed: covariates x1 ~ N(0,1), x2 ~ Bernoulli(0.5); visit grid per marker; \
         censoring at min(horizon, uniform drop-out); exponential marginal event times"
            .into(),
    );
    m.insert("horizon".into(), cfg.horizon.to_string());
    m.insert(
        "dropout".into(),
        cfg.dropout_max.map_or("none".into(), |d| format!("uniform(0, {d})")),
    );
    m
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub long: LongDataset,
    pub surv: SurvDataset,
    pub truth: Truth,
}

/// RNG for replicate `index` of a run with `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One dataset at a given marginal rate.
pub fn simulate_with_rate(cfg: &ScenarioConfig, rate: f64, seed: u64, index: u64) -> Result<SimulatedData> {
    cfg.validate()?;
    let mut rng = replicate_rng(seed, index);
    let traj = gen_covariates_and_trajectories(cfg, &mut rng)?;
    let candidates = draw_candidates(cfg, rate, cfg.n_subjects, &mut rng);
    let cause_pos: BTreeMap<usize, usize> = cfg.causes.iter().enumerate().map(|(j, c)| (c.cause, j)).collect();
    let outcomes = permalgo(
        &candidates,
        cfg.n_subjects,
        |i, cause, t| {
            let c = &cfg.causes[cause_pos[&cause]];
            c.phi.iter().enumerate().map(|(k, p)| p * traj.eta(i, k, t)).sum()
        },
        &mut rng,
    )?;

    let surv = SurvDataset {
        covariate_names: COVARIATES.iter().map(|s| s.to_string()).collect(),
        records: outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| SurvRecord {
                subject: subject_id(i),
                time: o.time,
                event: o.event,
                covariates: vec![traj.subjects[i].x1, traj.subjects[i].x2],
            })
            .collect(),
    };
    let mut long = traj.long;
    long.records.retain(|r| {
        let i: usize = r.subject.parse::<usize>().expect("numeric subject id") - 1;
        r.time <= outcomes[i].time
    });
    let events = outcomes.iter().filter(|o| o.event != 0).count();
    let truth = Truth {
        scenario: cfg.id,
        seed,
        replicate: index,
        rate,
        event_fraction: events as f64 / cfg.n_subjects as f64,
        parameters: truth_parameters(cfg),
        config: cfg.clone(),
        metadata: metadata(cfg),
    };
    Ok(SimulatedData { long, surv, truth })
}

/// Calibrates the marginal rate for the scenario's target event fraction
/// and generates the dataset of replicate 0.
pub fn simulate(cfg: &ScenarioConfig, seed: u64) -> Result<SimulatedData> {
    cfg.validate()?;
    let rate = calibrate_event_rate(cfg, cfg.target_event_fraction, seed)?;
    simulate_with_rate(cfg, rate, seed, 0)
}

/// Writes `long.csv`, `surv.csv` and `truth.json` into `dir`.
pub fn write_simulated(data: &SimulatedData, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let open = |name: &str| {
        let p = dir.join(name);
        File::create(&p).map(BufWriter::new).map_err(|e| Error::io(p, e))
    };
    write_long(&data.long, open("long.csv")?)?;
    write_surv(&data.surv, open("surv.csv")?)?;
    write_truth(&data.truth, &dir.join("truth.json"))
}

pub fn write_truth(truth: &Truth, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), truth)?;
    Ok(())
}

/// Model fitted to a scenario: the generating structure with one full
/// covariance block over all random effects and an RW2 baseline.
pub fn model_spec(cfg: &ScenarioConfig) -> ModelSpec {
    let term = |s: &str| s.parse::<Term>().expect("built-in term");
    let markers = cfg
        .markers
        .iter()
        .map(|m| LongSubmodelSpec {
            id: m.id.clone(),
            family: m.family,
            transform: None,
            time_basis: TimeBasis::Linear,
            fixed: FIXED_TERMS.iter().map(|t| term(t)).collect(),
            random: if m.random_slope {
                vec![term("intercept"), term("time")]
            } else {
                vec![term("intercept")]
            },
            residual_prior: None,
        })
        .collect();
    let members = cfg
        .markers
        .iter()
        .flat_map(|m| {
            let mut v = vec![REMember {
                marker: m.id.clone(),
                term: term("intercept"),
            }];
            if m.random_slope {
                v.push(REMember {
                    marker: m.id.clone(),
                    term: term("time"),
                });
            }
            v
        })
        .collect();
    let hazards = cfg
        .causes
        .iter()
        .zip(phi_labels(cfg))
        .map(|(c, labels)| SurvSubmodelSpec {
            cause: c.cause,
            covariates: Vec::new(),
            baseline: BaselineSpec {
                kind: RandomWalk::Rw2,
                bins: cfg.baseline_bins,
                prior: None,
            },
            associations: cfg
                .markers
                .iter()
                .zip(labels)
                .map(|(m, l)| AssociationTerm {
                    marker: m.id.clone(),
                    kind: AssociationKind::CurrentValue,
                    label: Some(l),
                    prior: None,
                })
                .collect(),
        })
        .collect();
    ModelSpec {
        markers,
        re_blocks: Some(vec![REBlockSpec {
            members,
            prior: CovariancePrior::default(),
        }]),
        hazards,
        priors: PriorSpec::default(),
    }
}
