//! Replicate fits of a simulation scenario and bias/SD/coverage tables.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infer::{fit, FitOptions, FitResult};
use crate::lgm::AssembledModel;
use crate::modelspec::validate;
use crate::simulate::{calibrate_event_rate, model_spec, simulate_with_rate, write_truth, ScenarioConfig, TruthParam};

/// Posterior mean and 95% interval of one generating parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub index: u64,
    pub converged: bool,
    pub error: Option<String>,
    pub seconds: f64,
    pub event_fraction: f64,
    pub estimates: Vec<Estimate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRun {
    pub scenario: u32,
    pub strategy: String,
    pub seed: u64,
    pub rate: f64,
    pub truth: Vec<TruthParam>,
    pub replicates: Vec<ReplicateResult>,
}

fn estimates(fit: &FitResult, truth: &[TruthParam]) -> Vec<Estimate> {
    truth
        .iter()
        .filter_map(|p| {
            let (mean, q025, q975) = if let Some(h) = fit.hyper_by_name(&p.name) {
                (h.mean, h.q025, h.q975)
            } else {
                let l = fit.latent_by_name(&p.name)?;
                (l.mean, l.q025, l.q975)
            };
            Some(Estimate {
                name: p.name.clone(),
                mean,
                q025,
                q975,
            })
        })
        .collect()
}

fn run_one(cfg: &ScenarioConfig, rate: f64, opts: &FitOptions, seed: u64, index: u64, out: Option<&Path>) -> ReplicateResult {
    let t0 = Instant::now();
    let mut res = ReplicateResult {
        index,
        converged: false,
        error: None,
        seconds: 0.0,
        event_fraction: f64::NAN,
        estimates: Vec::new(),
    };
    let outcome = (|| -> Result<()> {
        let data = simulate_with_rate(cfg, rate, seed, index)?;
        res.event_fraction = data.truth.event_fraction;
        let checked = validate(&model_spec(cfg))?;
        let model = AssembledModel::new(&checked, &data.long, &data.surv)?;
        let fitted = fit(&model, opts)?;
        res.converged = fitted.converged;
        res.estimates = estimates(&fitted, &data.truth.parameters);
        if let Some(dir) = out {
            let dir = dir.join("replicates").join(index.to_string());
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let p = dir.join("fit.json");
            let f = File::create(&p).map_err(|e| Error::io(&p, e))?;
            serde_json::to_writer(BufWriter::new(f), &fitted)?;
            write_truth(&data.truth, &dir.join("truth.json"))?;
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        log::warn!("replicate {index} failed: {e}");
        res.converged = false;
        res.error = Some(e.to_string());
    }
    res.seconds = t0.elapsed().as_secs_f64();
    res
}

/// Simulates and fits `r` replicates on a pool of `workers` threads. The
/// event rate is calibrated once from the master seed; replicate `i` uses
/// RNG stream `i`. Failed fits are recorded, not propagated.
pub fn run_replicates(
    cfg: &ScenarioConfig,
    r: usize,
    opts: &FitOptions,
    seed: u64,
    workers: usize,
    out: Option<&Path>,
) -> Result<BenchRun> {
    if r == 0 {
        return Err(Error::Validation("at least one replicate is required".into()));
    }
    cfg.validate()?;
    let rate = calibrate_event_rate(cfg, cfg.target_event_fraction, seed)?;
    log::info!("scenario {}: calibrated marginal rate {rate:.5}", cfg.id);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Validation(e.to_string()))?;
    let replicates = pool.install(|| {
        (0..r as u64)
            .into_par_iter()
            .map(|i| {
                let res = run_one(cfg, rate, opts, seed, i, out);
                log::info!("replicate {i}: converged {} in {:.2}s", res.converged, res.seconds);
                res
            })
            .collect()
    });
    Ok(BenchRun {
        scenario: cfg.id,
        strategy: opts.strategy.to_string(),
        seed,
        rate,
        truth: crate::simulate::truth_parameters(cfg),
        replicates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub parameter: String,
    pub truth: f64,
    pub bias: f64,
    pub sd: f64,
    pub coverage: f64,
    pub estimates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub replicates: usize,
    pub converged: usize,
    pub convergence_rate: f64,
    pub time_mean: f64,
    pub time_sd: f64,
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn row(&self, name: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.parameter == name)
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

/// Bias, SD and coverage over converged replicates; convergence rate and
/// timing over all of them.
pub fn metrics(results: &[ReplicateResult], truth: &[TruthParam]) -> Result<MetricTable> {
    let mut ok: Vec<&ReplicateResult> = results.iter().filter(|r| r.converged).collect();
    if ok.is_empty() {
        return Err(Error::NoConvergedReplicates);
    }
    ok.sort_by_key(|r| r.index);
    let mut rows = Vec::new();
    for p in truth {
        let found: Vec<&Estimate> = ok.iter().filter_map(|r| r.estimates.iter().find(|e| e.name == p.name)).collect();
        if found.is_empty() {
            continue;
        }
        let err: Vec<f64> = found.iter().map(|e| e.mean - p.value).collect();
        let (bias, sd) = mean_sd(&err);
        let covered = found.iter().filter(|e| e.q025 <= p.value && p.value <= e.q975).count();
        rows.push(MetricRow {
            parameter: p.name.clone(),
            truth: p.value,
            bias,
            sd,
            coverage: covered as f64 / found.len() as f64,
            estimates: found.iter().map(|e| e.mean).collect(),
        });
    }
    let times: Vec<f64> = results.iter().map(|r| r.seconds).collect();
    let (time_mean, time_sd) = mean_sd(&times);
    Ok(MetricTable {
        replicates: results.len(),
        converged: ok.len(),
        convergence_rate: ok.len() as f64 / results.len() as f64,
        time_mean,
        time_sd,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Md,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Md => "md",
            ReportFormat::Json => "json",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "md" => Ok(ReportFormat::Md),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::Validation(format!("unknown report format `{s}`"))),
        }
    }
}

fn r3(x: f64) -> String {
    let s = format!("{x:.3}");
    // avoid "-0.000"
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// Renders the table. Values are rounded to 3 decimals except in JSON.
pub fn render_report(table: &MetricTable, format: ReportFormat) -> Result<String> {
    if table.rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    let mut s = String::new();
    match format {
        ReportFormat::Json => s = serde_json::to_string_pretty(table)?,
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["parameter", "truth", "bias", "sd", "cp"])?;
            for r in &table.rows {
                w.write_record([r.parameter.clone(), r3(r.truth), r3(r.bias), r3(r.sd), r3(r.coverage)])?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
            s = String::from_utf8(bytes).expect("csv output is utf-8");
        }
        ReportFormat::Md => {
            let _ = writeln!(s, "| Parameter | Truth | Bias | (SD) | CP |");
            let _ = writeln!(s, "|---|---:|---:|---:|---:|");
            for r in &table.rows {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | ({}) | {}% |",
                    r.parameter,
                    r3(r.truth),
                    r3(r.bias),
                    r3(r.sd),
                    (100.0 * r.coverage).round()
                );
            }
            let _ = writeln!(s);
            let _ = writeln!(
                s,
                "Conv. rate: {} ({} of {} replicates; bias, SD and CP use converged replicates only)",
                r3(table.convergence_rate),
                table.converged,
                table.replicates
            );
            let _ = writeln!(s, "Comp. time (sec.): {} ({})", format!("{:.2}", table.time_mean), format!("{:.2}", table.time_sd));
        }
    }
    Ok(s)
}

pub fn emit_report(table: &MetricTable, format: ReportFormat, path: &Path) -> Result<()> {
    let text = render_report(table, format)?;
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes `report.{csv,md,json}` into `dir`.
pub fn write_reports(table: &MetricTable, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in [ReportFormat::Csv, ReportFormat::Md, ReportFormat::Json] {
        emit_report(table, f, &dir.join(format!("report.{}", f.extension())))?;
    }
    Ok(())
}
