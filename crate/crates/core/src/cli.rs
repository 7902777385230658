//! Command-line entry points: `fit`, `simulate` and `bench`.
//!
//! Exit codes: 0 success (for `fit`, a converged fit), 2 fit finished
//! without converging, 1 error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::augment::{ingest, ingest_pbc2, LongDataset, SurvDataset};
use crate::bench::{metrics, render_report, run_replicates, write_reports, ReportFormat};
use crate::error::{Error, Result};
use crate::infer::{fit, sample_joint_posterior, FitOptions, FitResult, Strategy};
use crate::lgm::AssembledModel;
use crate::modelspec::{design_row, validate, ModelSpec};
use crate::simulate::{model_spec, scenario_presets, simulate, write_simulated};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Name under which the bundled PBC model config can be referenced.
pub const PBC_MODEL: &str = "pbc_model";
pub const PBC_MODEL_TOML: &str = include_str!("../configs/pbc_model.toml");

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub long: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surv: Option<PathBuf>,
    /// Single-table export of the `pbc2` data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pbc2: Option<PathBuf>,
}

/// Posterior bands of the average linear predictor of each marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandOptions {
    /// Covariate varied across profiles; every other covariate is 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariate: Option<String>,
    pub values: Vec<f64>,
    pub points: usize,
    pub draws: usize,
}

impl Default for BandOptions {
    fn default() -> Self {
        BandOptions {
            covariate: None,
            values: Vec::new(),
            points: 50,
            draws: 1000,
        }
    }
}

/// Fit configuration: the model spec at top level plus optional
/// `[inference]`, `[data]` and `[bands]` tables.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub model: ModelSpec,
    pub inference: FitOptions,
    pub data: DataPaths,
    pub bands: BandOptions,
}

const SECTIONS: [&str; 3] = ["inference", "data", "bands"];

impl FitConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text)?;
        let mut take = |k: &str| table.remove(k).unwrap_or_else(|| toml::Value::Table(Default::default()));
        let inference = take("inference").try_into()?;
        let data = take("data").try_into()?;
        let bands = take("bands").try_into()?;
        let model = toml::Value::Table(table).try_into()?;
        Ok(FitConfig {
            model,
            inference,
            data,
            bands,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::Validation("config must be a JSON object".into()))?;
        let mut take = |k: &str| obj.remove(k).unwrap_or_else(|| serde_json::json!({}));
        let inference = serde_json::from_value(take("inference"))?;
        let data = serde_json::from_value(take("data"))?;
        let bands = serde_json::from_value(take("bands"))?;
        let model = serde_json::from_value(value)?;
        Ok(FitConfig {
            model,
            inference,
            data,
            bands,
        })
    }

    /// Reads a config by extension (`.json`, otherwise TOML). The name
    /// `pbc_model` resolves to the bundled config unless such a file exists.
    pub fn load(path: &Path) -> Result<Self> {
        if path.as_os_str() == PBC_MODEL && !path.exists() {
            return Self::from_toml(PBC_MODEL_TOML);
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.long, &mut cfg.data.surv, &mut cfg.data.pbc2].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    fn to_json_value(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(&self.model)?;
        let obj = v.as_object_mut().expect("model spec serializes to an object");
        obj.insert(SECTIONS[0].into(), serde_json::to_value(&self.inference)?);
        obj.insert(SECTIONS[1].into(), serde_json::to_value(&self.data)?);
        obj.insert(SECTIONS[2].into(), serde_json::to_value(&self.bands)?);
        Ok(v)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_json_value()?)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        let mut v = self.to_json_value()?;
        strip_nulls(&mut v);
        toml::to_string(&v).map_err(|e| Error::Validation(format!("config serialization: {e}")))
    }
}

// TOML has no null; absent optional fields are simply left out
fn strip_nulls(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.retain(|_, x| !x.is_null());
            m.values_mut().for_each(strip_nulls);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(strip_nulls),
        _ => {}
    }
}

#[derive(Debug, Parser)]
#[command(name = "jointlap", version, about = "Joint longitudinal and competing-risks survival models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to longitudinal and survival CSV files.
    Fit {
        /// Config file (TOML or JSON), or `pbc_model` for the bundled one.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        long: Option<PathBuf>,
        #[arg(long)]
        surv: Option<PathBuf>,
        /// Single-table pbc2 export instead of --long/--surv.
        #[arg(long, conflicts_with_all = ["long", "surv"])]
        pbc2: Option<PathBuf>,
        /// Overrides the strategy of the config.
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate one dataset of a benchmark scenario.
    Simulate {
        #[arg(long)]
        scenario: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate and fit replicates of a scenario and report bias, SD and coverage.
    Bench {
        #[arg(long)]
        scenario: u32,
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        #[arg(long, default_value = "EB")]
        strategy: Strategy,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_data(cfg: &FitConfig) -> Result<(LongDataset, SurvDataset)> {
    match (&cfg.data.pbc2, &cfg.data.long, &cfg.data.surv) {
        (Some(p), _, _) => ingest_pbc2(p),
        (None, Some(l), Some(s)) => ingest(l, s),
        _ => Err(Error::Validation(
            "no data: pass --long and --surv (or --pbc2), or set them in the [data] table".into(),
        )),
    }
}

/// Parameter table: fixed effects, survival covariate effects and the
/// natural-scale hyperparameters.
pub fn summary_table(fit: &FitResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "strategy: {} (used {})", fit.strategy, fit.strategy_used);
    let _ = writeln!(s, "converged: {} ({})", fit.converged, fit.diagnostics.optimizer_message);
    let _ = writeln!(s, "log marginal likelihood: {:.4}", fit.log_marginal_likelihood);
    let _ = writeln!(s, "computation time (sec.): {:.2}", fit.timings.total);
    for w in &fit.diagnostics.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    if fit.strategy_used == Strategy::EB {
        let _ = writeln!(s, "note: hyperparameter intervals are approximate (from the curvature at the mode)");
    }
    let _ = writeln!(s);
    let width = fit
        .latent
        .iter()
        .map(|l| l.name.as_str())
        .filter(|n| n.starts_with("beta[") || n.starts_with("gamma["))
        .chain(fit.hyper.iter().map(|h| h.name.as_str()))
        .map(str::len)
        .max()
        .unwrap_or(9)
        .max(9);
    let _ = writeln!(s, "{:<width$} {:>10} {:>10} {:>10} {:>10}", "parameter", "mean", "sd", "2.5%", "97.5%");
    for l in fit.latent.iter().filter(|l| l.name.starts_with("beta[") || l.name.starts_with("gamma[")) {
        let _ = writeln!(s, "{:<width$} {:>10.4} {:>10.4} {:>10.4} {:>10.4}", l.name, l.mean, l.sd, l.q025, l.q975);
    }
    for h in &fit.hyper {
        let _ = writeln!(s, "{:<width$} {:>10.4} {:>10.4} {:>10.4} {:>10.4}", h.name, h.mean, h.sd, h.q025, h.q975);
    }
    s
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Band rows `series,profile,time,mean,q025,q975`: the average linear
/// predictor of every marker (random effects at zero) and the log baseline
/// hazard of every cause at bin midpoints, from joint posterior draws.
/// Bands run over `[0, horizon]`; the caller passes the latest observed time.
pub fn trajectory_bands(model: &AssembledModel, fit: &FitResult, opts: &BandOptions, horizon: f64, seed: u64) -> Result<String> {
    let draws = sample_joint_posterior(fit, opts.draws, seed)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["series", "profile", "time", "mean", "q025", "q975"])?;
    if draws.latent.is_empty() {
        return Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Validation(e.to_string()))?).unwrap());
    }
    let mut emit = |series: &str, profile: &str, t: f64, vals: &mut Vec<f64>| -> Result<()> {
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        vals.sort_by(f64::total_cmp);
        w.write_record([
            series.to_string(),
            profile.to_string(),
            format!("{t}"),
            format!("{mean}"),
            format!("{}", quantile(vals, 0.025)),
            format!("{}", quantile(vals, 0.975)),
        ])?;
        Ok(())
    };
    let profiles: Vec<(String, Option<f64>)> = match &opts.covariate {
        Some(c) if !opts.values.is_empty() => opts.values.iter().map(|v| (format!("{c}={v}"), Some(*v))).collect(),
        _ => vec![("reference".into(), None)],
    };
    let n = opts.points.max(2);
    for (k, m) in model.spec.markers.iter().enumerate() {
        for (label, value) in &profiles {
            for g in 0..n {
                let t = horizon * g as f64 / (n - 1) as f64;
                let (row, _) = design_row(&m.fixed, &m.basis, t, |name| {
                    Some(if Some(name) == opts.covariate.as_deref() { value.unwrap_or(0.0) } else { 0.0 })
                })?;
                let mut vals: Vec<f64> = draws
                    .latent
                    .iter()
                    .map(|u| row.iter().enumerate().map(|(j, x)| x * u[model.index.beta(k, j)]).sum())
                    .collect();
                emit(&m.id, label, t, &mut vals)?;
            }
        }
    }
    if let Some(p) = &model.partition {
        for (h, hz) in model.spec.hazards.iter().enumerate() {
            for b in 0..p.n_bins() {
                let t = 0.5 * (p.cuts[b] + p.cuts[b + 1]);
                let mut vals: Vec<f64> = draws.latent.iter().map(|u| u[model.index.baseline(h, b)]).collect();
                emit(&format!("log_baseline[{}]", hz.cause), "reference", t, &mut vals)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Fits the configured model and writes `fit.json`, `summary.txt` and
/// `bands.csv` into `out`.
pub fn cmd_fit(mut cfg: FitConfig, out: &Path) -> Result<i32> {
    let checked = validate(&cfg.model)?;
    let (long, surv) = load_data(&cfg)?;
    let model = AssembledModel::new(&checked, &long, &surv)?;
    log::info!(
        "latent dimension {}, {} hyperparameters, {} observations",
        model.dim(),
        model.layout.dim(),
        model.n_obs()
    );
    let result = fit(&model, &cfg.inference)?;
    create_dir(out)?;
    let p = out.join("fit.json");
    let f = File::create(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &result)?;
    let summary = summary_table(&result);
    write_text(&out.join("summary.txt"), &summary)?;
    print!("{summary}");
    cfg.bands.draws = cfg.bands.draws.max(1);
    let horizon = surv.records.iter().map(|r| r.time).chain(long.records.iter().map(|r| r.time)).fold(0.0, f64::max);
    let bands = trajectory_bands(&model, &result, &cfg.bands, horizon.max(f64::MIN_POSITIVE), cfg.inference.seed)?;
    write_text(&out.join("bands.csv"), &bands)?;
    Ok(if result.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

/// Writes `long.csv`, `surv.csv`, `truth.json` and a ready-to-fit
/// `model.toml` for one scenario dataset.
pub fn cmd_simulate(scenario: u32, seed: u64, out: &Path) -> Result<i32> {
    let cfg = scenario_presets(scenario)?;
    let data = simulate(&cfg, seed)?;
    write_simulated(&data, out)?;
    let fit_cfg = FitConfig {
        model: model_spec(&cfg),
        inference: FitOptions::default(),
        data: DataPaths {
            long: Some("long.csv".into()),
            surv: Some("surv.csv".into()),
            pbc2: None,
        },
        bands: BandOptions::default(),
    };
    write_text(&out.join("model.toml"), &fit_cfg.to_toml()?)?;
    log::info!(
        "scenario {scenario}: {} subjects, {} longitudinal records, event fraction {:.3}",
        data.surv.records.len(),
        data.long.records.len(),
        data.truth.event_fraction
    );
    Ok(EXIT_OK)
}

pub fn cmd_bench(scenario: u32, replicates: usize, strategy: Strategy, seed: u64, workers: usize, out: &Path) -> Result<i32> {
    let cfg = scenario_presets(scenario)?;
    let opts = FitOptions {
        strategy,
        ..FitOptions::default()
    };
    create_dir(out)?;
    let run = run_replicates(&cfg, replicates, &opts, seed, workers, Some(out))?;
    let p = out.join("replicates.json");
    let f = File::create(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &run)?;
    let table = metrics(&run.replicates, &run.truth)?;
    write_reports(&table, out)?;
    print!("{}", render_report(&table, ReportFormat::Md)?);
    Ok(EXIT_OK)
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("JOINTLAP_LOG", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Fit {
            config,
            long,
            surv,
            pbc2,
            strategy,
            out,
        } => FitConfig::load(&config).and_then(|mut cfg| {
            if long.is_some() || surv.is_some() {
                cfg.data = DataPaths { long, surv, pbc2: None };
            }
            if pbc2.is_some() {
                cfg.data = DataPaths {
                    pbc2,
                    ..Default::default()
                };
            }
            if let Some(s) = strategy {
                cfg.inference.strategy = s;
            }
            cmd_fit(cfg, &out)
        }),
        Command::Simulate { scenario, seed, out } => cmd_simulate(scenario, seed, &out),
        Command::Bench {
            scenario,
            replicates,
            strategy,
            seed,
            workers,
            out,
        } => cmd_bench(scenario, replicates, strategy, seed, workers, &out),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_pbc_config_validates() {
        let cfg = FitConfig::load(Path::new(PBC_MODEL)).unwrap();
        let c = validate(&cfg.model).unwrap();
        assert_eq!(c.markers.len(), 5);
        assert_eq!(c.hazards.len(), 2);
        assert_eq!(c.re_dim, 16);
        assert_eq!(c.blocks.len(), 5);
        let off_diagonal: usize = c.blocks.iter().map(|b| b.members.len() * (b.members.len() - 1) / 2).sum();
        assert_eq!(off_diagonal, 20);
        let mut labels: Vec<String> = c
            .hazards
            .iter()
            .flat_map(|h| h.associations.iter().map(|a| a.label.clone()))
            .collect();
        labels.sort();
        assert_eq!(labels, (1..=9).map(|i| format!("phi{i}")).collect::<Vec<_>>());
        assert_eq!(cfg.bands.covariate.as_deref(), Some("drug"));
    }

    #[test]
    fn config_round_trips_through_toml_and_json() {
        let cfg = FitConfig {
            model: model_spec(&scenario_presets(10).unwrap()),
            inference: FitOptions {
                strategy: Strategy::FULL,
                seed: 9,
                ..FitOptions::default()
            },
            data: DataPaths {
                long: Some("a.csv".into()),
                surv: Some("b.csv".into()),
                pbc2: None,
            },
            bands: BandOptions::default(),
        };
        assert_eq!(FitConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
        assert_eq!(FitConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn unknown_inference_key_is_rejected() {
        let text = "[inference]\nstrategy = \"EB\"\nbogus = 1\n[[markers]]\nid = \"y\"\nfamily = \"gaussian\"\nfixed = [\"intercept\"]\n";
        assert!(FitConfig::from_toml(text).is_err());
        let ok = text.replace("bogus = 1\n", "gradient_tol = 1e-4\n");
        let cfg = FitConfig::from_toml(&ok).unwrap();
        assert_eq!(cfg.inference.optimizer.gradient_tol, 1e-4);
    }
}
