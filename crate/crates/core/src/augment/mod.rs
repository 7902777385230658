//! Longitudinal and survival data, and the Poisson re-expression of the
//! piecewise-constant-hazard survival likelihood.

mod pbc2;
mod pseudo;

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

pub use pbc2::{ingest_pbc2, ingest_pbc2_reader, PBC2_MARKERS};
pub use pseudo::{
    augmented_loglik, exact_surv_loglik, partition_time, poisson_augment, BinPartition, PiecewiseConstant,
    PseudoObservation,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LongRecord {
    pub subject: String,
    pub marker: String,
    pub time: f64,
    pub value: f64,
    /// Aligned with [`LongDataset::covariate_names`]; `NaN` marks a missing value.
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LongDataset {
    pub covariate_names: Vec<String>,
    pub records: Vec<LongRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvRecord {
    pub subject: String,
    pub time: f64,
    /// 0 for censored, otherwise the cause.
    pub event: usize,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurvDataset {
    pub covariate_names: Vec<String>,
    pub records: Vec<SurvRecord>,
}

impl LongDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn covariate(&self, row: usize, name: &str) -> Option<f64> {
        let c = self.covariate_names.iter().position(|n| n == name)?;
        let v = self.records[row].covariates[c];
        (!v.is_nan()).then_some(v)
    }
}

impl SurvDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn covariate(&self, row: usize, name: &str) -> Option<f64> {
        let c = self.covariate_names.iter().position(|n| n == name)?;
        let v = self.records[row].covariates[c];
        (!v.is_nan()).then_some(v)
    }

    pub fn max_time(&self) -> f64 {
        self.records.iter().map(|r| r.time).fold(0.0, f64::max)
    }

    pub fn subject_index(&self) -> HashMap<&str, usize> {
        self.records.iter().enumerate().map(|(i, r)| (r.subject.as_str(), i)).collect()
    }

    pub fn n_events(&self, cause: usize) -> usize {
        self.records.iter().filter(|r| r.event == cause).count()
    }
}

fn parse_value(raw: &str) -> Option<f64> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        None
    } else {
        s.parse().ok()
    }
}

struct Table {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_table<R: Read>(reader: R, file: &str, required: &[&str]) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_string()).collect();
    for r in required {
        if !headers.iter().any(|h| h == r) {
            return Err(Error::Schema {
                file: file.into(),
                message: format!("missing column `{r}`"),
            });
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Schema {
            file: file.into(),
            message: format!("row {}: {e}", i + 1),
        })?;
        rows.push(rec);
    }
    Ok(Table { headers, rows })
}

fn column(headers: &[String], name: &str) -> usize {
    headers.iter().position(|h| h == name).expect("checked by read_table")
}

fn number(rec: &csv::StringRecord, col: usize, file: &str, row: usize, name: &str) -> Result<f64> {
    parse_value(&rec[col]).ok_or_else(|| Error::Schema {
        file: file.into(),
        message: format!("row {row}: `{name}` value `{}` is not a number", &rec[col]),
    })
}

fn covariates(rec: &csv::StringRecord, cols: &[usize], file: &str, row: usize, headers: &[String]) -> Result<Vec<f64>> {
    cols.iter()
        .map(|&c| {
            let raw = rec[c].trim();
            match parse_value(raw) {
                Some(v) => Ok(v),
                None if raw.is_empty() || raw.eq_ignore_ascii_case("na") => Ok(f64::NAN),
                None => Err(Error::Schema {
                    file: file.into(),
                    message: format!("row {row}: covariate `{}` value `{raw}` is not numeric", headers[c]),
                }),
            }
        })
        .collect()
}

pub fn read_surv<R: Read>(reader: R, file: &str) -> Result<SurvDataset> {
    let t = read_table(reader, file, &["id", "time", "event"])?;
    let (ci, ct, ce) = (column(&t.headers, "id"), column(&t.headers, "time"), column(&t.headers, "event"));
    let cov_cols: Vec<usize> = (0..t.headers.len()).filter(|&c| c != ci && c != ct && c != ce).collect();
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(t.rows.len());
    for (i, rec) in t.rows.iter().enumerate() {
        let row = i + 1;
        let subject = rec[ci].to_string();
        if !seen.insert(subject.clone()) {
            return Err(Error::Validation(format!("subject {subject} has more than one survival record")));
        }
        let time = number(rec, ct, file, row, "time")?;
        if time < 0.0 {
            return Err(Error::NegativeTime { subject, time });
        }
        if !(time > 0.0) {
            return Err(Error::Validation(format!("subject {subject}: survival time must be positive")));
        }
        let event = number(rec, ce, file, row, "event")?;
        if event < 0.0 || event.fract() != 0.0 {
            return Err(Error::Schema {
                file: file.into(),
                message: format!("row {row}: event code {event} is not a non-negative integer"),
            });
        }
        records.push(SurvRecord {
            subject,
            time,
            event: event as usize,
            covariates: covariates(rec, &cov_cols, file, row, &t.headers)?,
        });
    }
    Ok(SurvDataset {
        covariate_names: cov_cols.iter().map(|&c| t.headers[c].clone()).collect(),
        records,
    })
}

pub fn read_long<R: Read>(reader: R, file: &str) -> Result<LongDataset> {
    let t = read_table(reader, file, &["id", "marker", "time", "value"])?;
    let fixed: Vec<usize> = ["id", "marker", "time", "value"]
        .iter()
        .map(|n| column(&t.headers, n))
        .collect();
    let cov_cols: Vec<usize> = (0..t.headers.len()).filter(|c| !fixed.contains(c)).collect();
    let mut records = Vec::with_capacity(t.rows.len());
    for (i, rec) in t.rows.iter().enumerate() {
        let row = i + 1;
        let subject = rec[fixed[0]].to_string();
        let time = number(rec, fixed[2], file, row, "time")?;
        if time < 0.0 {
            return Err(Error::NegativeTime { subject, time });
        }
        records.push(LongRecord {
            subject,
            marker: rec[fixed[1]].to_string(),
            time,
            value: number(rec, fixed[3], file, row, "value")?,
            covariates: covariates(rec, &cov_cols, file, row, &t.headers)?,
        });
    }
    Ok(LongDataset {
        covariate_names: cov_cols.iter().map(|&c| t.headers[c].clone()).collect(),
        records,
    })
}

/// Cross-checks the two datasets: every longitudinal subject has a survival
/// record and no measurement falls after the subject's observed time.
pub fn check_datasets(long: &LongDataset, surv: &SurvDataset) -> Result<()> {
    let index = surv.subject_index();
    for r in &long.records {
        let Some(&i) = index.get(r.subject.as_str()) else {
            return Err(Error::OrphanSubject(r.subject.clone()));
        };
        let tstar = surv.records[i].time;
        if r.time > tstar {
            return Err(Error::Validation(format!(
                "subject {}: measurement at {} after observed time {tstar}",
                r.subject, r.time
            )));
        }
    }
    Ok(())
}

pub fn ingest(long_csv: &Path, surv_csv: &Path) -> Result<(LongDataset, SurvDataset)> {
    let open = |p: &Path| std::fs::File::open(p).map_err(|e| Error::io(p, e));
    let long = read_long(open(long_csv)?, &long_csv.display().to_string())?;
    let surv = read_surv(open(surv_csv)?, &surv_csv.display().to_string())?;
    check_datasets(&long, &surv)?;
    Ok((long, surv))
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        // shortest representation that parses back to the same value
        format!("{v}")
    }
}

pub fn write_long<W: Write>(data: &LongDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id", "marker", "time", "value"];
    header.extend(data.covariate_names.iter().map(|s| s.as_str()));
    w.write_record(&header)?;
    for r in &data.records {
        let mut row = vec![r.subject.clone(), r.marker.clone(), fmt_num(r.time), fmt_num(r.value)];
        row.extend(r.covariates.iter().map(|&v| fmt_num(v)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<long csv>", e))?;
    Ok(())
}

pub fn write_surv<W: Write>(data: &SurvDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id", "time", "event"];
    header.extend(data.covariate_names.iter().map(|s| s.as_str()));
    w.write_record(&header)?;
    for r in &data.records {
        let mut row = vec![r.subject.clone(), fmt_num(r.time), r.event.to_string()];
        row.extend(r.covariates.iter().map(|&v| fmt_num(v)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<surv csv>", e))?;
    Ok(())
}
