//! Reader for the long-format primary biliary cholangitis data distributed
//! with the R package `JM` (`pbc2`), exported with `write.csv`.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use super::{check_datasets, read_table, LongDataset, LongRecord, SurvDataset, SurvRecord};
use crate::error::{Error, Result};

/// Marker columns picked up when present.
pub const PBC2_MARKERS: [&str; 10] = [
    "serBilir",
    "serChol",
    "albumin",
    "alkaline",
    "SGOT",
    "platelets",
    "prothrombin",
    "ascites",
    "hepatomegaly",
    "spiders",
];

fn cell(raw: &str) -> Option<f64> {
    let s = raw.trim().trim_matches('"');
    match s {
        "" | "NA" => None,
        "Yes" | "yes" => Some(1.0),
        "No" | "no" => Some(0.0),
        _ => s.parse().ok(),
    }
}

fn status_code(raw: &str) -> Option<usize> {
    match raw.trim().trim_matches('"') {
        "alive" | "0" => Some(0),
        "dead" | "1" => Some(1),
        "transplanted" | "2" => Some(2),
        _ => None,
    }
}

fn drug_code(raw: &str) -> Option<f64> {
    match raw.trim().trim_matches('"') {
        "D-penicil" | "1" => Some(1.0),
        "placebo" | "0" => Some(0.0),
        _ => None,
    }
}

/// Survival causes: 1 = death, 2 = transplantation. Both files carry the
/// covariate `drug` (1 for D-penicillamine).
pub fn ingest_pbc2_reader<R: Read>(reader: R, file: &str) -> Result<(LongDataset, SurvDataset)> {
    let t = read_table(reader, file, &["id", "years", "status", "drug", "year"])?;
    let col = |n: &str| t.headers.iter().position(|h| h == n);
    let (ci, cy, cs, cd, cv) = (
        col("id").unwrap(),
        col("years").unwrap(),
        col("status").unwrap(),
        col("drug").unwrap(),
        col("year").unwrap(),
    );
    let markers: Vec<(&str, usize)> = PBC2_MARKERS.iter().filter_map(|m| col(m).map(|c| (*m, c))).collect();
    let schema = |row: usize, msg: String| Error::Schema {
        file: file.into(),
        message: format!("row {row}: {msg}"),
    };

    let mut surv = SurvDataset {
        covariate_names: vec!["drug".into()],
        records: vec![],
    };
    let mut long = LongDataset {
        covariate_names: vec!["drug".into()],
        records: vec![],
    };
    let mut index: HashMap<String, usize> = HashMap::new();
    for (i, rec) in t.rows.iter().enumerate() {
        let row = i + 1;
        let id = rec[ci].trim().to_string();
        let years = cell(&rec[cy]).ok_or_else(|| schema(row, "bad `years`".into()))?;
        let status = status_code(&rec[cs]).ok_or_else(|| schema(row, format!("unknown status `{}`", &rec[cs])))?;
        let drug = drug_code(&rec[cd]).ok_or_else(|| schema(row, format!("unknown drug `{}`", &rec[cd])))?;
        let visit = cell(&rec[cv]).ok_or_else(|| schema(row, "bad `year`".into()))?;
        if visit < 0.0 {
            return Err(Error::NegativeTime { subject: id, time: visit });
        }
        match index.get(&id) {
            Some(&s) => {
                let r = &surv.records[s];
                if r.time != years || r.event != status {
                    return Err(schema(row, format!("subject {id} has inconsistent survival columns")));
                }
            }
            None => {
                index.insert(id.clone(), surv.records.len());
                surv.records.push(SurvRecord {
                    subject: id.clone(),
                    time: years,
                    event: status,
                    covariates: vec![drug],
                });
            }
        }
        for &(name, c) in &markers {
            if let Some(v) = cell(&rec[c]) {
                long.records.push(LongRecord {
                    subject: id.clone(),
                    marker: name.to_string(),
                    time: visit,
                    value: v,
                    covariates: vec![drug],
                });
            }
        }
    }
    check_datasets(&long, &surv)?;
    Ok((long, surv))
}

pub fn ingest_pbc2(path: &Path) -> Result<(LongDataset, SurvDataset)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_pbc2_reader(f, &path.display().to_string())
}
