//! Day directories and oracle record files.
//!
//! A data directory holds one day file per day, `day_0000.jsonl`,
//! `day_0001.jsonl`, ..., in the line-delimited format of
//! [`crate::market::read_dataset`]. Oracle files hold one JSON record per line:
//!
//! ```text
//! {"day":"day_0000","D_star":41.2,"C_star":41.1,"betas":[1.3,0.0,...]}
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{read_dataset, write_dataset, ProblemInstance};
use crate::oracle::OraclePlan;

pub fn day_file_name(index: usize) -> String {
    format!("day_{index:04}.jsonl")
}

/// Writes `days` into `dir`, creating it if needed.
pub fn write_day_dir(dir: impl AsRef<Path>, days: &[ProblemInstance]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (i, d) in days.iter().enumerate() {
        write_dataset(d, dir.join(day_file_name(i)))?;
    }
    Ok(())
}

/// Reads every `*.jsonl` file of `dir`, sorted by name. Returns the file
/// stems alongside the days.
pub fn read_day_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, ProblemInstance)>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Format {
            path: dir.to_path_buf(),
            msg: format!("cannot list data directory: {e}"),
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Format {
            path: dir.to_path_buf(),
            msg: "no .jsonl day files".into(),
        });
    }
    paths
        .into_iter()
        .map(|p| {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            read_dataset(&p).map(|d| (stem, d))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleRecord {
    pub day: String,
    #[serde(rename = "D_star")]
    pub oracle_value: f64,
    #[serde(rename = "C_star")]
    pub oracle_cost: f64,
    pub betas: Vec<f64>,
}

impl OracleRecord {
    pub fn new(day: impl Into<String>, plan: &OraclePlan) -> Self {
        Self {
            day: day.into(),
            oracle_value: plan.delivery,
            oracle_cost: plan.cost,
            betas: plan.ratios.clone(),
        }
    }
}

pub fn write_oracle_records(path: impl AsRef<Path>, records: &[OracleRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_oracle_records(path: impl AsRef<Path>) -> Result<Vec<OracleRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
