//! Day-level results and the aggregate metrics over them.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    /// Single constraint: `L = 1`, no budget.
    SC,
    /// Multiple constraints: per-day `L` and finite `B`.
    MC,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::SC => "SC",
            Setting::MC => "MC",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SC" | "sc" => Ok(Setting::SC),
            "MC" | "mc" => Ok(Setting::MC),
            other => Err(Error::InvalidArgument(format!("unknown setting {other}"))),
        }
    }
}

/// One evaluated day. Serializes to one row of the per-day CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayResult {
    pub day_id: String,
    pub setting: Setting,
    #[serde(rename = "L")]
    pub roi_limit: f64,
    #[serde(rename = "B")]
    pub budget: f64,
    #[serde(rename = "D")]
    pub delivery: f64,
    #[serde(rename = "C")]
    pub cost: f64,
    #[serde(rename = "ROI")]
    pub roi: Option<f64>,
    #[serde(rename = "D_star")]
    pub oracle_value: f64,
    pub feasible: bool,
    pub agent: String,
}

pub const CSV_HEADER: &str = "day_id,setting,L,B,D,C,ROI,D_star,feasible,agent";

/// Normalized score of one day: `D / D*` if feasible, else 0. A day whose
/// oracle value is zero scores 1 when feasible with zero delivery.
pub fn day_score(delivery: f64, oracle_value: f64, feasible: bool) -> f64 {
    if !feasible {
        0.0
    } else if oracle_value > 0.0 {
        delivery / oracle_value
    } else if delivery == 0.0 {
        1.0
    } else {
        0.0
    }
}

impl DayResult {
    pub fn score(&self) -> f64 {
        day_score(self.delivery, self.oracle_value, self.feasible)
    }
}

/// Average normalized score.
pub fn ans(results: &[DayResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Undefined("ANS of an empty result set"));
    }
    Ok(results.iter().map(DayResult::score).sum::<f64>() / results.len() as f64)
}

/// Constraint satisfaction rate.
pub fn csr(results: &[DayResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Undefined("CSR of an empty result set"));
    }
    Ok(results.iter().filter(|r| r.feasible).count() as f64 / results.len() as f64)
}

/// Average normalized delivery regret over feasible days, in percent.
pub fn andr(results: &[DayResult]) -> Result<f64> {
    let feasible: Vec<f64> = results.iter().filter(|r| r.feasible).map(|r| r.score() - 1.0).collect();
    if feasible.is_empty() {
        return Err(Error::Undefined("ANDR without feasible days"));
    }
    Ok(100.0 * feasible.iter().sum::<f64>() / feasible.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub ans: f64,
    pub csr: f64,
    /// `None` when no day was feasible.
    pub andr: Option<f64>,
}

pub fn metrics(results: &[DayResult]) -> Result<Metrics> {
    Ok(Metrics {
        ans: ans(results)?,
        csr: csr(results)?,
        andr: andr(results).ok(),
    })
}

pub fn write_day_results(path: impl AsRef<Path>, results: &[DayResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if results.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in results {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_day_results(path: impl AsRef<Path>) -> Result<Vec<DayResult>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("expected header `{CSV_HEADER}`"),
        });
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                msg: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn day(d: f64, dstar: f64, feasible: bool) -> DayResult {
        DayResult {
            day_id: "d".into(),
            setting: Setting::SC,
            roi_limit: 1.0,
            budget: f64::INFINITY,
            delivery: d,
            cost: d,
            roi: Some(1.0),
            oracle_value: dstar,
            feasible,
            agent: "x".into(),
        }
    }

    #[test]
    fn ans_examples() {
        assert_eq!(ans(&[day(10.0, 20.0, true)]).unwrap(), 0.5);
        assert_eq!(ans(&[day(10.0, 20.0, false)]).unwrap(), 0.0);
        let three = [day(8.0, 10.0, true), day(5.0, 10.0, false), day(6.0, 10.0, true)];
        assert!((ans(&three).unwrap() - 1.4 / 3.0).abs() < 1e-15);
        assert!(ans(&[]).is_err());
    }

    #[test]
    fn csr_examples() {
        assert_eq!(csr(&[day(1.0, 1.0, true), day(1.0, 1.0, true)]).unwrap(), 1.0);
        let four = [day(1.0, 1.0, true), day(1.0, 1.0, true), day(1.0, 1.0, true), day(1.0, 1.0, false)];
        assert_eq!(csr(&four).unwrap(), 0.75);
        assert_eq!(csr(&[day(1.0, 1.0, false)]).unwrap(), 0.0);
        assert!(csr(&[]).is_err());
    }

    #[test]
    fn andr_examples() {
        assert_eq!(andr(&[day(20.0, 20.0, true)]).unwrap(), 0.0);
        let two = [day(8.0, 10.0, true), day(6.0, 10.0, true)];
        assert!((andr(&two).unwrap() + 30.0).abs() < 1e-12);
        let mixed = [day(8.0, 10.0, true), day(1.0, 10.0, false), day(6.0, 10.0, true)];
        assert!((andr(&mixed).unwrap() + 30.0).abs() < 1e-12);
        assert!(andr(&[day(1.0, 1.0, false)]).is_err());
    }

    #[test]
    fn zero_oracle_days() {
        assert_eq!(day_score(0.0, 0.0, true), 1.0);
        assert_eq!(day_score(0.5, 0.0, true), 0.0);
        assert_eq!(day_score(0.0, 0.0, false), 0.0);
    }

    #[test]
    fn csv_round_trip_with_infinite_budget_and_missing_roi() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("days.csv");
        let mut a = day(1.25, 2.5, true);
        a.roi = None;
        let b = day(0.1 + 0.2, 7.0, false);
        write_day_results(&path, &[a.clone(), b.clone()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(read_day_results(&path).unwrap(), vec![a, b]);
    }

    proptest! {
        #[test]
        fn metric_identities(rows in proptest::collection::vec((0.0f64..50.0, 0.0f64..50.0, any::<bool>()), 1..40)) {
            let results: Vec<DayResult> = rows.iter().map(|&(d, ds, f)| day(d.min(ds), ds, f)).collect();
            let m = metrics(&results).unwrap();
            prop_assert!(m.ans <= m.csr + 1e-12);
            if let Some(a) = m.andr {
                prop_assert!((m.ans - m.csr * (1.0 + a / 100.0)).abs() < 1e-9);
            }
        }
    }
}
