//! Line-delimited JSON day files.
//!
//! ```text
//! {"T":48,"L":1.0,"B":null,"K":2,"regime_trace":[0,0,1,...]}
//! {"slot":0,"u":1.13,"d":1.02,"m":0.61}
//! ...
//! ```
//!
//! `B: null` encodes an unconstrained budget.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Impression, ProblemInstance};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    #[serde(rename = "T")]
    slots: usize,
    #[serde(rename = "L")]
    roi_limit: f64,
    #[serde(rename = "B")]
    budget: Option<f64>,
    #[serde(rename = "K")]
    num_regimes: usize,
    regime_trace: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    slot: usize,
    u: f64,
    d: f64,
    m: f64,
}

pub fn write_dataset(instance: &ProblemInstance, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    write_to(instance, &mut out)?;
    out.flush()?;
    Ok(())
}

pub(crate) fn write_to(instance: &ProblemInstance, out: &mut impl Write) -> Result<()> {
    let header = Header {
        slots: instance.slots_per_day(),
        roi_limit: instance.roi_limit,
        budget: instance.budget.is_finite().then_some(instance.budget),
        num_regimes: instance.num_regimes,
        regime_trace: instance.regime_trace.clone(),
    };
    serde_json::to_writer(&mut *out, &header)?;
    out.write_all(b"\n")?;
    for imp in instance.slots.iter().flatten() {
        let (d, m) = imp.reveal();
        let rec = Record {
            slot: imp.slot(),
            u: imp.utility(),
            d,
            m,
        };
        serde_json::to_writer(&mut *out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<ProblemInstance> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    read_from(reader, path)
}

pub(crate) fn read_from(reader: impl BufRead, path: &Path) -> Result<ProblemInstance> {
    let mut lines = reader.lines();
    let format_err = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    let first = match lines.next() {
        Some(line) => line?,
        None => return Err(format_err("missing header".into())),
    };
    let header: Header = serde_json::from_str(&first)
        .map_err(|e| format_err(format!("missing or invalid header: {e}")))?;
    let budget = match header.budget {
        None => f64::INFINITY,
        Some(b) => b,
    };
    let mut impressions = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if rec.slot >= header.slots {
            return Err(parse_err(format!("slot {} out of range for T={}", rec.slot, header.slots)));
        }
        let imp = Impression::new(rec.slot, rec.u, rec.d, rec.m).map_err(|e| parse_err(e.to_string()))?;
        impressions.push(imp);
    }
    ProblemInstance::from_impressions(
        header.slots,
        impressions,
        header.roi_limit,
        budget,
        header.num_regimes,
        header.regime_trace,
    )
    .map_err(|e| format_err(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{generate_day, MarketConfig};

    fn three_impressions() -> ProblemInstance {
        let imps = vec![
            Impression::new(0, 1.0, 0.9, 0.5).unwrap(),
            Impression::new(1, 0.1 + 0.2, 0.3, 1.0 / 3.0).unwrap(),
            Impression::new(1, 2.5, 2.0, 7.25).unwrap(),
        ];
        ProblemInstance::from_impressions(2, imps, 1.0, 12.5, 2, vec![0, 1]).unwrap()
    }

    #[test]
    fn round_trip_small_instance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("day.jsonl");
        let inst = three_impressions();
        write_dataset(&inst, &path).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), inst);
    }

    #[test]
    fn round_trip_generated_unbudgeted_day() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("day.jsonl");
        let inst = generate_day(&MarketConfig::two_regime_default(), (1.0, f64::INFINITY), 4).unwrap();
        write_dataset(&inst, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains("\"B\":null"));
        assert_eq!(read_dataset(&path).unwrap(), inst);
    }

    #[test]
    fn negative_utility_is_a_parse_error_with_line() {
        let text = "{\"T\":2,\"L\":1.0,\"B\":null,\"K\":1,\"regime_trace\":[0,0]}\n\
                    {\"slot\":0,\"u\":1.0,\"d\":1.0,\"m\":1.0}\n\
                    {\"slot\":1,\"u\":-1.0,\"d\":1.0,\"m\":1.0}\n";
        let err = read_from(text.as_bytes(), Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn malformed_line_names_line_number() {
        let text = "{\"T\":2,\"L\":1.0,\"B\":3.0,\"K\":1,\"regime_trace\":[0,0]}\n{\"slot\":0,\"u\":1.0\n";
        let err = read_from(text.as_bytes(), Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn missing_header_is_a_format_error() {
        let err = read_from("".as_bytes(), Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        let text = "{\"slot\":0,\"u\":1.0,\"d\":1.0,\"m\":1.0}\n";
        let err = read_from(text.as_bytes(), Path::new("x")).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }

    #[test]
    fn empty_day_with_header_is_valid() {
        let text = "{\"T\":5,\"L\":1.0,\"B\":null,\"K\":1,\"regime_trace\":[]}\n";
        let inst = read_from(text.as_bytes(), Path::new("x")).unwrap();
        assert_eq!(inst.slots_per_day(), 5);
        assert!(inst.slots.iter().all(Vec::is_empty));
        assert!(inst.budget.is_infinite());
    }
}
