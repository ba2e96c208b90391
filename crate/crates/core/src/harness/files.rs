//! Model and dataset ingestion, persisted session state, atomic writes.
//!
//! Model files are JSON:
//!
//! ```json
//! {"field": {"p": 17592186028033, "kappa": 44, "scale_bits": 0},
//!  "input_len": 4,
//!  "layers": [{"kind": "fully_connected", "d_in": 4, "d_out": 2, "weights": [1, 0, -2, 3, 0, 1, 1, -1]},
//!             {"kind": "relu"}]}
//! ```
//!
//! Dataset files are comma-separated rows `feature_1, ..., feature_n, label, group`
//! with an optional header row whose last two columns are `label` and
//! `group`. Lines starting with `#` are skipped.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::engine::{Architecture, ModelSpec};
use crate::error::{Error, Result};
use crate::fairness::{FairnessReport, Sample};

fn loc(path: &Path, line: u64, what: &str) -> String {
    format!("{}:{line}: {what}", path.display())
}

pub fn parse_model(path: &Path, text: &str) -> Result<ModelSpec> {
    let m: ModelSpec = serde_json::from_str(text)
        .map_err(|e| Error::parse(format!("{}:{}:{}", path.display(), e.line(), e.column()), e.to_string()))?;
    m.validate().map_err(|e| match e {
        Error::Shape(msg) | Error::Param(msg) => Error::parse(path.display().to_string(), msg),
        other => other,
    })?;
    Ok(m)
}

pub fn load_model(path: &Path) -> Result<ModelSpec> {
    parse_model(path, &fs::read_to_string(path)?)
}

pub fn parse_dataset(path: &Path, text: &str) -> Result<Vec<Sample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    let mut width = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(loc(path, line, "record"), e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let n = rec.len();
        if i == 0 && n >= 2 && &rec[n - 2] == "label" && &rec[n - 1] == "group" {
            width = Some(n);
            continue;
        }
        if n < 3 {
            return Err(Error::parse(loc(path, line, "row"), "need at least one feature, a label and a group"));
        }
        match width {
            Some(w) if w != n => {
                return Err(Error::parse(loc(path, line, "row"), format!("{n} fields, expected {w}")));
            }
            _ => width = Some(n),
        }
        let features = (0..n - 2)
            .map(|k| {
                rec[k].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::parse(loc(path, line, &format!("field {}", k + 1)), format!("{:?} is not a number", &rec[k]))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let label = rec[n - 2].parse::<usize>().map_err(|_| {
            Error::parse(loc(path, line, "label"), format!("{:?} is not a class index", &rec[n - 2]))
        })?;
        let group = rec[n - 1].to_string();
        if group.is_empty() {
            return Err(Error::parse(loc(path, line, "group"), "empty group id"));
        }
        out.push(Sample { features, label, group });
    }
    if out.is_empty() {
        return Err(Error::parse(path.display().to_string(), "no samples"));
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<Sample>> {
    parse_dataset(path, &fs::read_to_string(path)?)
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Param(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_report(path: &Path, report: &FairnessReport) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(report).map_err(|e| Error::Param(e.to_string()))?;
    text.push(b'\n');
    write_atomic(path, &text)
}

pub fn read_report(path: &Path) -> Result<FairnessReport> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

/// Architecture JSON followed by an opaque blob, for stores that must be
/// readable without the model file.
pub fn pack_state(arch: &Architecture, blob: &[u8]) -> Vec<u8> {
    let head = serde_json::to_vec(arch).expect("architecture serializes");
    let mut w = crate::wire::Writer::new();
    w.blob(&head).blob(blob);
    w.finish()
}

pub fn unpack_state(bytes: &[u8]) -> Result<(Architecture, Vec<u8>)> {
    let mut r = crate::wire::Reader::new(bytes);
    let arch: Architecture =
        serde_json::from_slice(r.blob()?).map_err(|e| Error::Framing(format!("state header: {e}")))?;
    let blob = r.blob()?.to_vec();
    r.finish()?;
    Ok((arch, blob))
}
