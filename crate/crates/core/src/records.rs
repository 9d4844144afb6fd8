//! Metric records and their CSV/JSON emission. Floats are written with 17 significant digits,
//! which round-trips every `f64` exactly.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Format;
use crate::constants::HarnackConstants;
use crate::error::{Error, Result};
use crate::stats::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    /// Signed distance to failure (positive = passing), in the units of the check.
    pub margin: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub id: String,
    pub series: Vec<Series>,
    pub constants: BTreeMap<String, f64>,
    pub verdicts: Vec<Verdict>,
}

fn finite(x: f64) -> f64 {
    // NaN/∞ have no JSON representation; callers only emit them for degenerate fits
    if x.is_finite() {
        x
    } else {
        f64::MAX.copysign(if x.is_nan() { 1.0 } else { x })
    }
}

impl MetricsRecord {
    pub fn new(id: impl Into<String>) -> Self {
        MetricsRecord {
            id: id.into(),
            ..Default::default()
        }
    }

    pub fn series_mut(&mut self, name: &str) -> &mut Series {
        if let Some(i) = self.series.iter().position(|s| s.name == name) {
            return &mut self.series[i];
        }
        self.series.push(Series {
            name: name.into(),
            points: Vec::new(),
        });
        self.series.last_mut().unwrap()
    }

    pub fn point(&mut self, series: &str, t: f64, value: f64, stderr: f64) {
        self.series_mut(series).points.push(Point {
            t: finite(t),
            value: finite(value),
            stderr: finite(stderr),
        });
    }

    pub fn estimate(&mut self, series: &str, t: f64, e: Estimate) {
        self.point(series, t, e.mean, e.se);
    }

    pub fn constant(&mut self, name: &str, value: f64) {
        self.constants.insert(name.into(), finite(value));
    }

    pub fn harnack_constants(&mut self, c: &HarnackConstants) {
        for (k, v) in [
            ("theta", c.theta),
            ("gamma", c.gamma),
            ("k", c.k),
            ("k0", c.k0),
            ("eta_hat", c.eta_hat),
            ("L", c.lipschitz_sq),
            ("K_tilde", c.k_tilde),
            ("C_sigma", c.c_sigma),
            ("Tr", c.trace),
            ("lambda_1", c.lambda_1),
            ("lambda_N0", c.lambda_n0),
            ("contraction_rate", c.contraction_rate),
        ] {
            self.constant(k, v);
        }
    }

    pub fn verdict(&mut self, name: &str, pass: bool, margin: f64) {
        self.verdicts.push(Verdict {
            name: name.into(),
            pass,
            margin: finite(margin),
        });
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

/// 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

struct Sig17;

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(w, value as f64)
    }
}

pub fn to_json(records: &[MetricsRecord]) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    records.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn from_json(text: &str) -> Result<Vec<MetricsRecord>> {
    Ok(serde_json::from_str(text)?)
}

pub const CSV_HEADER: &str = "series,t,value,stderr";

pub fn to_csv(record: Option<&MetricsRecord>) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for series in record.into_iter().flat_map(|r| &r.series) {
        for p in &series.points {
            s.push_str(&format!(
                "{},{},{},{}\n",
                csv_field(&series.name),
                fmt_f64(p.t),
                fmt_f64(p.value),
                fmt_f64(p.stderr)
            ));
        }
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes `metrics.json` (all records) and one `<id>.csv` per record (`metrics.csv` with only
/// the header when there are none). Returns the files written.
pub fn emit_records(records: &[MetricsRecord], dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut write = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    if formats.contains(&Format::Csv) {
        if records.is_empty() {
            write("metrics.csv", to_csv(None))?;
        }
        for r in records {
            write(&format!("{}.csv", r.id), to_csv(Some(r)))?;
        }
    }
    if formats.contains(&Format::Json) {
        write("metrics.json", to_json(records)?)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_set_has_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_records(&[], dir.path(), &[Format::Csv, Format::Json]).unwrap();
        assert_eq!(files.len(), 2);
        assert_eq!(std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap(), "series,t,value,stderr\n");
        assert_eq!(std::fs::read_to_string(dir.path().join("metrics.json")).unwrap().trim(), "[]");
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut r = MetricsRecord::new("contraction");
        r.point("mean_w2", 0.1, 1.0 / 3.0, 2e-17);
        r.point("mean_w2", 0.2, std::f64::consts::PI * 1e-300, 0.0);
        r.constant("theta", 1.875);
        r.verdict("rate", true, 0.25);
        let text = to_json(std::slice::from_ref(&r)).unwrap();
        assert!(text.contains("3.3333333333333331e-1"));
        assert_eq!(from_json(&text).unwrap(), vec![r]);
    }
}
