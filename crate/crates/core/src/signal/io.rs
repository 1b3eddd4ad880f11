//! `t,p,v` CSV ingestion and export, plus the optional units sidecar.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{SignalPair, TimeSeries};
use crate::{Error, Result};

/// Relative tolerance for the spread of successive time gaps.
const UNIFORMITY_TOL: f64 = 1e-6;

/// Unit labels from the sidecar JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Units {
    #[serde(default = "default_pressure_unit")]
    pub pressure_unit: String,
    #[serde(default = "default_velocity_unit")]
    pub velocity_unit: String,
}

fn default_pressure_unit() -> String {
    "mmHg".into()
}

fn default_velocity_unit() -> String {
    "cm/s".into()
}

impl Default for Units {
    fn default() -> Self {
        Self {
            pressure_unit: default_pressure_unit(),
            velocity_unit: default_velocity_unit(),
        }
    }
}

/// `data.csv` → `data.units.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("units.json")
}

/// Reads units from `explicit`, else from the sidecar next to `csv` if it
/// exists, else defaults.
pub fn read_units(csv: &Path, explicit: Option<&Path>) -> Result<Units> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let p = sidecar_path(csv);
            if !p.exists() {
                return Ok(Units::default());
            }
            p
        }
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Parses `t,p,v` CSV text. Lines starting with `#` are ignored.
pub fn parse_pair_csv(text: &str, units: &Units, subject_id: &str) -> Result<SignalPair> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::input(format!("cannot read CSV header: {e}")))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::input(format!("CSV header lacks column {name:?}")))
    };
    let (ti, pi, vi) = (col("t")?, col("p")?, col("v")?);

    let (mut t, mut p, mut v) = (Vec::new(), Vec::new(), Vec::new());
    let mut diagnostics = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                diagnostics.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let field = |i: usize, name: &str| -> std::result::Result<f64, String> {
            let raw = record.get(i).ok_or_else(|| format!("line {line}: missing {name}"))?;
            let x: f64 = raw
                .parse()
                .map_err(|_| format!("line {line}: {name} = {raw:?} is not a number"))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(format!("line {line}: {name} is not finite"))
            }
        };
        match (field(ti, "t"), field(pi, "p"), field(vi, "v")) {
            (Ok(a), Ok(b), Ok(c)) => {
                t.push(a);
                p.push(b);
                v.push(c);
            }
            (a, b, c) => {
                diagnostics.extend([a.err(), b.err(), c.err()].into_iter().flatten());
            }
        }
    }
    if !diagnostics.is_empty() {
        return Err(Error::Malformed { diagnostics });
    }
    if t.len() < 3 {
        return Err(Error::input(format!("need at least 3 samples, got {}", t.len())));
    }
    let dt = uniform_step(&t)?;
    let pressure = TimeSeries::new(p, dt, t[0], units.pressure_unit.clone())?;
    let velocity = TimeSeries::new(v, dt, t[0], units.velocity_unit.clone())?;
    SignalPair::new(pressure, velocity, subject_id)
}

/// Median time gap, after checking that `t` is strictly increasing and every
/// gap is within `UNIFORMITY_TOL` of the median.
fn uniform_step(t: &[f64]) -> Result<f64> {
    let mut gaps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(i) = gaps.iter().position(|&g| g <= 0.0) {
        return Err(Error::input(format!(
            "time column not strictly increasing at sample {}",
            i + 1
        )));
    }
    let raw = gaps.clone();
    gaps.sort_by(f64::total_cmp);
    let mid = gaps.len() / 2;
    let dt = if gaps.len().is_multiple_of(2) {
        0.5 * (gaps[mid - 1] + gaps[mid])
    } else {
        gaps[mid]
    };
    if let Some(i) = raw.iter().position(|g| (g - dt).abs() > UNIFORMITY_TOL * dt) {
        return Err(Error::input(format!(
            "non-uniform sampling: gap {} at sample {} deviates from median step {dt}",
            raw[i],
            i + 1
        )));
    }
    Ok(dt)
}

pub fn read_pair_csv(path: &Path, units: &Units) -> Result<SignalPair> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let subject = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_pair_csv(&text, units, &subject)
}

/// Writes the pair as `t,p,v` with shortest round-trip float formatting.
pub fn write_pair_csv<W: Write>(pair: &SignalPair, mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,p,v")?;
    let p = pair.pressure();
    for (i, (pv, vv)) in p.values().iter().zip(pair.velocity().values()).enumerate() {
        writeln!(out, "{},{},{}", p.time(i), pv, vv)?;
    }
    Ok(())
}
