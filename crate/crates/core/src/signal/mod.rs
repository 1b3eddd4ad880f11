//! Uniformly sampled signals: validation, preprocessing and finite differences.

mod io;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{parse_pair_csv, read_pair_csv, read_units, sidecar_path, write_pair_csv, Units};

/// Uniformly sampled scalar signal.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    dt: f64,
    t0: f64,
    unit: String,
}

impl TimeSeries {
    /// Builds a series, rejecting fewer than 3 samples, a non-positive or
    /// non-finite `dt`, and non-finite samples.
    pub fn new(values: Vec<f64>, dt: f64, t0: f64, unit: impl Into<String>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::input(format!(
                "time series needs at least 3 samples, got {}",
                values.len()
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::input(format!("time step must be positive and finite, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::input("start time must be finite"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            values,
            dt,
            t0,
            unit: unit.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    /// Same sampling grid and unit, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::input(format!(
                "replacement values have length {}, expected {}",
                values.len(),
                self.len()
            )));
        }
        Self::new(values, self.dt, self.t0, self.unit.clone())
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = unit.into();
        self
    }

    /// Sub-series over sample indices `range`; `t0` follows the first sample.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.end > self.len() || range.start >= range.end {
            return Err(Error::input(format!(
                "slice {}..{} out of bounds for {} samples",
                range.start,
                range.end,
                self.len()
            )));
        }
        Self::new(
            self.values[range.clone()].to_vec(),
            self.dt,
            self.time(range.start),
            self.unit.clone(),
        )
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Largest absolute sample.
    pub fn amplitude(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn same_grid(&self, other: &TimeSeries) -> bool {
        self.len() == other.len() && self.dt == other.dt && self.t0 == other.t0
    }
}

/// Pathology class of a recording.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    AA,
    AVM,
    Treated,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::AA, ClassLabel::AVM, ClassLabel::Treated];

    pub fn index(self) -> usize {
        match self {
            ClassLabel::AA => 0,
            ClassLabel::AVM => 1,
            ClassLabel::Treated => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassLabel::AA => "AA",
            ClassLabel::AVM => "AVM",
            ClassLabel::Treated => "Treated",
        })
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "AA" | "aa" | "0" => Ok(ClassLabel::AA),
            "AVM" | "avm" | "1" => Ok(ClassLabel::AVM),
            "Treated" | "treated" | "TREATED" | "2" => Ok(ClassLabel::Treated),
            other => Err(Error::input(format!("unknown class label {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurgeryPhase {
    Before,
    During,
    After,
}

impl FromStr for SurgeryPhase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "before" => Ok(SurgeryPhase::Before),
            "during" => Ok(SurgeryPhase::During),
            "after" => Ok(SurgeryPhase::After),
            other => Err(Error::input(format!("unknown surgery phase {other:?}"))),
        }
    }
}

/// Aligned pressure and velocity recordings of one subject.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignalPair {
    pressure: TimeSeries,
    velocity: TimeSeries,
    pub class_label: Option<ClassLabel>,
    pub phase: Option<SurgeryPhase>,
    pub subject_id: String,
}

impl SignalPair {
    pub fn new(
        pressure: TimeSeries,
        velocity: TimeSeries,
        subject_id: impl Into<String>,
    ) -> Result<Self> {
        if !pressure.same_grid(&velocity) {
            return Err(Error::input(format!(
                "pressure ({} samples, dt {}, t0 {}) and velocity ({} samples, dt {}, t0 {}) are not aligned",
                pressure.len(),
                pressure.dt,
                pressure.t0,
                velocity.len(),
                velocity.dt,
                velocity.t0
            )));
        }
        Ok(Self {
            pressure,
            velocity,
            class_label: None,
            phase: None,
            subject_id: subject_id.into(),
        })
    }

    pub fn pressure(&self) -> &TimeSeries {
        &self.pressure
    }

    pub fn velocity(&self) -> &TimeSeries {
        &self.velocity
    }

    pub fn len(&self) -> usize {
        self.pressure.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pressure.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.pressure.dt
    }

    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        Ok(Self {
            pressure: self.pressure.slice(range.clone())?,
            velocity: self.velocity.slice(range)?,
            class_label: self.class_label,
            phase: self.phase,
            subject_id: self.subject_id.clone(),
        })
    }

    /// Applies `f` to both channels.
    pub fn map_channels(&self, f: impl Fn(&TimeSeries) -> Result<TimeSeries>) -> Result<Self> {
        Ok(Self {
            pressure: f(&self.pressure)?,
            velocity: f(&self.velocity)?,
            class_label: self.class_label,
            phase: self.phase,
            subject_id: self.subject_id.clone(),
        })
    }
}

/// First and second derivative estimates of a series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeSet {
    pub d1: TimeSeries,
    pub d2: TimeSeries,
    /// Accuracy order at the two end points.
    pub boundary_order: u32,
    /// Accuracy order at interior points.
    pub interior_order: u32,
}

pub fn subtract_mean(series: &TimeSeries) -> TimeSeries {
    let mean = series.mean();
    let mut values: Vec<f64> = series.values.iter().map(|v| v - mean).collect();
    // second pass removes the rounding residue of the first
    let residue = values.iter().sum::<f64>() / values.len() as f64;
    values.iter_mut().for_each(|v| *v -= residue);
    TimeSeries {
        values,
        ..series.clone()
    }
}

/// Zeroes every discrete Fourier component whose frequency magnitude exceeds
/// `cutoff_hz`.
pub fn lowpass_filter(series: &TimeSeries, cutoff_hz: f64) -> Result<TimeSeries> {
    let nyquist = 0.5 / series.dt;
    if !(cutoff_hz.is_finite() && cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(Error::parameter(format!(
            "cutoff {cutoff_hz} Hz outside (0, {nyquist}) Hz"
        )));
    }
    let n = series.len();
    let mut buf: Vec<Complex<f64>> = series.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = 1.0 / (n as f64 * series.dt);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = if k <= n / 2 { k } else { n - k };
        if bin as f64 * df > cutoff_hz {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    series.with_values(buf.iter().map(|c| c.re * scale).collect())
}

/// Central differences inside, one-sided first-order differences at both ends.
pub(crate) fn first_difference(values: &[f64], dt: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = Vec::with_capacity(n);
    out.push((values[1] - values[0]) / dt);
    for i in 1..n - 1 {
        out.push((values[i + 1] - values[i - 1]) / (2.0 * dt));
    }
    out.push((values[n - 1] - values[n - 2]) / dt);
    out
}

/// First and second derivatives; the second is the same scheme applied to the
/// first.
pub fn differentiate(series: &TimeSeries) -> Result<DerivativeSet> {
    if series.len() < 3 {
        return Err(Error::input("differentiation needs at least 3 samples"));
    }
    let d1 = first_difference(&series.values, series.dt);
    let d2 = first_difference(&d1, series.dt);
    let unit = |suffix: &str| format!("{}/{}", series.unit, suffix);
    Ok(DerivativeSet {
        d1: TimeSeries::new(d1, series.dt, series.t0, unit("s"))?,
        d2: TimeSeries::new(d2, series.dt, series.t0, unit("s^2"))?,
        boundary_order: 1,
        interior_order: 2,
    })
}
