//! Pressure–velocity loops and their orientation.

use std::io::Write;

use serde::Serialize;

use super::cycles::{detect_cycles, CycleConfig};
use crate::signal::{SignalPair, TimeSeries};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Orientation {
    CounterClockwise,
    Clockwise,
    Degenerate,
}

impl Orientation {
    fn of(area: f64) -> Self {
        if area > 0.0 {
            Self::CounterClockwise
        } else if area < 0.0 {
            Self::Clockwise
        } else {
            Self::Degenerate
        }
    }
}

/// Shoelace area of the closed polygon through `(x, y)`; positive when
/// traversed counterclockwise.
pub fn signed_area(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 3 {
        return 0.0;
    }
    let s: f64 = (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            x[i] * y[j] - x[j] * y[i]
        })
        .sum();
    0.5 * s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LoopOrientation {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub measured_area: f64,
    pub measured: Orientation,
    pub simulated_area: f64,
    pub simulated: Orientation,
}

/// Measured `(p, v)` and simulated `(p̂, v)` loops with per-cycle orientation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhasePortrait {
    pub p_meas: Vec<f64>,
    pub v_meas: Vec<f64>,
    pub p_sim: Vec<f64>,
    pub cycles: Vec<LoopOrientation>,
}

impl PhasePortrait {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "p_meas,v_meas,p_sim")?;
        for ((p, v), s) in self.p_meas.iter().zip(&self.v_meas).zip(&self.p_sim) {
            writeln!(out, "{p},{v},{s}")?;
        }
        Ok(())
    }
}

/// Loops split at detected pressure peaks; the whole record counts as one
/// loop when fewer than two peaks are found.
pub fn phase_portrait(pair: &SignalPair, sim: &TimeSeries) -> Result<PhasePortrait> {
    let peaks = detect_cycles(pair.pressure(), &CycleConfig::default())?;
    phase_portrait_with(pair, sim, &peaks)
}

pub fn phase_portrait_with(pair: &SignalPair, sim: &TimeSeries, boundaries: &[usize]) -> Result<PhasePortrait> {
    if sim.len() != pair.len() {
        return Err(Error::input(format!(
            "simulated series has {} samples, pair has {}",
            sim.len(),
            pair.len()
        )));
    }
    let n = pair.len();
    if boundaries.windows(2).any(|w| w[0] >= w[1]) || boundaries.iter().any(|&b| b >= n) {
        return Err(Error::input("cycle boundaries must be increasing sample indices"));
    }
    let ranges: Vec<(usize, usize)> = if boundaries.len() >= 2 {
        boundaries.windows(2).map(|w| (w[0], w[1] + 1)).collect()
    } else {
        vec![(0, n)]
    };
    let p = pair.pressure().values();
    let v = pair.velocity().values();
    let s = sim.values();
    let cycles = ranges
        .into_iter()
        .map(|(a, b)| {
            let ma = signed_area(&p[a..b], &v[a..b]);
            let sa = signed_area(&s[a..b], &v[a..b]);
            LoopOrientation {
                start: a,
                end: b,
                measured_area: ma,
                measured: Orientation::of(ma),
                simulated_area: sa,
                simulated: Orientation::of(sa),
            }
        })
        .collect();
    Ok(PhasePortrait {
        p_meas: p.to_vec(),
        v_meas: v.to_vec(),
        p_sim: s.to_vec(),
        cycles,
    })
}
