//! Cardiac-cycle boundaries from pressure peaks.

use serde::{Deserialize, Serialize};

use crate::signal::TimeSeries;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleConfig {
    /// Minimum time between accepted peaks (0.4 s caps the rate at 150 bpm).
    pub min_separation_s: f64,
    /// Width of the centred moving average applied before peak search.
    pub smoothing_s: f64,
    /// Peaks must reach `min + relative_height · (max − min)` of the smoothed signal.
    pub relative_height: f64,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self {
            min_separation_s: 0.4,
            smoothing_s: 0.05,
            relative_height: 0.5,
        }
    }
}

impl CycleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_separation_s.is_finite() && self.min_separation_s > 0.0) {
            return Err(Error::parameter("min_separation_s must be positive"));
        }
        if !(self.smoothing_s.is_finite() && self.smoothing_s >= 0.0) {
            return Err(Error::parameter("smoothing_s must be ≥ 0"));
        }
        if !(0.0..=1.0).contains(&self.relative_height) {
            return Err(Error::parameter("relative_height must lie in [0, 1]"));
        }
        Ok(())
    }
}

fn smooth(x: &[f64], half: usize) -> Vec<f64> {
    if half == 0 {
        return x.to_vec();
    }
    let n = x.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Indices of pressure peaks, ascending. Consecutive peaks delimit one cycle,
/// so `k` peaks give `k − 1` whole cycles.
///
/// Candidates are strict local maxima of the smoothed signal above the height
/// floor; they are accepted tallest first, skipping any closer than the
/// minimum separation to an accepted peak.
pub fn detect_cycles(pressure: &TimeSeries, config: &CycleConfig) -> Result<Vec<usize>> {
    config.validate()?;
    let dt = pressure.dt();
    let half = (0.5 * config.smoothing_s / dt).round() as usize;
    let s = smooth(pressure.values(), half);
    let (lo, hi) = s
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let floor = lo + config.relative_height * (hi - lo);

    let mut candidates: Vec<usize> = Vec::new();
    let mut i = 1;
    while i + 1 < s.len() {
        if s[i] > s[i - 1] && s[i] >= floor {
            // walk across a plateau
            let mut j = i;
            while j + 1 < s.len() && s[j + 1] == s[i] {
                j += 1;
            }
            let mid = (i + j) / 2;
            // skip maxima where the smoothing window is truncated
            if j + 1 < s.len() && s[j + 1] < s[i] && mid >= half && mid + half < s.len() {
                candidates.push(mid);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    candidates.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let min_gap = config.min_separation_s / dt;
    let mut accepted: Vec<usize> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|&a| (a as f64 - c as f64).abs() >= min_gap) {
            accepted.push(c);
        }
    }
    accepted.sort_unstable();
    Ok(accepted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn finds_one_peak_per_period() {
        let dt = 0.005;
        let n = 1000; // 5 s at 1.25 Hz → peaks at 0.2 + 0.8k
        let p: Vec<f64> = (0..n).map(|i| (2.0 * PI * 1.25 * (i as f64 * dt - 0.2)).cos()).collect();
        let ts = TimeSeries::new(p, dt, 0.0, "mmHg").unwrap();
        let peaks = detect_cycles(&ts, &CycleConfig::default()).unwrap();
        assert_eq!(peaks, vec![40, 200, 360, 520, 680, 840]);
    }

    #[test]
    fn secondary_bumps_are_rejected() {
        // a dicrotic-like second harmonic creates low secondary maxima
        let dt = 0.005;
        let p: Vec<f64> = (0..1000)
            .map(|i| {
                let t = i as f64 * dt;
                (2.0 * PI * t).cos() + 0.45 * (4.0 * PI * t + 0.5).cos()
            })
            .collect();
        let ts = TimeSeries::new(p, dt, 0.0, "mmHg").unwrap();
        let peaks = detect_cycles(&ts, &CycleConfig::default()).unwrap();
        // main maxima sit 0.025 s before each whole second; the bumps near
        // 0.4 s into each cycle stay below the height floor; the maximum at
        // 4.97 s borders the truncated smoothing window and is not reported
        assert_eq!(peaks, vec![195, 395, 595, 795]);
    }

    #[test]
    fn separation_guard() {
        let dt = 0.01;
        let mut p = vec![0.0; 100];
        p[20] = 1.0;
        p[40] = 0.9; // 0.2 s after a taller peak
        p[80] = 1.0;
        let ts = TimeSeries::new(p, dt, 0.0, "mmHg").unwrap();
        let cfg = CycleConfig {
            smoothing_s: 0.0,
            ..CycleConfig::default()
        };
        assert_eq!(detect_cycles(&ts, &cfg).unwrap(), vec![20, 80]);
        assert!(detect_cycles(&ts, &CycleConfig { min_separation_s: 0.0, ..cfg }).is_err());
    }
}
