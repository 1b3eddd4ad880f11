//! Forward simulation of identified models and the validation protocols built
//! on it.

mod cycles;
mod damping;
mod phase;
mod protocols;

use serde::Serialize;

use crate::signal::{first_difference, SignalPair, TimeSeries};
use crate::stls::SparseModel;
use crate::{Error, Result};

pub use cycles::{detect_cycles, CycleConfig};
pub use damping::{classify_damping, DampingClass, DampingCriterion, Regime};
pub use phase::{
    phase_portrait, phase_portrait_with, signed_area, LoopOrientation, Orientation, PhasePortrait,
};
pub use protocols::{
    forecast, split_half_reproducibility, ForecastReport, SplitHalfReport, TermDeviation,
};

/// RK4 substeps per sample for consumer-side simulation.
pub const DEFAULT_SUBSTEPS: usize = 4;

/// Blow-up guard: |p| may not exceed this multiple of the input amplitude.
const DIVERGENCE_FACTOR: f64 = 1e12;

/// Integrates `p̈ = f(p, ṗ, v)` and returns `(p, ṗ)` at every sample instant.
///
/// `forcing(i, frac)` gives v at time `t0 + (i + frac)·dt` for `frac ∈ [0, 1]`.
/// `scale` is the input amplitude used by the divergence guard.
#[allow(clippy::too_many_arguments)]
pub(crate) fn integrate<F>(
    model: &SparseModel,
    n: usize,
    dt: f64,
    substeps: usize,
    p0: f64,
    dp0: f64,
    scale: f64,
    forcing: F,
) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(usize, f64) -> f64,
{
    if substeps == 0 {
        return Err(Error::parameter("substeps must be ≥ 1"));
    }
    if !(p0.is_finite() && dp0.is_finite()) {
        return Err(Error::parameter("initial conditions must be finite"));
    }
    let limit = DIVERGENCE_FACTOR * scale.max(p0.abs()).max(1.0);
    let h = dt / substeps as f64;
    let ss = substeps as f64;
    let rhs = |p: f64, dp: f64, v: f64| model.acceleration(p, dp, v);

    let mut p = Vec::with_capacity(n);
    let mut dp = Vec::with_capacity(n);
    let (mut x, mut y) = (p0, dp0);
    p.push(x);
    dp.push(y);
    for i in 0..n.saturating_sub(1) {
        for s in 0..substeps {
            let f0 = s as f64 / ss;
            let v0 = forcing(i, f0);
            let vh = forcing(i, f0 + 0.5 / ss);
            let v1 = forcing(i, (s + 1) as f64 / ss);

            let (k1x, k1y) = (y, rhs(x, y, v0));
            let (k2x, k2y) = (y + 0.5 * h * k1y, rhs(x + 0.5 * h * k1x, y + 0.5 * h * k1y, vh));
            let (k3x, k3y) = (y + 0.5 * h * k2y, rhs(x + 0.5 * h * k2x, y + 0.5 * h * k2y, vh));
            let (k4x, k4y) = (y + h * k3y, rhs(x + h * k3x, y + h * k3y, v1));
            x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);

            if !(x.is_finite() && y.is_finite()) || x.abs() > limit {
                return Err(Error::Divergence {
                    time: (i as f64 + (s + 1) as f64 / ss) * dt,
                });
            }
        }
        p.push(x);
        dp.push(y);
    }
    Ok((p, dp))
}

/// Linear interpolation of sampled forcing.
pub(crate) fn interpolate(values: &[f64], i: usize, frac: f64) -> f64 {
    if i + 1 >= values.len() {
        return values[values.len() - 1];
    }
    values[i] + frac * (values[i + 1] - values[i])
}

/// Simulates `model` driven by `forcing`, sampled on the forcing's grid, with
/// `DEFAULT_SUBSTEPS` RK4 steps per sample.
pub fn simulate(model: &SparseModel, forcing: &TimeSeries, p0: f64, dp0: f64) -> Result<TimeSeries> {
    simulate_with(model, forcing, p0, dp0, DEFAULT_SUBSTEPS)
}

pub fn simulate_with(
    model: &SparseModel,
    forcing: &TimeSeries,
    p0: f64,
    dp0: f64,
    substeps: usize,
) -> Result<TimeSeries> {
    let v = forcing.values();
    let (p, _) = integrate(
        model,
        v.len(),
        forcing.dt(),
        substeps,
        p0,
        dp0,
        forcing.amplitude(),
        |i, f| interpolate(v, i, f),
    )?;
    TimeSeries::new(p, forcing.dt(), forcing.t0(), "")
}

/// Root mean squared error over aligned samples.
pub fn rmse(reference: &TimeSeries, simulated: &TimeSeries) -> Result<f64> {
    rmse_values(reference.values(), simulated.values())
}

pub fn rmse_values(reference: &[f64], simulated: &[f64]) -> Result<f64> {
    if reference.len() != simulated.len() {
        return Err(Error::input(format!(
            "rmse needs equal lengths, got {} and {}",
            reference.len(),
            simulated.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::input("rmse of empty series"));
    }
    let ss: f64 = reference
        .iter()
        .zip(simulated)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((ss / reference.len() as f64).sqrt())
}

/// A simulated trajectory scored against measured pressure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimResult {
    pub simulated_pressure: TimeSeries,
    pub rmse: f64,
    pub model: SparseModel,
}

/// Simulates from the measured initial state (p₀ and forward-difference ṗ₀)
/// under the pair's velocity and scores against its pressure.
pub fn simulate_against(model: &SparseModel, pair: &SignalPair) -> Result<SimResult> {
    simulate_against_with(model, pair, DEFAULT_SUBSTEPS)
}

pub fn simulate_against_with(model: &SparseModel, pair: &SignalPair, substeps: usize) -> Result<SimResult> {
    let p = pair.pressure();
    let dp0 = first_difference(&p.values()[..2], p.dt())[0];
    let sim = simulate_with(model, pair.velocity(), p.values()[0], dp0, substeps)?.with_unit(p.unit());
    let rmse = rmse(p, &sim)?;
    Ok(SimResult {
        simulated_pressure: sim,
        rmse,
        model: model.clone(),
    })
}
