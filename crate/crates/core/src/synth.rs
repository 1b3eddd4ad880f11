//! Ground-truth signal pairs from known models.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::signal::{SignalPair, TimeSeries};
use crate::sim::{integrate, interpolate};
use crate::stls::{LinearParams, SparseModel};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum GeneratorModel {
    Linear(LinearParams),
    Sparse(SparseModel),
}

impl GeneratorModel {
    fn to_sparse(&self) -> SparseModel {
        match self {
            Self::Linear(lp) => lp.to_model(),
            Self::Sparse(m) => m.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency_hz: f64,
    /// Radians.
    pub phase: f64,
}

impl Sinusoid {
    fn at(&self, t: f64) -> f64 {
        self.amplitude * (std::f64::consts::TAU * self.frequency_hz * t + self.phase).sin()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Forcing {
    SumOfSines(Vec<Sinusoid>),
    /// Recorded velocity, linearly interpolated between samples.
    Replay(TimeSeries),
}

impl Forcing {
    /// Three harmonics of 1.25 Hz. A single sinusoid leaves p, ṗ and v
    /// linearly dependent in steady state, so the linear model would not be
    /// identifiable from it.
    pub fn cardiac_like() -> Self {
        let f0 = 1.25;
        Self::SumOfSines(vec![
            Sinusoid { amplitude: 0.5, frequency_hz: f0, phase: 0.0 },
            Sinusoid { amplitude: 0.25, frequency_hz: 2.0 * f0, phase: 0.7 },
            Sinusoid { amplitude: 0.125, frequency_hz: 3.0 * f0, phase: 1.9 },
        ])
    }

    pub fn single(amplitude: f64, frequency_hz: f64) -> Self {
        Self::SumOfSines(vec![Sinusoid { amplitude, frequency_hz, phase: 0.0 }])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneratorSpec {
    pub model: GeneratorModel,
    pub forcing: Forcing,
    pub duration_s: f64,
    pub dt: f64,
    pub noise_std_pressure: f64,
    pub noise_std_velocity: f64,
    pub rng_seed: u64,
    /// State at the start of the burn-in.
    pub p0: f64,
    pub dp0: f64,
    /// Integration time discarded before t = 0 so the output starts on the
    /// forced response. Only valid with analytic forcing.
    pub burn_in_s: f64,
    pub substeps: usize,
}

/// Generator integration is finer than consumer-side simulation.
pub const GENERATOR_SUBSTEPS: usize = 8;

impl GeneratorSpec {
    /// Noise-free spec with 10 s of burn-in for analytic forcing, none for
    /// replayed forcing.
    pub fn new(model: GeneratorModel, forcing: Forcing, duration_s: f64, dt: f64) -> Self {
        let burn_in_s = match forcing {
            Forcing::SumOfSines(_) => 10.0,
            Forcing::Replay(_) => 0.0,
        };
        Self {
            model,
            forcing,
            duration_s,
            dt,
            noise_std_pressure: 0.0,
            noise_std_velocity: 0.0,
            rng_seed: 0,
            p0: 0.0,
            dp0: 0.0,
            burn_in_s,
            substeps: GENERATOR_SUBSTEPS,
        }
    }

    pub fn samples(&self) -> usize {
        (self.duration_s / self.dt).round() as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::parameter("dt must be positive"));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) || self.samples() < 3 {
            return Err(Error::parameter("duration must cover at least 3 samples"));
        }
        for (name, s) in [("pressure", self.noise_std_pressure), ("velocity", self.noise_std_velocity)] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::parameter(format!("{name} noise std must be finite and ≥ 0")));
            }
        }
        if !(self.burn_in_s.is_finite() && self.burn_in_s >= 0.0) {
            return Err(Error::parameter("burn-in must be ≥ 0"));
        }
        if !(self.p0.is_finite() && self.dp0.is_finite()) {
            return Err(Error::parameter("initial conditions must be finite"));
        }
        if self.substeps == 0 {
            return Err(Error::parameter("substeps must be ≥ 1"));
        }
        match &self.forcing {
            Forcing::SumOfSines(terms) => {
                if terms.iter().any(|s| !(s.amplitude.is_finite() && s.frequency_hz.is_finite() && s.phase.is_finite())) {
                    return Err(Error::parameter("sinusoid parameters must be finite"));
                }
            }
            Forcing::Replay(ts) => {
                if self.burn_in_s > 0.0 {
                    return Err(Error::parameter("burn-in needs analytic forcing"));
                }
                if (ts.dt() - self.dt).abs() > 1e-12 * self.dt {
                    return Err(Error::parameter("replayed forcing must share the generator dt"));
                }
                if ts.len() < self.samples() {
                    return Err(Error::parameter(format!(
                        "replayed forcing has {} samples, {} needed",
                        ts.len(),
                        self.samples()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Integrates the model under the forcing, then adds seeded Gaussian noise,
/// pressure channel first.
pub fn generate(spec: &GeneratorSpec) -> Result<SignalPair> {
    spec.validate()?;
    let n = spec.samples();
    let dt = spec.dt;
    let model = spec.model.to_sparse();

    let (p, v) = match &spec.forcing {
        Forcing::SumOfSines(terms) => {
            let burn = (spec.burn_in_s / dt).round() as usize;
            let at = |t: f64| terms.iter().map(|s| s.at(t)).sum::<f64>();
            let v: Vec<f64> = (0..n).map(|i| at(i as f64 * dt)).collect();
            let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let (p, _) = integrate(&model, burn + n, dt, spec.substeps, spec.p0, spec.dp0, scale, |i, f| {
                at((i as f64 - burn as f64 + f) * dt)
            })?;
            (p[burn..].to_vec(), v)
        }
        Forcing::Replay(ts) => {
            let v = ts.values()[..n].to_vec();
            let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let (p, _) = integrate(&model, n, dt, spec.substeps, spec.p0, spec.dp0, scale, |i, f| {
                interpolate(&v, i, f)
            })?;
            (p, v)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let noisy = |mut x: Vec<f64>, std: f64, rng: &mut ChaCha8Rng| -> Result<Vec<f64>> {
        if std > 0.0 {
            let dist = Normal::new(0.0, std).map_err(|e| Error::parameter(e.to_string()))?;
            x.iter_mut().for_each(|xi| *xi += dist.sample(rng));
        }
        Ok(x)
    };
    let p = noisy(p, spec.noise_std_pressure, &mut rng)?;
    let v = noisy(v, spec.noise_std_velocity, &mut rng)?;
    let pressure = TimeSeries::new(p, dt, 0.0, "mmHg")?;
    let velocity = TimeSeries::new(v, dt, 0.0, "cm/s")?;
    SignalPair::new(pressure, velocity, "synthetic")
}
