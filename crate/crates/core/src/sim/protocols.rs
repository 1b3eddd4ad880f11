//! Split-half reproducibility and cycle-based forecasting.

use std::ops::Range;
use std::time::Instant;

use serde::Serialize;

use super::cycles::{detect_cycles, CycleConfig};
use super::simulate_against;
use crate::signal::SignalPair;
use crate::stls::{identify, FitConfig, SparseModel};
use crate::{Error, Result};

/// Coefficient of one term in the full and half fits.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermDeviation {
    pub term: String,
    pub full: f64,
    pub first: f64,
    pub second: f64,
    /// `|first − full| / |full|`; `None` when the full fit drops the term.
    pub first_deviation: Option<f64>,
    pub second_deviation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitHalfReport {
    pub full: SparseModel,
    pub first: SparseModel,
    pub second: SparseModel,
    pub first_range: Range<usize>,
    pub second_range: Range<usize>,
    pub terms: Vec<TermDeviation>,
    /// False when any fit came back empty; the maxima are then `None`.
    pub comparable: bool,
    /// Terms active in a half fit but not in the full fit.
    pub extra_terms: Vec<String>,
    pub max_first: Option<f64>,
    pub max_second: Option<f64>,
    pub max_overall: Option<f64>,
}

fn max_of(it: impl Iterator<Item = f64>) -> Option<f64> {
    it.fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
}

/// Fits the first half `[0, ⌈n/2⌉)`, the second half `[⌊n/2⌋, n)` and the whole
/// record independently and compares coefficients term by term.
pub fn split_half_reproducibility(pair: &SignalPair, config: &FitConfig) -> Result<SplitHalfReport> {
    let n = pair.len();
    if n < 6 {
        return Err(Error::input(format!("split-half needs at least 6 samples, got {n}")));
    }
    let first_range = 0..n.div_ceil(2);
    let second_range = n / 2..n;
    let full = identify(pair, config)?;
    let first = identify(&pair.slice(first_range.clone())?, config)?;
    let second = identify(&pair.slice(second_range.clone())?, config)?;

    let comparable = !(full.is_empty() || first.is_empty() || second.is_empty());
    let dev = |half: f64, full: f64| (full != 0.0).then(|| (half - full).abs() / full.abs());
    let names = full.terms().names();
    let terms: Vec<TermDeviation> = (0..names.len())
        .map(|j| {
            let (f, a, b) = (full.coefficients()[j], first.coefficients()[j], second.coefficients()[j]);
            TermDeviation {
                term: names[j].clone(),
                full: f,
                first: a,
                second: b,
                first_deviation: dev(a, f),
                second_deviation: dev(b, f),
            }
        })
        .collect();
    let extra_terms = terms
        .iter()
        .filter(|t| t.full == 0.0 && (t.first != 0.0 || t.second != 0.0))
        .map(|t| t.term.clone())
        .collect();
    let (max_first, max_second) = if comparable {
        (
            max_of(terms.iter().filter_map(|t| t.first_deviation)),
            max_of(terms.iter().filter_map(|t| t.second_deviation)),
        )
    } else {
        (None, None)
    };
    let max_overall = max_of(max_first.into_iter().chain(max_second));
    Ok(SplitHalfReport {
        full,
        first,
        second,
        first_range,
        second_range,
        terms,
        comparable,
        extra_terms,
        max_first,
        max_second,
        max_overall,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForecastReport {
    pub train_cycles: usize,
    pub rmse_test: f64,
    pub rmse_train: f64,
    /// Wall-clock time of the training fit.
    pub fit_seconds: f64,
    /// Detected peak indices; consecutive peaks delimit one cycle.
    pub cycle_boundaries: Vec<usize>,
    pub train_range: Range<usize>,
    pub test_range: Range<usize>,
    pub model: SparseModel,
}

/// Fits the first `train_cycles` cycles and simulates the last cycle from its
/// measured initial state. At least one whole cycle separates the two windows.
pub fn forecast(
    pair: &SignalPair,
    train_cycles: usize,
    config: &FitConfig,
    cycles: &CycleConfig,
) -> Result<ForecastReport> {
    if train_cycles == 0 {
        return Err(Error::parameter("train_cycles must be ≥ 1"));
    }
    let peaks = detect_cycles(pair.pressure(), cycles)?;
    let detected = peaks.len().saturating_sub(1);
    let required = train_cycles + 2;
    if detected < required {
        return Err(Error::TooFewCycles { detected, required });
    }
    let train_range = peaks[0]..peaks[train_cycles] + 1;
    let test_range = peaks[detected - 1]..peaks[detected] + 1;

    let train = pair.slice(train_range.clone())?;
    let start = Instant::now();
    let model = identify(&train, config)?;
    let fit_seconds = start.elapsed().as_secs_f64();

    let rmse_train = simulate_against(&model, &train)?.rmse;
    let rmse_test = simulate_against(&model, &pair.slice(test_range.clone())?)?.rmse;
    Ok(ForecastReport {
        train_cycles,
        rmse_test,
        rmse_train,
        fit_seconds,
        cycle_boundaries: peaks,
        train_range,
        test_range,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stls::LinearParams;
    use crate::synth::{generate, Forcing, GeneratorModel, GeneratorSpec};

    fn synthetic(duration_s: f64, dt: f64) -> SignalPair {
        let model = GeneratorModel::Linear(LinearParams::new(27.5, 455.0, 3.55e4).unwrap());
        generate(&GeneratorSpec::new(model, Forcing::cardiac_like(), duration_s, dt)).unwrap()
    }

    #[test]
    fn periodic_halves_agree() {
        // 1 ms sampling, four 0.8 s periods; each half holds two whole periods
        let pair = synthetic(3.2, 0.001);
        let r = split_half_reproducibility(&pair, &FitConfig::default()).unwrap();
        assert!(r.comparable);
        assert_eq!(r.full.active_count(), 3);
        assert_eq!((r.first_range.clone(), r.second_range.clone()), (0..1601, 1600..3201));
        let worst = r.max_overall.unwrap();
        assert!(worst < 1e-6, "deviation {worst}");
    }

    #[test]
    fn empty_fits_are_incomparable() {
        let pair = synthetic(3.2, 0.005);
        let config = FitConfig { eta: 1e9, ..FitConfig::default() };
        let r = split_half_reproducibility(&pair, &config).unwrap();
        assert!(!r.comparable);
        assert_eq!(r.max_overall, None);
    }

    #[test]
    fn forecast_is_stationary_on_noise_free_data() {
        let pair = synthetic(5.0, 0.005);
        let mut tests = Vec::new();
        for k in 1..=3 {
            let r = forecast(&pair, k, &FitConfig::default(), &CycleConfig::default()).unwrap();
            assert!(r.test_range.start >= r.train_range.end + 100, "gap of less than a cycle");
            assert_eq!(r.test_range.end, *r.cycle_boundaries.last().unwrap() + 1);
            assert!(r.rmse_test < 2.0 * r.rmse_train, "test {} train {}", r.rmse_test, r.rmse_train);
            tests.push(r.rmse_test);
        }
        let max = tests.iter().cloned().fold(f64::MIN, f64::max);
        let min = tests.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min < 1.5, "{tests:?}");
    }

    #[test]
    fn too_few_cycles() {
        let pair = synthetic(2.0, 0.005);
        match forecast(&pair, 3, &FitConfig::default(), &CycleConfig::default()).unwrap_err() {
            Error::TooFewCycles { detected, required } => {
                assert_eq!(required, 5);
                assert!(detected < 5);
            }
            e => panic!("unexpected {e:?}"),
        }
    }
}
