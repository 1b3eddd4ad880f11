//! Sequentially thresholded least squares (STLS) on a design matrix.
//!
//! Each pass solves ordinary least squares on the active columns and then
//! deactivates every coefficient whose magnitude is below the threshold η.
//! The loop stops at the first pass that deactivates nothing, so a fit over a
//! library of `k` terms performs at most `k + 1` solves.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::library::{build_design_matrix, default_library, DesignMatrix, LibrarySpec, TermSpec};
use crate::linalg;
use crate::signal::{differentiate, SignalPair};
use crate::{Error, Result};

/// Knobs that change how coefficients are compared against η.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StlsOptions {
    /// Never eliminate the pure forcing term `v`.
    #[serde(default)]
    pub exempt_forcing: bool,
    /// Threshold coefficients of unit-RMS columns instead of raw ones.
    #[serde(default)]
    pub normalize: bool,
}

/// Result of an STLS fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SparseModelRecord")]
pub struct SparseModel {
    terms: LibrarySpec,
    coefficients: Vec<f64>,
    threshold: f64,
    residual_norm: f64,
    iterations: usize,
    active_count: usize,
    /// Residual norm after each least-squares pass.
    residual_history: Vec<f64>,
    #[serde(default)]
    options: StlsOptions,
}

#[derive(Deserialize)]
struct SparseModelRecord {
    terms: LibrarySpec,
    coefficients: Vec<f64>,
    threshold: f64,
    #[serde(default)]
    residual_norm: f64,
    #[serde(default)]
    iterations: usize,
    #[serde(default)]
    residual_history: Vec<f64>,
    #[serde(default)]
    options: StlsOptions,
}

impl TryFrom<SparseModelRecord> for SparseModel {
    type Error = Error;

    fn try_from(r: SparseModelRecord) -> Result<Self> {
        let active: Vec<bool> = r.coefficients.iter().map(|&c| c != 0.0).collect();
        let mut m = SparseModel::from_parts(r.terms, r.coefficients, &active, r.threshold)?;
        m.residual_norm = r.residual_norm;
        m.iterations = r.iterations;
        m.residual_history = r.residual_history;
        m.options = r.options;
        Ok(m)
    }
}

impl SparseModel {
    /// Builds a model from explicit coefficients and an active mask, enforcing
    /// that active ⇔ nonzero and that every active magnitude clears the
    /// threshold.
    pub fn from_parts(
        terms: LibrarySpec,
        coefficients: Vec<f64>,
        active: &[bool],
        threshold: f64,
    ) -> Result<Self> {
        if coefficients.len() != terms.len() || active.len() != terms.len() {
            return Err(Error::input(format!(
                "{} coefficients / {} flags for {} terms",
                coefficients.len(),
                active.len(),
                terms.len()
            )));
        }
        if !(threshold.is_finite() && threshold >= 0.0) {
            return Err(Error::parameter(format!("threshold must be finite and ≥ 0, got {threshold}")));
        }
        for (j, (&c, &on)) in coefficients.iter().zip(active).enumerate() {
            let name = terms.terms()[j];
            if !c.is_finite() {
                return Err(Error::input(format!("coefficient of {name} is not finite")));
            }
            if on && c == 0.0 {
                return Err(Error::input(format!("term {name} is marked active with a zero coefficient")));
            }
            if !on && c != 0.0 {
                return Err(Error::input(format!("term {name} is inactive but has coefficient {c}")));
            }
            if on && c.abs() < threshold {
                return Err(Error::input(format!(
                    "active coefficient {c} of {name} is below the threshold {threshold}"
                )));
            }
        }
        let active_count = active.iter().filter(|&&a| a).count();
        Ok(Self {
            terms,
            coefficients,
            threshold,
            residual_norm: 0.0,
            iterations: 0,
            active_count,
            residual_history: Vec::new(),
            options: StlsOptions::default(),
        })
    }

    pub fn terms(&self) -> &LibrarySpec {
        &self.terms
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn residual_norm(&self) -> f64 {
        self.residual_norm
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn active_count(&self) -> usize {
        self.active_count
    }

    pub fn residual_history(&self) -> &[f64] {
        &self.residual_history
    }

    pub fn options(&self) -> StlsOptions {
        self.options
    }

    pub fn is_empty(&self) -> bool {
        self.active_count == 0
    }

    pub fn active_mask(&self) -> Vec<bool> {
        self.coefficients.iter().map(|&c| c != 0.0).collect()
    }

    pub fn active_terms(&self) -> Vec<TermSpec> {
        self.terms
            .terms()
            .iter()
            .zip(&self.coefficients)
            .filter(|(_, &c)| c != 0.0)
            .map(|(&t, _)| t)
            .collect()
    }

    /// Coefficient of `term`, zero when absent from the library.
    pub fn coefficient(&self, term: TermSpec) -> f64 {
        self.terms.position(term).map_or(0.0, |j| self.coefficients[j])
    }

    /// Right-hand side p̈ = Σⱼ Ξⱼ θⱼ(p, ṗ, v).
    pub fn acceleration(&self, p: f64, dp: f64, v: f64) -> f64 {
        self.terms
            .terms()
            .iter()
            .zip(&self.coefficients)
            .filter(|(_, &c)| c != 0.0)
            .map(|(t, c)| c * t.eval(p, dp, v))
            .sum()
    }
}

/// Parameters of `p̈ + a ṗ + b p = ε v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub a: f64,
    pub b: f64,
    pub epsilon: f64,
}

impl LinearParams {
    pub fn new(a: f64, b: f64, epsilon: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && epsilon.is_finite()) {
            return Err(Error::parameter("linear parameters must be finite"));
        }
        Ok(Self { a, b, epsilon })
    }

    /// Equivalent model over the linear library (coefficients −a, −b, ε).
    pub fn to_model(&self) -> SparseModel {
        let coefficients = vec![-self.a, -self.b, self.epsilon];
        let active: Vec<bool> = coefficients.iter().map(|&c| c != 0.0).collect();
        SparseModel::from_parts(crate::library::linear_library(), coefficients, &active, 0.0)
            .expect("finite coefficients with zero threshold are always valid")
    }

    pub fn report(&self, pressure_unit: &str, velocity_unit: &str) -> LinearParamsReport {
        LinearParamsReport {
            a: self.a,
            b: self.b,
            epsilon: self.epsilon,
            units: LinearParamUnits {
                a: "1/s".into(),
                b: "1/s^2".into(),
                epsilon: format!("({pressure_unit})/s^2 per ({velocity_unit})"),
            },
        }
    }
}

/// `LinearParams` with unit annotations, for export.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearParamsReport {
    pub a: f64,
    pub b: f64,
    pub epsilon: f64,
    pub units: LinearParamUnits,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearParamUnits {
    pub a: String,
    pub b: String,
    pub epsilon: String,
}

/// Least-squares coefficients over the full library (zeros off the active set).
#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquaresFit {
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
}

fn singular(theta: &DesignMatrix, idx: &[usize], dependent: &[usize]) -> Error {
    let names = theta.terms().names();
    Error::Singular {
        columns: dependent.iter().map(|&d| names[idx[d]].clone()).collect(),
    }
}

pub fn least_squares(theta: &DesignMatrix, active: &[bool]) -> Result<LeastSquaresFit> {
    solve_active(theta, active, None)
}

/// LS on the active columns, optionally pre-scaled column-wise.
fn solve_active(theta: &DesignMatrix, active: &[bool], scale: Option<&[f64]>) -> Result<LeastSquaresFit> {
    if active.len() != theta.n_terms() {
        return Err(Error::input(format!(
            "active mask has {} entries for {} terms",
            active.len(),
            theta.n_terms()
        )));
    }
    let idx: Vec<usize> = (0..active.len()).filter(|&j| active[j]).collect();
    if idx.is_empty() {
        return Err(Error::input("least squares needs a non-empty active set"));
    }
    let scaled: Vec<Vec<f64>>;
    let cols: Vec<&[f64]> = match scale {
        None => idx.iter().map(|&j| theta.column(j)).collect(),
        Some(s) => {
            scaled = idx
                .iter()
                .map(|&j| theta.column(j).iter().map(|x| x * s[j]).collect())
                .collect();
            scaled.iter().map(Vec::as_slice).collect()
        }
    };
    let sol = linalg::lstsq(&cols, theta.target()).map_err(|e| singular(theta, &idx, &e.dependent))?;
    let mut coefficients = vec![0.0; theta.n_terms()];
    for (&j, c) in idx.iter().zip(sol.coefficients) {
        coefficients[j] = c;
    }
    Ok(LeastSquaresFit {
        coefficients,
        residual_norm: sol.residual_norm,
    })
}

pub fn stls_fit(theta: &DesignMatrix, eta: f64) -> Result<SparseModel> {
    stls_fit_with(theta, eta, &StlsOptions::default(), None)
}

/// STLS starting from `initial_active` (all terms when `None`).
pub fn stls_fit_with(
    theta: &DesignMatrix,
    eta: f64,
    options: &StlsOptions,
    initial_active: Option<&[bool]>,
) -> Result<SparseModel> {
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::parameter(format!("threshold must be finite and ≥ 0, got {eta}")));
    }
    let k = theta.n_terms();
    let mut active = match initial_active {
        Some(a) if a.len() == k => a.to_vec(),
        Some(a) => {
            return Err(Error::input(format!("initial mask has {} entries for {k} terms", a.len())))
        }
        None => vec![true; k],
    };
    let exempt: Vec<bool> = theta
        .terms()
        .terms()
        .iter()
        .map(|t| options.exempt_forcing && t.is_forcing())
        .collect();
    // unit-RMS column scaling for normalized thresholding
    let scale: Option<Vec<f64>> = options.normalize.then(|| {
        let rows = theta.rows() as f64;
        theta
            .columns()
            .iter()
            .map(|c| {
                let rms = (c.iter().map(|x| x * x).sum::<f64>() / rows).sqrt();
                if rms > 0.0 {
                    1.0 / rms
                } else {
                    1.0
                }
            })
            .collect()
    });

    let mut history = Vec::new();
    let (mut coefficients, mut residual_norm);
    loop {
        if !active.iter().any(|&a| a) {
            coefficients = vec![0.0; k];
            residual_norm = norm(theta.target());
            break;
        }
        let fit = solve_active(theta, &active, scale.as_deref())?;
        history.push(fit.residual_norm);
        residual_norm = fit.residual_norm;
        let next: Vec<bool> = (0..k)
            .map(|j| active[j] && (exempt[j] || fit.coefficients[j].abs() >= eta))
            .collect();
        coefficients = match &scale {
            Some(s) => fit.coefficients.iter().zip(s).map(|(c, s)| c * s).collect(),
            None => fit.coefficients,
        };
        if next == active {
            break;
        }
        active = next;
    }
    let active_count = coefficients.iter().filter(|&&c| c != 0.0).count();
    Ok(SparseModel {
        terms: theta.terms().clone(),
        coefficients,
        threshold: eta,
        residual_norm,
        iterations: history.len(),
        active_count,
        residual_history: history,
        options: *options,
    })
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// One fit per threshold, in input order. Fits run in parallel.
pub fn threshold_sweep(theta: &DesignMatrix, etas: &[f64]) -> Result<Vec<SparseModel>> {
    threshold_sweep_with(theta, etas, &StlsOptions::default())
}

pub fn threshold_sweep_with(
    theta: &DesignMatrix,
    etas: &[f64],
    options: &StlsOptions,
) -> Result<Vec<SparseModel>> {
    if etas.is_empty() {
        return Err(Error::parameter("threshold sweep needs at least one η"));
    }
    etas.par_iter()
        .map(|&eta| stls_fit_with(theta, eta, options, None))
        .collect()
}

/// Reads `(a, b, ε)` off a model whose active set is exactly `{ṗ, p, v}`.
pub fn extract_linear(model: &SparseModel) -> Result<LinearParams> {
    let mut active = model.active_terms();
    active.sort_by_key(|t| <[u32; 3]>::from(*t));
    let mut expected = vec![TermSpec::DP, TermSpec::P, TermSpec::V];
    expected.sort_by_key(|t| <[u32; 3]>::from(*t));
    if active != expected {
        return Err(Error::NotLinear {
            active: model.active_terms().iter().map(ToString::to_string).collect(),
        });
    }
    LinearParams::new(
        -model.coefficient(TermSpec::DP),
        -model.coefficient(TermSpec::P),
        model.coefficient(TermSpec::V),
    )
}

/// Wall-clock statistics of repeated fits.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub runs: usize,
    pub iterations: usize,
    pub terms: usize,
    pub per_run_seconds: Vec<f64>,
    pub mean_seconds: f64,
    pub std_seconds: f64,
    pub median_seconds: f64,
    pub active_count: usize,
}

/// Times `runs` batches of `iterations` full `stls_fit` calls each.
pub fn bench_fit(theta: &DesignMatrix, eta: f64, runs: usize, iterations: usize) -> Result<BenchReport> {
    if runs == 0 || iterations == 0 {
        return Err(Error::parameter("bench needs runs ≥ 1 and iterations ≥ 1"));
    }
    let reference = stls_fit(theta, eta)?;
    let mut per_run = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        let mut last = None;
        for _ in 0..iterations {
            last = Some(std::hint::black_box(stls_fit(std::hint::black_box(theta), eta)?));
        }
        per_run.push(start.elapsed().as_secs_f64());
        if last.as_ref() != Some(&reference) {
            return Err(Error::input("repeated fits disagree; the fit is not deterministic"));
        }
    }
    let mean = per_run.iter().sum::<f64>() / runs as f64;
    let std = if runs > 1 {
        (per_run.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (runs - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = per_run.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if runs % 2 == 1 {
        sorted[runs / 2]
    } else {
        0.5 * (sorted[runs / 2 - 1] + sorted[runs / 2])
    };
    Ok(BenchReport {
        runs,
        iterations,
        terms: theta.n_terms(),
        per_run_seconds: per_run,
        mean_seconds: mean,
        std_seconds: std,
        median_seconds: median,
        active_count: reference.active_count,
    })
}

/// Everything needed to go from a signal pair to a sparse model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub library: LibrarySpec,
    pub eta: f64,
    #[serde(default)]
    pub options: StlsOptions,
    /// Rows dropped from each end of Θ before fitting. The first and last two
    /// rows of the chained second derivative rest on one-sided differences.
    pub boundary_trim: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            library: default_library(),
            eta: 5.0,
            options: StlsOptions::default(),
            boundary_trim: 2,
        }
    }
}

impl FitConfig {
    pub fn with_library(library: LibrarySpec, eta: f64) -> Self {
        Self {
            library,
            eta,
            ..Self::default()
        }
    }

    pub fn design(&self, pair: &SignalPair) -> Result<DesignMatrix> {
        let derivs = differentiate(pair.pressure())?;
        build_design_matrix(pair, &derivs, &self.library)?.trim_rows(self.boundary_trim)
    }
}

/// Differentiate, build Θ, trim and run STLS.
pub fn identify(pair: &SignalPair, config: &FitConfig) -> Result<SparseModel> {
    stls_fit_with(&config.design(pair)?, config.eta, &config.options, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::linear_library;
    use proptest::prelude::*;

    fn theta(cols: Vec<Vec<f64>>, target: Vec<f64>) -> DesignMatrix {
        let terms = match cols.len() {
            3 => linear_library(),
            2 => LibrarySpec::new(vec![TermSpec::CONSTANT, TermSpec::P]).unwrap(),
            k => crate::library::LibrarySpec::new(
                (0..k as u32).map(|i| TermSpec::new(i + 1, 0, 0).unwrap()).collect(),
            )
            .unwrap(),
        };
        DesignMatrix::from_columns(cols, terms, target).unwrap()
    }

    #[test]
    fn identity_design_returns_target() {
        let t = theta(
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![2.0, -7.0, 0.5],
        );
        let fit = least_squares(&t, &[true; 3]).unwrap();
        assert_eq!(fit.coefficients, vec![2.0, -7.0, 0.5]);
    }

    #[test]
    fn exact_line() {
        let t = theta(vec![vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]], vec![1.0, 2.0, 3.0]);
        let fit = least_squares(&t, &[true, true]).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-14);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-14);
        assert!(fit.residual_norm < 1e-14);
    }

    #[test]
    fn orthogonal_target_and_inactive_zero() {
        let t = theta(
            vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0, 0.0]],
            vec![0.0, 0.0, 3.0, 4.0],
        );
        let fit = least_squares(&t, &[true, true, false]).unwrap();
        assert_eq!(fit.coefficients, vec![0.0, 0.0, 0.0]);
        assert!((fit.residual_norm - 5.0).abs() < 1e-14);
        assert!(least_squares(&t, &[false; 3]).is_err());
    }

    #[test]
    fn singular_columns_named() {
        let t = theta(
            vec![vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 4.0, 6.0, 8.0], vec![1.0, 0.0, 1.0, 0.0]],
            vec![1.0, 2.0, 3.0, 4.0],
        );
        match least_squares(&t, &[true; 3]).unwrap_err() {
            Error::Singular { columns } => assert_eq!(columns, vec!["p".to_string()]),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn zero_threshold_is_plain_least_squares() {
        let t = theta(
            vec![vec![1.0, 2.0, 0.5, -1.0], vec![0.3, -0.2, 1.0, 2.0], vec![1.0, 1.0, 1.0, 1.5]],
            vec![1.0, 0.0, -2.0, 4.0],
        );
        let m = stls_fit(&t, 0.0).unwrap();
        let ls = least_squares(&t, &[true; 3]).unwrap();
        assert_eq!(m.coefficients(), ls.coefficients.as_slice());
        assert_eq!(m.iterations(), 1);
        assert_eq!(m.active_count(), 3);
    }

    #[test]
    fn everything_eliminated_gives_empty_model() {
        let t = theta(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]], vec![0.1, 0.2, 0.3]);
        let m = stls_fit(&t, 1.0).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.active_count(), 0);
        assert!((m.residual_norm() - (0.14f64).sqrt()).abs() < 1e-14);
        assert!(extract_linear(&m).is_err());
    }

    #[test]
    fn forcing_exemption() {
        let t = theta(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]], vec![5.0, 6.0, 0.3]);
        let plain = stls_fit(&t, 1.0).unwrap();
        assert_eq!(plain.coefficients(), &[5.0, 6.0, 0.0]);
        let opts = StlsOptions { exempt_forcing: true, normalize: false };
        let kept = stls_fit_with(&t, 1.0, &opts, None).unwrap();
        assert_eq!(kept.coefficients(), &[5.0, 6.0, 0.3]);
    }

    #[test]
    fn normalized_thresholding_uses_column_scale() {
        // coefficient 0.5 on a column of size 100 is significant once normalized
        let c0: Vec<f64> = (0..8).map(|i| 100.0 * ((i % 2) as f64 * 2.0 - 1.0)).collect();
        let c1: Vec<f64> = (0..8).map(|i| if i < 4 { 1.0 } else { -1.0 }).collect();
        let c2: Vec<f64> = (0..8).map(|i| if i % 4 < 2 { 1.0 } else { -1.0 }).collect();
        let y: Vec<f64> = (0..8).map(|i| 0.5 * c0[i] + 2.0 * c1[i]).collect();
        let t = theta(vec![c0, c1, c2], y);
        let raw = stls_fit(&t, 1.0).unwrap();
        assert_eq!(raw.coefficient(TermSpec::DP), 0.0);
        let opts = StlsOptions { exempt_forcing: false, normalize: true };
        let norm = stls_fit_with(&t, 1.0, &opts, None).unwrap();
        assert!((norm.coefficient(TermSpec::DP) - 0.5).abs() < 1e-12);
        assert!((norm.coefficient(TermSpec::P) - 2.0).abs() < 1e-12);
        assert_eq!(norm.coefficient(TermSpec::V), 0.0);
    }

    #[test]
    fn linear_extraction() {
        let m = SparseModel::from_parts(
            linear_library(),
            vec![-27.5, -455.0, 3.55e4],
            &[true; 3],
            5.0,
        )
        .unwrap();
        let lp = extract_linear(&m).unwrap();
        assert_eq!((lp.a, lp.b, lp.epsilon), (27.5, 455.0, 3.55e4));

        let partial =
            SparseModel::from_parts(linear_library(), vec![-27.5, -455.0, 0.0], &[true, true, false], 5.0).unwrap();
        match extract_linear(&partial).unwrap_err() {
            Error::NotLinear { active } => assert_eq!(active, vec!["dp", "p"]),
            e => panic!("unexpected {e:?}"),
        }
        assert!(SparseModel::from_parts(linear_library(), vec![0.0, -455.0, 3.55e4], &[true; 3], 5.0).is_err());
        assert!(SparseModel::from_parts(linear_library(), vec![-1.0, -455.0, 3.55e4], &[true; 3], 5.0).is_err());
    }

    #[test]
    fn model_json_round_trip_and_validation() {
        let m = LinearParams::new(27.5, 455.0, 3.55e4).unwrap().to_model();
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"terms\":[[0,1,0],[1,0,0],[0,0,1]]"));
        let back: SparseModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        let bad = r#"{"terms":[[0,1,0]],"coefficients":[0.5],"threshold":1.0}"#;
        assert!(serde_json::from_str::<SparseModel>(bad).is_err());
    }

    #[test]
    fn bench_single_sample() {
        let t = theta(vec![vec![1.0, 2.0, 0.5, -1.0], vec![0.3, -0.2, 1.0, 2.0], vec![1.0, 1.0, 1.0, 1.5]], vec![1.0, 0.0, -2.0, 4.0]);
        let r = bench_fit(&t, 0.1, 1, 1).unwrap();
        assert_eq!(r.per_run_seconds.len(), 1);
        assert_eq!(r.std_seconds, 0.0);
        assert!(bench_fit(&t, 0.1, 0, 1).is_err());
        let r = bench_fit(&t, 0.1, 7, 3).unwrap();
        assert_eq!(r.per_run_seconds.len(), 7);
    }

    #[test]
    fn sweep_preserves_order() {
        let t = theta(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]], vec![0.5, 2.0, 8.0]);
        let ms = threshold_sweep(&t, &[0.0, 1.0, 5.0, 10.0]).unwrap();
        let counts: Vec<usize> = ms.iter().map(|m| m.active_count()).collect();
        assert_eq!(counts, vec![3, 2, 1, 0]);
        assert_eq!(ms[2].threshold(), 5.0);
        assert!(threshold_sweep(&t, &[]).is_err());
        assert!(threshold_sweep(&t, &[-1.0]).is_err());
    }
    fn random_theta(seed: u64, n: usize, k: usize, sparse_truth: bool) -> DesignMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let truth: Vec<f64> = (0..k)
            .map(|j| if sparse_truth && j % 2 == 1 { 0.0 } else { rng.random_range(2.0..8.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 } })
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let clean: f64 = (0..k).map(|j| cols[j][i] * truth[j]).sum();
                if sparse_truth { clean } else { clean + rng.random_range(-4.0..4.0) }
            })
            .collect();
        theta(cols, y)
    }

    /// Lowest residual over every subset whose least-squares coefficients all clear η.
    fn best_subset(t: &DesignMatrix, eta: f64) -> f64 {
        let k = t.n_terms();
        let mut best = norm(t.target());
        for mask in 1u32..(1 << k) {
            let active: Vec<bool> = (0..k).map(|j| mask & (1 << j) != 0).collect();
            let fit = least_squares(t, &active).unwrap();
            if (0..k).filter(|&j| active[j]).all(|j| fit.coefficients[j].abs() >= eta) {
                best = best.min(fit.residual_norm);
            }
        }
        best
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn fit_invariants(seed in any::<u64>(), n in 20usize..50, k in 3usize..7, eta in 0.0f64..6.0) {
            let t = random_theta(seed, n, k, false);
            let m = stls_fit(&t, eta).unwrap();
            let nonzero = m.coefficients().iter().filter(|&&c| c != 0.0).count();
            prop_assert_eq!(m.active_count(), nonzero);
            prop_assert!(m.coefficients().iter().all(|&c| c == 0.0 || c.abs() >= eta));
            prop_assert!(m.iterations() <= k);
            // residual never decreases as terms are dropped
            for w in m.residual_history().windows(2) {
                prop_assert!(w[1] >= w[0] * (1.0 - 1e-12));
            }
            // fixed point
            let again = stls_fit_with(&t, eta, &StlsOptions::default(), Some(&m.active_mask())).unwrap();
            if !m.is_empty() {
                prop_assert_eq!(again.coefficients(), m.coefficients());
            }
            // never beats the exhaustive oracle
            prop_assert!(m.residual_norm() >= best_subset(&t, eta) * (1.0 - 1e-12));
        }

        #[test]
        fn noise_free_sparse_truth_matches_oracle(seed in any::<u64>(), n in 20usize..50, k in 3usize..7) {
            let t = random_theta(seed, n, k, true);
            let m = stls_fit(&t, 1.0).unwrap();
            for j in 0..k {
                prop_assert_eq!(m.coefficients()[j] != 0.0, j % 2 == 0);
            }
            let oracle = best_subset(&t, 1.0);
            prop_assert!((m.residual_norm() - oracle).abs() <= 1e-9 * norm(t.target()));
        }
    }
}
