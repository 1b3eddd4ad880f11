//! Command implementations. Each one resolves and validates its settings,
//! computes everything in memory, and hands back the files to write.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{at_least, non_negative, pick, positive, required, switch, ConfigFile, Cutoff};
use super::output::Outputs;
use super::{
    BenchArgs, ClassifyArgs, Command, CycleArgs, DampingArgs, FitArgs, ForecastArgs, ModelArgs, SignalArgs,
    SimulateArgs, SplitHalfArgs, SynthArgs,
};
use crate::classify::{
    decision_regions, evaluate_partitions, parse_features_csv, permute_labels, reference_rows, train,
    ClassifierModel, FeatureVector, GridSpec, Objective, PartitionOptions, PartitionReport, Plane, TrainOptions,
    N_CLASSES,
};
use crate::library::{default_library, linear_library, LibrarySpec};
use crate::signal::{lowpass_filter, parse_pair_csv, read_units, subtract_mean, write_pair_csv, SignalPair, Units};
use crate::sim::{
    classify_damping, detect_cycles, forecast, phase_portrait_with, simulate_against_with, split_half_reproducibility,
    CycleConfig, DampingCriterion, LoopOrientation, Regime, SplitHalfReport, DEFAULT_SUBSTEPS,
};
use crate::stls::{
    bench_fit, extract_linear, threshold_sweep_with, BenchReport, FitConfig, LinearParams, LinearParamsReport, SparseModel,
    StlsOptions,
};
use crate::synth::{generate, Forcing, GeneratorModel, GeneratorSpec};
use crate::{Error, Result};

/// Outputs of a finished command, not yet written.
pub(super) struct Run {
    outputs: Outputs,
    dir: PathBuf,
    summary: String,
}

/// Runs the command, writes its files and returns the report for stdout.
pub(super) fn dispatch(command: Command, cfg: &ConfigFile) -> Result<String> {
    let run = match command {
        Command::Fit(a) => fit(a, cfg)?,
        Command::Simulate(a) => simulate(a, cfg)?,
        Command::Forecast(a) => forecast_cmd(a, cfg)?,
        Command::SplitHalf(a) => split_half(a, cfg)?,
        Command::Classify(a) => classify(a, cfg)?,
        Command::Synth(a) => synth(a, cfg)?,
        Command::Bench(a) => bench(a, cfg)?,
        Command::Damping(a) => damping(a, cfg)?,
    };
    let names: Vec<String> = run.outputs.file_names().iter().map(|s| s.to_string()).collect();
    run.outputs.commit(&run.dir)?;
    let mut report = run.summary;
    let _ = writeln!(report, "wrote {} and manifest.json to {}", names.join(", "), run.dir.display());
    Ok(report)
}

fn out_dir(flag: Option<PathBuf>, cfg: &ConfigFile) -> Result<PathBuf> {
    required(pick(flag, &cfg.out), "out")
}

// ---- shared settings ------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
struct SignalSettings {
    input: PathBuf,
    units: Option<PathBuf>,
    cutoff_hz: Cutoff,
    subtract_mean: bool,
}

fn signal_settings(a: SignalArgs, cfg: &ConfigFile) -> Result<SignalSettings> {
    let input = pick(a.input, &cfg.input)
        .ok_or_else(|| Error::parameter("an input CSV is required (positional argument or config key \"input\")"))?;
    let cutoff_hz = required(pick(a.cutoff_hz, &cfg.cutoff_hz), "cutoff-hz")?;
    Ok(SignalSettings {
        input,
        units: pick(a.units, &cfg.units),
        cutoff_hz,
        subtract_mean: !a.no_subtract_mean && cfg.subtract_mean.unwrap_or(true),
    })
}

/// Reads, mean-subtracts and low-pass filters both channels.
fn load_pair(s: &SignalSettings, out: &mut Outputs) -> Result<SignalPair> {
    let units = read_units(&s.input, s.units.as_deref())?;
    let text = out.read_input_text(&s.input)?;
    let subject = s.input.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default();
    let mut pair = parse_pair_csv(&text, &units, &subject)?;
    if s.subtract_mean {
        pair = pair.map_channels(|c| Ok(subtract_mean(c)))?;
    }
    if let Cutoff::Hz(hz) = s.cutoff_hz {
        pair = pair.map_channels(|c| lowpass_filter(c, hz))?;
    }
    Ok(pair)
}

#[derive(Clone, Debug, Serialize)]
struct ModelSettings {
    library: String,
    terms: LibrarySpec,
    boundary_trim: usize,
    exempt_forcing: bool,
    normalize: bool,
}

impl ModelSettings {
    fn fit_config(&self, eta: f64) -> FitConfig {
        FitConfig {
            library: self.terms.clone(),
            eta,
            options: self.options(),
            boundary_trim: self.boundary_trim,
        }
    }

    fn options(&self) -> StlsOptions {
        StlsOptions {
            exempt_forcing: self.exempt_forcing,
            normalize: self.normalize,
        }
    }
}

fn resolve_library(name: &str) -> Result<LibrarySpec> {
    match name {
        "eq2" | "default" => Ok(default_library()),
        "linear" => Ok(linear_library()),
        path => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            LibrarySpec::from_json(&text)
        }
    }
}

fn model_settings(a: &ModelArgs, cfg: &ConfigFile) -> Result<ModelSettings> {
    let library = pick(a.library.clone(), &cfg.library).unwrap_or_else(|| "eq2".into());
    Ok(ModelSettings {
        terms: resolve_library(&library)?,
        library,
        boundary_trim: pick(a.boundary_trim, &cfg.boundary_trim).unwrap_or(FitConfig::default().boundary_trim),
        exempt_forcing: switch(a.exempt_forcing, cfg.exempt_forcing),
        normalize: switch(a.normalize, cfg.normalize),
    })
}

fn single_eta(flag: Option<f64>, cfg: &ConfigFile) -> Result<f64> {
    non_negative(pick(flag, &cfg.eta).unwrap_or(FitConfig::default().eta), "eta")
}

fn cycle_config(a: &CycleArgs, cfg: &ConfigFile) -> Result<CycleConfig> {
    let d = CycleConfig::default();
    let c = CycleConfig {
        min_separation_s: pick(a.min_separation_s, &cfg.min_separation_s).unwrap_or(d.min_separation_s),
        smoothing_s: pick(a.smoothing_s, &cfg.smoothing_s).unwrap_or(d.smoothing_s),
        relative_height: pick(a.relative_height, &cfg.relative_height).unwrap_or(d.relative_height),
    };
    c.validate()?;
    Ok(c)
}

fn substeps(flag: Option<usize>, cfg: &ConfigFile) -> Result<usize> {
    at_least(pick(flag, &cfg.substeps).unwrap_or(DEFAULT_SUBSTEPS), 1, "substeps")
}

fn term_names(model: &SparseModel) -> Vec<String> {
    model.active_terms().iter().map(ToString::to_string).collect()
}

fn linear_of(model: &SparseModel) -> Option<LinearParams> {
    extract_linear(model).ok()
}

// ---- fit ------------------------------------------------------------------

#[derive(Serialize)]
struct FitSettings {
    signal: SignalSettings,
    model: ModelSettings,
    etas: Vec<f64>,
    substeps: usize,
    phase: bool,
}

#[derive(Serialize)]
struct SimulationSummary {
    substeps: usize,
    rmse: Option<f64>,
    /// RMSE over the largest absolute measured pressure.
    relative_rmse: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct Diagnostics {
    rows: usize,
    target_norm: f64,
    residual_norm: f64,
    relative_residual: f64,
    iterations: usize,
    residual_history: Vec<f64>,
    simulation: SimulationSummary,
}

#[derive(Serialize)]
struct ModelFile<'a> {
    eta: f64,
    subject: &'a str,
    active_terms: Vec<String>,
    model: &'a SparseModel,
    linear: Option<LinearParamsReport>,
    diagnostics: Diagnostics,
    loops: Option<Vec<LoopOrientation>>,
}

#[derive(Serialize)]
struct SweepRow {
    eta: f64,
    file: String,
    active_count: usize,
    active_terms: Vec<String>,
    residual_norm: f64,
    relative_residual: f64,
    iterations: usize,
    rmse: Option<f64>,
    linear: Option<LinearParams>,
}

#[derive(Serialize)]
struct FitSummary<'a> {
    config: &'a serde_json::Value,
    subject: &'a str,
    samples: usize,
    dt: f64,
    rows: Vec<SweepRow>,
}

fn resolve_etas(args: &FitArgs, cfg: &ConfigFile) -> Result<Vec<f64>> {
    let etas = match (args.model.eta, &args.etas) {
        (Some(e), _) => vec![e],
        (None, Some(v)) => v.clone(),
        (None, None) => match (&cfg.etas, cfg.eta) {
            (Some(_), Some(_)) => return Err(Error::parameter("config sets both \"eta\" and \"etas\"")),
            (Some(v), None) => v.clone(),
            (None, Some(e)) => vec![e],
            (None, None) => vec![FitConfig::default().eta],
        },
    };
    if etas.is_empty() {
        return Err(Error::parameter("--etas needs at least one value"));
    }
    for (i, &e) in etas.iter().enumerate() {
        non_negative(e, "etas")?;
        if etas[..i].contains(&e) {
            return Err(Error::parameter(format!("threshold {e} is listed twice")));
        }
    }
    Ok(etas)
}

fn fit(args: FitArgs, cfg: &ConfigFile) -> Result<Run> {
    let dir = out_dir(args.out.out.clone(), cfg)?;
    let etas = resolve_etas(&args, cfg)?;
    let settings = FitSettings {
        model: model_settings(&args.model, cfg)?,
        etas,
        substeps: substeps(args.substeps, cfg)?,
        phase: switch(args.phase, cfg.phase),
        signal: signal_settings(args.signal, cfg)?,
    };
    let mut out = Outputs::new("fit", &settings)?;
    let pair = load_pair(&settings.signal, &mut out)?;
    let theta = settings.model.fit_config(0.0).design(&pair)?;
    let target_norm = theta.target().iter().map(|v| v * v).sum::<f64>().sqrt();
    let models = threshold_sweep_with(&theta, &settings.etas, &settings.model.options())?;

    let amplitude = pair.pressure().amplitude();
    let peaks = if settings.phase {
        detect_cycles(pair.pressure(), &CycleConfig::default())?
    } else {
        Vec::new()
    };
    let mut rows = Vec::new();
    let mut summary = String::from("eta        active  rel.residual  rmse          terms\n");
    for (&eta, model) in settings.etas.iter().zip(&models) {
        let (simulation, portrait) = match simulate_against_with(model, &pair, settings.substeps) {
            Ok(sim) => {
                let portrait = if settings.phase {
                    Some(phase_portrait_with(&pair, &sim.simulated_pressure, &peaks)?)
                } else {
                    None
                };
                let s = SimulationSummary {
                    substeps: settings.substeps,
                    rmse: Some(sim.rmse),
                    relative_rmse: (amplitude > 0.0).then(|| sim.rmse / amplitude),
                    error: None,
                };
                (s, portrait)
            }
            Err(e @ Error::Divergence { .. }) => (
                SimulationSummary {
                    substeps: settings.substeps,
                    rmse: None,
                    relative_rmse: None,
                    error: Some(e.to_string()),
                },
                None,
            ),
            Err(e) => return Err(e),
        };
        let relative_residual = if target_norm > 0.0 { model.residual_norm() / target_norm } else { 0.0 };
        let linear = linear_of(model);
        let file = format!("model_eta_{eta}.json");
        let rmse = simulation.rmse;
        let body = ModelFile {
            eta,
            subject: &pair.subject_id,
            active_terms: term_names(model),
            model,
            linear: linear.map(|l| l.report(pair.pressure().unit(), pair.velocity().unit())),
            diagnostics: Diagnostics {
                rows: theta.rows(),
                target_norm,
                residual_norm: model.residual_norm(),
                relative_residual,
                iterations: model.iterations(),
                residual_history: model.residual_history().to_vec(),
                simulation,
            },
            loops: portrait.as_ref().map(|p| p.cycles.clone()),
        };
        out.json(&file, &body)?;
        if let Some(p) = &portrait {
            out.text(&format!("phase_eta_{eta}.csv"), |w| p.write_csv(w))?;
        }
        let _ = writeln!(
            summary,
            "{:<10} {:<7} {:<13.6e} {:<13} {}",
            eta,
            model.active_count(),
            relative_residual,
            rmse.map_or("diverged".into(), |r| format!("{r:.6e}")),
            term_names(model).join(" ")
        );
        rows.push(SweepRow {
            eta,
            file,
            active_count: model.active_count(),
            active_terms: term_names(model),
            residual_norm: model.residual_norm(),
            relative_residual,
            iterations: model.iterations(),
            rmse,
            linear,
        });
    }
    let config = out.config().clone();
    out.json(
        "fit_summary.json",
        &FitSummary {
            config: &config,
            subject: &pair.subject_id,
            samples: pair.len(),
            dt: pair.dt(),
            rows,
        },
    )?;
    Ok(Run { outputs: out, dir, summary })
}

// ---- simulate -------------------------------------------------------------

#[derive(Serialize)]
struct SimulateSettings {
    signal: SignalSettings,
    model: PathBuf,
    substeps: usize,
    cycles: CycleConfig,
}

#[derive(Serialize)]
struct SimulationFile<'a> {
    subject: &'a str,
    model: &'a SparseModel,
    rmse: f64,
    relative_rmse: Option<f64>,
    loops: Vec<LoopOrientation>,
}

fn read_model(path: &Path, out: &mut Outputs) -> Result<SparseModel> {
    model_from_json(&out.read_input_text(path)?, path)
}

/// A bare model object, or any document with a `model` field holding one.
fn model_from_json(text: &str, path: &Path) -> Result<SparseModel> {
    let mut value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    if let Some(inner) = value.get_mut("model") {
        value = inner.take();
    }
    serde_json::from_value(value).map_err(|e| Error::input(format!("{}: not a model: {e}", path.display())))
}

fn simulate(args: SimulateArgs, cfg: &ConfigFile) -> Result<Run> {
    let dir = out_dir(args.out.out.clone(), cfg)?;
    let settings = SimulateSettings {
        model: required(pick(args.model, &cfg.model), "model")?,
        substeps: substeps(args.substeps, cfg)?,
        cycles: cycle_config(&args.cycles, cfg)?,
        signal: signal_settings(args.signal, cfg)?,
    };
    let mut out = Outputs::new("simulate", &settings)?;
    let model = read_model(&settings.model, &mut out)?;
    let pair = load_pair(&settings.signal, &mut out)?;
    let sim = simulate_against_with(&model, &pair, settings.substeps)?;
    let peaks = detect_cycles(pair.pressure(), &settings.cycles)?;
    let portrait = phase_portrait_with(&pair, &sim.simulated_pressure, &peaks)?;
    let amplitude = pair.pressure().amplitude();
    let relative_rmse = (amplitude > 0.0).then(|| sim.rmse / amplitude);
    out.json(
        "simulation.json",
        &SimulationFile {
            subject: &pair.subject_id,
            model: &model,
            rmse: sim.rmse,
            relative_rmse,
            loops: portrait.cycles.clone(),
        },
    )?;
    out.text("phase.csv", |w| portrait.write_csv(w))?;
    let summary = format!("rmse {:.6e} over {} samples, {} loops\n", sim.rmse, pair.len(), portrait.cycles.len());
    Ok(Run { outputs: out, dir, summary })
}

// ---- forecast -------------------------------------------------------------

#[derive(Serialize)]
struct ForecastSettings {
    signal: SignalSettings,
    model: ModelSettings,
    eta: f64,
    cycles: CycleConfig,
    train_cycles: Vec<usize>,
}

#[derive(Serialize)]
struct ForecastRow {
    train_cycles: usize,
    rmse_train: f64,
    rmse_test: f64,
    train_range: Range<usize>,
    test_range: Range<usize>,
    active_terms: Vec<String>,
    linear: Option<LinearParams>,
    model: SparseModel,
}

#[derive(Serialize)]
struct ForecastFile<'a> {
    subject: &'a str,
    cycle_boundaries: Vec<usize>,
    rows: Vec<ForecastRow>,
}

#[derive(Serialize)]
struct TimingRow {
    train_cycles: usize,
    fit_seconds: f64,
}

#[derive(Serialize)]
struct TimingFile {
    rows: Vec<TimingRow>,
}

fn forecast_cmd(args: ForecastArgs, cfg: &ConfigFile) -> Result<Run> {
    let dir = out_dir(args.out.out.clone(), cfg)?;
    let train_cycles = pick(args.train_cycles, &cfg.train_cycles).unwrap_or_else(|| vec![1, 2, 3]);
    if train_cycles.is_empty() {
        return Err(Error::parameter("--train-cycles needs at least one value"));
    }
    for &k in &train_cycles {
        at_least(k, 1, "train-cycles")?;
    }
    let settings = ForecastSettings {
        model: model_settings(&args.model, cfg)?,
        eta: single_eta(args.model.eta, cfg)?,
        cycles: cycle_config(&args.cycles, cfg)?,
        train_cycles,
        signal: signal_settings(args.signal, cfg)?,
    };
    let mut out = Outputs::new("forecast", &settings)?;
    let pair = load_pair(&settings.signal, &mut out)?;
    let fit_config = settings.model.fit_config(settings.eta);

    let mut rows = Vec::new();
    let mut timing = Vec::new();
    let mut boundaries = Vec::new();
    let mut summary = String::from("train_cycles  rmse_train    rmse_test     terms\n");
    for &k in &settings.train_cycles {
        let r = forecast(&pair, k, &fit_config, &settings.cycles)?;
        let _ = writeln!(
            summary,
            "{:<13} {:<13.6e} {:<13.6e} {}",
            k,
            r.rmse_train,
            r.rmse_test,
            term_names(&r.model).join(" ")
        );
        boundaries = r.cycle_boundaries;
        timing.push(TimingRow { train_cycles: k, fit_seconds: r.fit_seconds });
        rows.push(ForecastRow {
            train_cycles: k,
            rmse_train: r.rmse_train,
            rmse_test: r.rmse_test,
            train_range: r.train_range,
            test_range: r.test_range,
            active_terms: term_names(&r.model),
            linear: linear_of(&r.model),
            model: r.model,
        });
    }
    out.json(
        "forecast.json",
        &ForecastFile {
            subject: &pair.subject_id,
            cycle_boundaries: boundaries,
            rows,
        },
    )?;
    // wall-clock times are kept apart so forecast.json stays reproducible
    out.json("forecast_timing.json", &TimingFile { rows: timing })?;
    Ok(Run { outputs: out, dir, summary })
}

// ---- split-half -----------------------------------------------------------

#[derive(Serialize)]
struct SplitHalfSettings {
    signal: SignalSettings,
    model: ModelSettings,
    eta: f64,
}

#[derive(Serialize)]
struct SplitHalfFile<'a> {
    subject: &'a str,
    report: &'a SplitHalfReport,
}

fn split_half(args: SplitHalfArgs, cfg: &ConfigFile) -> Result<Run> {
    let dir = out_dir(args.out.out.clone(), cfg)?;
    let settings = SplitHalfSettings {
        model: model_settings(&args.model, cfg)?,
        eta: single_eta(args.model.eta, cfg)?,
        signal: signal_settings(args.signal, cfg)?,
    };
    let mut out = Outputs::new("split-half", &settings)?;
    let pair = load_pair(&settings.signal, &mut out)?;
    let report = split_half_reproducibility(&pair, &settings.model.fit_config(settings.eta))?;
    let mut summary = String::from("term        full          first dev.    second dev.\n");
    for t in report.terms.iter().filter(|t| t.full != 0.0) {
        let dev = |d: Option<f64>| d.map_or("-".to_string(), |d| format!("{d:.3e}"));
        let _ = writeln!(
            summary,
            "{:<11} {:<13.6e} {:<13} {}",
            t.term,
            t.full,
            dev(t.first_deviation),
            dev(t.second_deviation)
        );
    }
    match report.max_overall {
        Some(m) if report.comparable => {
            let _ = writeln!(summary, "max relative deviation {m:.3e}");
        }
        _ => summary.push_str("not comparable: a fit came back empty\n"),
    }
    if !report.extra_terms.is_empty() {
        let _ = writeln!(summary, "terms only in a half fit: {}", report.extra_terms.join(" "));
    }
    out.json("split_half.json", &SplitHalfFile { subject: &pair.subject_id, report: &report })?;
    Ok(Run { outputs: out, dir, summary })
}

// ---- classify -------------------------------------------------------------

#[derive(Serialize)]
struct ClassifySettings {
    /// `None` selects the bundled dataset.
    features: Option<PathBuf>,
    partitions: PartitionOptions,
    permute_labels: bool,
    regions: Vec<String>,
    grid_steps: usize,
    /// `None` slices at the dataset mean.
    slice_value: Option<f64>,
}

#[derive(Serialize)]
struct DatasetSummary {
    source: String,
    size: usize,
    class_counts: [usize; N_CLASSES],
    labels_permuted: bool,
}

#[derive(Serialize)]
struct RegionSummary {
    name: String,
    file: String,
    slice_plane: Option<Plane>,
    slice_value: Option<f64>,
    points: usize,
    class_counts: [usize; N_CLASSES],
}

#[derive(Serialize)]
struct ClassifyFile<'a> {
    dataset: DatasetSummary,
    report: &'a PartitionReport,
    model: &'a ClassifierModel,
    regions: Vec<RegionSummary>,
}

/// Labels are shuffled with a stream separate from the partition draws.
const PERMUTATION_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

fn load_features(path: &Option<PathBuf>, out: &mut Outputs) -> Result<(Vec<FeatureVector>, Vec<String>)> {
    match path {
        Some(p) => {
            let data = parse_features_csv(&out.read_input_text(p)?)?;
            let names = (1..=data.len()).map(|i| format!("row-{i}")).collect();
            Ok((data, names))
        }
        None => {
            let rows = reference_rows();
            let data = rows
                .iter()
                .map(|r| FeatureVector::new(r.params.a, r.params.b, r.params.epsilon, r.label))
                .collect::<Result<_>>()?;
            Ok((data, rows.into_iter().map(|r| r.subject).collect()))
        }
    }
}

fn classify(args: ClassifyArgs, cfg: &ConfigFile) -> Result<Run> {
    let dir = out_dir(args.out.out.clone(), cfg)?;
    let d = PartitionOptions::default();
    let objective: Objective = match pick(args.objective, &cfg.objective) {
        Some(s) => s.parse()?,
        None => Objective::default(),
    };
    let partitions = PartitionOptions {
        n_partitions: at_least(pick(args.partitions, &cfg.partitions).unwrap_or(d.n_partitions), 1, "partitions")?,
        train_fraction: pick(args.train_fraction, &cfg.train_fraction).unwrap_or(d.train_fraction),
        seed: pick(args.seed, &cfg.seed).unwrap_or(d.seed),
        stratified: !switch(args.plain_random, cfg.plain_random),
        train: TrainOptions {
            objective,
            regularization_l2: pick(args.lambda, &cfg.lambda).unwrap_or(d.train.regularization_l2),
            max_iterations: pick(args.max_iterations, &cfg.max_iterations).unwrap_or(d.train.max_iterations),
            ..d.train
        },
    };
    partitions.train.validate()?;
    if !(partitions.train_fraction > 0.0 && partitions.train_fraction < 1.0) {
        return Err(Error::parameter("--train-fraction must lie strictly between 0 and 1"));
    }
    let regions = pick(args.regions, &cfg.regions).unwrap_or_default();
    for r in &regions {
        if r != "3d" {
            r.parse::<Plane>()?;
        }
    }
    let slice_value = if args.slice_at_mean { None } else { pick(args.slice_value, &cfg.slice_value) };
    if let Some(v) = slice_value {
        if !v.is_finite() {
            return Err(Error::parameter("--slice-value must be finite"));
        }
    }
    let settings = ClassifySettings {
        features: pick(args.features, &cfg.features),
        partitions,
        permute_labels: switch(args.permute_labels, cfg.permute_labels),
        regions,
        grid_steps: at_least(pick(args.grid_steps, &cfg.grid_steps).unwrap_or(50), 2, "grid-steps")?,
        slice_value,
    };
    let mut out = Outputs::new("classify", &settings)?;
    let (mut data, _) = load_features(&settings.features, &mut out)?;
    if settings.permute_labels {
        data = permute_labels(&data, settings.partitions.seed.wrapping_add(PERMUTATION_SEED_OFFSET));
    }
    let report = evaluate_partitions(&data, &settings.partitions)?;
    let model = train(&data, &settings.partitions.train)?;

    let mut region_summaries = Vec::new();
    for name in &settings.regions {
        let plane = if name == "3d" { None } else { Some(name.parse::<Plane>()?) };
        let mut spec = GridSpec::covering(&data, settings.grid_steps, plane)?;
        if let (Some(p), Some(v)) = (plane, settings.slice_value) {
            spec.slice = Some((p, v));
        }
        let grid = decision_regions(&model, &spec)?;
        let file = format!("regions_{}.csv", plane.map_or("3d".to_string(), |p| p.to_string()));
        out.text(&file, |w| grid.write_csv(w))?;
        region_summaries.push(RegionSummary {
            name: name.clone(),
            file,
            slice_plane: spec.slice.map(|s| s.0),
            slice_value: spec.slice.map(|s| s.1),
            points: grid.points.len(),
            class_counts: grid.class_counts(),
        });
    }
    let mut class_counts = [0; N_CLASSES];
    data.iter().for_each(|d| class_counts[d.label.index()] += 1);
    let summary = format!(
        "{} partitions ({}/{} split): mean accuracy {:.4} ± {:.4} (SEM), sd {:.4}; full-data training accuracy {:.4}\n",
        report.accuracies.len(),
        report.train_size,
        report.test_size,
        report.mean,
        report.std,
        report.accuracy_sd,
        model.accuracy(&data)
    );
    out.json(
        "classify.json",
        &ClassifyFile {
            dataset: DatasetSummary {
                source: settings
                    .features
                    .as_ref()
                    .map_or("bundled reference parameters".into(), |p| p.display().to_string()),
                size: data.len(),
                class_counts,
                labels_permuted: settings.permute_labels,
            },
            report: &report,
            model: &model,
            regions: region_summaries,
        },
    )?;
    Ok(Run { outputs: out, dir, summary })
}

// ---- synth ----------------------------------------------------------------

/// Default synthetic duration in periods of the forcing fundamental.
const DEFAULT_PERIODS: f64 = 6.0;

#[derive(Serialize)]
struct SynthSettings {
    model_file: Option<PathBuf>,
    spec: GeneratorSpec,
}

fn synth(args: SynthArgs, cfg: &ConfigFile) -> Result<Run> {
    let dir = out_dir(args.out.out.clone(), cfg)?;
    let model_file = pick(args.model, &cfg.model);
    let model = match &model_file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            GeneratorModel::Sparse(model_from_json(&text, path)?)
        }
        None => GeneratorModel::Linear(LinearParams::new(
            required(pick(args.a, &cfg.a), "a")?,
            required(pick(args.b, &cfg.b), "b")?,
            required(pick(args.eps, &cfg.eps), "eps")?,
        )?),
    };
    let (forcing, fundamental_hz) = match pick(args.sine_hz, &cfg.sine_hz) {
        Some(f) => (Forcing::single(1.0, positive(f, "sine-hz")?), f),
        None => (Forcing::cardiac_like(), 1.25),
    };
    // whole forcing periods keep the window mean at the steady-state mean,
    // so mean subtraction downstream does not bias the fit
    let duration = pick(args.duration, &cfg.duration).unwrap_or(DEFAULT_PERIODS / fundamental_hz);
    let mut spec = GeneratorSpec::new(
        model,
        forcing,
        positive(duration, "duration")?,
        positive(pick(args.dt, &cfg.dt).unwrap_or(0.005), "dt")?,
    );
    spec.noise_std_pressure = non_negative(pick(args.noise_p, &cfg.noise_p).unwrap_or(0.0), "noise-p")?;
    spec.noise_std_velocity = non_negative(pick(args.noise_v, &cfg.noise_v).unwrap_or(0.0), "noise-v")?;
    spec.rng_seed = pick(args.seed, &cfg.seed).unwrap_or(0);
    if let Some(b) = pick(args.burn_in, &cfg.burn_in) {
        spec.burn_in_s = non_negative(b, "burn-in")?;
    }
    spec.validate()?;
    let settings = SynthSettings { model_file, spec };
    let mut out = Outputs::new("synth", &settings)?;
    let pair = generate(&settings.spec)?;
    out.text("synthetic.csv", |w| write_pair_csv(&pair, w))?;
    let units = Units {
        pressure_unit: pair.pressure().unit().to_string(),
        velocity_unit: pair.velocity().unit().to_string(),
    };
    out.json("synthetic.units.json", &units)?;
    let summary = format!(
        "{} samples at dt {} s, pressure amplitude {:.6e}\n",
        pair.len(),
        pair.dt(),
        pair.pressure().amplitude()
    );
    Ok(Run { outputs: out, dir, summary })
}

// ---- bench ----------------------------------------------------------------

#[derive(Serialize)]
struct BenchSettings {
    /// `None` benchmarks on the built-in synthetic recording.
    signal: Option<SignalSettings>,
    libraries: Vec<String>,
    eta: f64,
    runs: usize,
    iterations: usize,
    boundary_trim: usize,
}

#[derive(Serialize)]
struct BenchResult {
    library: String,
    report: BenchReport,
}

#[derive(Serialize)]
struct BenchFile {
    data: String,
    samples: usize,
    results: Vec<BenchResult>,
    /// Library with the lowest median time.
    fastest: String,
}

/// Parameters of the first reference recording, used for the default bench data.
fn default_bench_pair() -> Result<SignalPair> {
    let model = GeneratorModel::Linear(LinearParams::new(27.5, 455.0, 3.55e4)?);
    generate(&GeneratorSpec::new(model, Forcing::cardiac_like(), 5.0, 0.005))
}

fn bench(args: BenchArgs, cfg: &ConfigFile) -> Result<Run> {
    let dir = out_dir(args.out.out.clone(), cfg)?;
    let libraries = pick(args.libraries, &cfg.libraries).unwrap_or_else(|| vec!["eq2".into(), "linear".into()]);
    if libraries.is_empty() {
        return Err(Error::parameter("--libraries needs at least one value"));
    }
    let specs: Vec<LibrarySpec> = libraries.iter().map(|l| resolve_library(l)).collect::<Result<_>>()?;
    let input = pick(args.input, &cfg.input);
    let signal = match input {
        Some(input) => Some(SignalSettings {
            input,
            units: cfg.units.clone(),
            cutoff_hz: required(pick(args.cutoff_hz, &cfg.cutoff_hz), "cutoff-hz")?,
            subtract_mean: cfg.subtract_mean.unwrap_or(true),
        }),
        None => None,
    };
    let settings = BenchSettings {
        signal,
        libraries,
        eta: single_eta(args.eta, cfg)?,
        runs: at_least(pick(args.runs, &cfg.runs).unwrap_or(7), 1, "runs")?,
        iterations: at_least(pick(args.iterations, &cfg.iterations).unwrap_or(1000), 1, "iterations")?,
        boundary_trim: cfg.boundary_trim.unwrap_or(FitConfig::default().boundary_trim),
    };
    let mut out = Outputs::new("bench", &settings)?;
    let (pair, data) = match &settings.signal {
        Some(s) => (load_pair(s, &mut out)?, s.input.display().to_string()),
        None => (default_bench_pair()?, "synthetic".to_string()),
    };
    let mut results = Vec::new();
    let mut summary = String::from("library     terms  median_s      mean_s        std_s\n");
    for (name, lib) in settings.libraries.iter().zip(specs) {
        let fc = FitConfig {
            library: lib,
            eta: settings.eta,
            options: StlsOptions::default(),
            boundary_trim: settings.boundary_trim,
        };
        let report = bench_fit(&fc.design(&pair)?, settings.eta, settings.runs, settings.iterations)?;
        let _ = writeln!(
            summary,
            "{:<11} {:<6} {:<13.6e} {:<13.6e} {:.6e}",
            name, report.terms, report.median_seconds, report.mean_seconds, report.std_seconds
        );
        results.push(BenchResult { library: name.clone(), report });
    }
    let fastest = results
        .iter()
        .min_by(|x, y| x.report.median_seconds.total_cmp(&y.report.median_seconds))
        .map(|r| r.library.clone())
        .unwrap_or_default();
    out.json("bench.json", &BenchFile { data, samples: pair.len(), results, fastest })?;
    Ok(Run { outputs: out, dir, summary })
}

// ---- damping --------------------------------------------------------------

#[derive(Serialize)]
struct DampingSettings {
    features: Option<PathBuf>,
}

#[derive(Serialize)]
struct DampingRow {
    subject: String,
    label: String,
    a: f64,
    b: f64,
    a_squared: f64,
    four_b: f64,
    standard: Regime,
    paper_ab: Regime,
}

#[derive(Serialize, Default)]
struct RegimeCounts {
    underdamped: usize,
    critical: usize,
    overdamped: usize,
}

impl RegimeCounts {
    fn add(&mut self, r: Regime) {
        match r {
            Regime::Underdamped => self.underdamped += 1,
            Regime::Critical => self.critical += 1,
            Regime::Overdamped => self.overdamped += 1,
        }
    }
}

#[derive(Serialize)]
struct DampingFile {
    rows: Vec<DampingRow>,
    /// Keyed by criterion: `standard` is `a² < 4b`, `paper-ab` is `b > a²`.
    counts: BTreeMap<String, RegimeCounts>,
    /// Rows that are not underdamped under the standard criterion.
    standard_exceptions: Vec<String>,
}

fn damping(args: DampingArgs, cfg: &ConfigFile) -> Result<Run> {
    let dir = out_dir(args.out.out.clone(), cfg)?;
    let settings = DampingSettings {
        features: pick(args.features, &cfg.features),
    };
    let mut out = Outputs::new("damping", &settings)?;
    let (data, names) = load_features(&settings.features, &mut out)?;
    let mut counts: BTreeMap<String, RegimeCounts> = BTreeMap::new();
    let mut rows = Vec::new();
    for (d, subject) in data.iter().zip(names) {
        let [a, b, epsilon] = d.raw();
        let params = LinearParams::new(a, b, epsilon)?;
        let standard = classify_damping(&params, DampingCriterion::StandardA2LessThan4B).regime;
        let paper_ab = classify_damping(&params, DampingCriterion::PaperAB).regime;
        counts.entry(DampingCriterion::StandardA2LessThan4B.to_string()).or_default().add(standard);
        counts.entry(DampingCriterion::PaperAB.to_string()).or_default().add(paper_ab);
        rows.push(DampingRow {
            subject,
            label: d.label.to_string(),
            a,
            b,
            a_squared: a * a,
            four_b: 4.0 * b,
            standard,
            paper_ab,
        });
    }
    let standard_exceptions: Vec<String> = rows
        .iter()
        .filter(|r| r.standard != Regime::Underdamped)
        .map(|r| r.subject.clone())
        .collect();
    let mut summary = String::new();
    for (criterion, c) in &counts {
        let _ = writeln!(
            summary,
            "{criterion:<9} underdamped {:>3}  critical {:>3}  overdamped {:>3}",
            c.underdamped, c.critical, c.overdamped
        );
    }
    if !standard_exceptions.is_empty() {
        let _ = writeln!(summary, "not underdamped (standard): {}", standard_exceptions.join(" "));
    }
    out.json("damping.json", &DampingFile { rows, counts, standard_exceptions })?;
    Ok(Run { outputs: out, dir, summary })
}
