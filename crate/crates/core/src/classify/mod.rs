//! Three-class softmax classifier over identified `(a, b, ε)` parameters.

mod data;
mod lbfgs;
mod partitions;
mod regions;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::signal::ClassLabel;
use crate::{Error, Result};

pub use data::{parse_features_csv, reference_dataset, reference_rows, ReferenceRow, REFERENCE_CSV};
pub use partitions::{evaluate_partitions, permute_labels, PartitionOptions, PartitionReport};
pub use regions::{decision_regions, Axis, GridPoint, GridSpec, LabeledGrid, Plane};

pub const N_CLASSES: usize = 3;
/// Bias plus `(a, b, ε)`.
pub const N_FEATURES: usize = 4;
pub type Weights = [[f64; N_FEATURES]; N_CLASSES];

/// Bias-extended feature vector `[1, a, b, ε]` with its class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FeatureVector {
    x: [f64; N_FEATURES],
    pub label: ClassLabel,
}

impl FeatureVector {
    pub fn new(a: f64, b: f64, epsilon: f64, label: ClassLabel) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && epsilon.is_finite()) {
            return Err(Error::input("features must be finite"));
        }
        Ok(Self { x: [1.0, a, b, epsilon], label })
    }

    pub fn x(&self) -> &[f64; N_FEATURES] {
        &self.x
    }

    pub fn raw(&self) -> [f64; 3] {
        [self.x[1], self.x[2], self.x[3]]
    }

    pub fn with_label(self, label: ClassLabel) -> Self {
        Self { label, ..self }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    /// −Σₘ yₘ ln Pₘ.
    #[default]
    MultinomialNll,
    /// −Σₘ [yₘ ln Pₘ + (1 − yₘ) ln(1 − Pₘ)], one Bernoulli term per class.
    PaperEq12,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MultinomialNll => "nll",
            Self::PaperEq12 => "eq12",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nll" | "multinomial" | "multinomialnll" => Ok(Self::MultinomialNll),
            "eq12" | "bernoulli" | "papereq12" => Ok(Self::PaperEq12),
            _ => Err(Error::parameter(format!("unknown objective {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub objective: Objective,
    /// λ in `(λ/2) Σ_{m, j≥1} w²ₘⱼ`, on standardized features; the bias is not penalized.
    pub regularization_l2: f64,
    pub max_iterations: usize,
    pub gtol: f64,
    pub standardize: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            objective: Objective::MultinomialNll,
            regularization_l2: 1e-2,
            max_iterations: 1000,
            gtol: 1e-8,
            standardize: true,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.regularization_l2.is_finite() && self.regularization_l2 >= 0.0) {
            return Err(Error::parameter("regularization must be finite and ≥ 0"));
        }
        if !(self.gtol.is_finite() && self.gtol > 0.0) {
            return Err(Error::parameter("gtol must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::parameter("max_iterations must be ≥ 1"));
        }
        Ok(())
    }
}

/// Per-feature affine map `z = (x − mean) / scale` for `(a, b, ε)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: [f64; 3],
    pub scale: [f64; 3],
}

impl Scaling {
    pub const IDENTITY: Scaling = Scaling { mean: [0.0; 3], scale: [1.0; 3] };

    /// Zero mean and unit (population) variance; constant features keep scale 1.
    pub fn fit(data: &[FeatureVector]) -> Self {
        let n = data.len() as f64;
        let mut mean = [0.0; 3];
        let mut scale = [1.0; 3];
        for j in 0..3 {
            mean[j] = data.iter().map(|d| d.raw()[j]).sum::<f64>() / n;
            let var = data.iter().map(|d| (d.raw()[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                scale[j] = var.sqrt();
            }
        }
        Self { mean, scale }
    }

    pub fn apply(&self, raw: [f64; 3]) -> [f64; N_FEATURES] {
        let mut z = [1.0; N_FEATURES];
        for j in 0..3 {
            z[j + 1] = (raw[j] - self.mean[j]) / self.scale[j];
        }
        z
    }

    fn validate(&self) -> Result<()> {
        let ok = self.mean.iter().all(|m| m.is_finite())
            && self.scale.iter().all(|s| s.is_finite() && *s > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::parameter("scaling must be finite with positive scales"))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    /// Rows are classes, columns `[bias, a, b, ε]` on the scaled features.
    pub weights: Weights,
    pub scaling: Scaling,
    pub objective: Objective,
    pub regularization_l2: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl ClassifierModel {
    pub fn from_weights(weights: Weights, scaling: Scaling) -> Result<Self> {
        if weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(Error::parameter("weights must be finite"));
        }
        scaling.validate()?;
        Ok(Self {
            weights,
            scaling,
            objective: Objective::default(),
            regularization_l2: 0.0,
            converged: true,
            iterations: 0,
        })
    }

    pub fn logits(&self, raw: [f64; 3]) -> [f64; N_CLASSES] {
        logits(&self.weights, &self.scaling.apply(raw))
    }

    pub fn probabilities(&self, raw: [f64; 3]) -> [f64; N_CLASSES] {
        softmax(self.logits(raw))
    }

    /// Argmax class; ties go to the lowest index.
    pub fn predict(&self, raw: [f64; 3]) -> ClassLabel {
        let l = self.logits(raw);
        let mut best = 0;
        for m in 1..N_CLASSES {
            if l[m] > l[best] {
                best = m;
            }
        }
        ClassLabel::from_index(best).expect("index below N_CLASSES")
    }

    pub fn accuracy(&self, data: &[FeatureVector]) -> f64 {
        let hits = data.iter().filter(|d| self.predict(d.raw()) == d.label).count();
        hits as f64 / data.len() as f64
    }
}

fn logits(w: &Weights, z: &[f64; N_FEATURES]) -> [f64; N_CLASSES] {
    let mut l = [0.0; N_CLASSES];
    for m in 0..N_CLASSES {
        l[m] = w[m].iter().zip(z).map(|(a, b)| a * b).sum();
    }
    l
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax with max-logit subtraction.
pub fn softmax(l: [f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = l.map(|v| (v - max).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

pub fn softmax_probabilities(model: &ClassifierModel, x: &FeatureVector) -> [f64; N_CLASSES] {
    model.probabilities(x.raw())
}

/// Training objective (to be minimized) and its gradient with respect to the
/// row-major weights, on already-scaled feature rows:
/// mean per-sample loss + (λ/2) Σ_{m, j≥1} w²ₘⱼ.
pub fn objective_value_and_gradient(
    w: &Weights,
    z: &[[f64; N_FEATURES]],
    labels: &[usize],
    objective: Objective,
    lambda: f64,
) -> (f64, Weights) {
    let n = z.len() as f64;
    let mut value = 0.0;
    let mut grad = [[0.0; N_FEATURES]; N_CLASSES];
    for (zi, &yi) in z.iter().zip(labels) {
        let l = logits(w, zi);
        let lse = log_sum_exp(&l);
        let ln_p = l.map(|v| v - lse);
        let p = ln_p.map(f64::exp);
        // dloss/dlogit
        let mut dz = [0.0; N_CLASSES];
        match objective {
            Objective::MultinomialNll => {
                value -= ln_p[yi];
                for m in 0..N_CLASSES {
                    dz[m] = p[m] - if m == yi { 1.0 } else { 0.0 };
                }
            }
            Objective::PaperEq12 => {
                // ln(1 − Pₘ) from the other logits, exact when Pₘ → 1
                let ln_q: [f64; N_CLASSES] = std::array::from_fn(|m| {
                    let others: Vec<f64> = (0..N_CLASSES).filter(|&k| k != m).map(|k| l[k]).collect();
                    log_sum_exp(&others) - lse
                });
                // gₖPₖ with gₖ = yₖ/Pₖ − (1 − yₖ)/(1 − Pₖ)
                let gp: [f64; N_CLASSES] = std::array::from_fn(|k| {
                    if k == yi {
                        value -= ln_p[k];
                        1.0
                    } else {
                        value -= ln_q[k];
                        -(ln_p[k] - ln_q[k]).exp()
                    }
                });
                let s: f64 = gp.iter().sum();
                for m in 0..N_CLASSES {
                    dz[m] = -(gp[m] - p[m] * s);
                }
            }
        }
        for m in 0..N_CLASSES {
            for j in 0..N_FEATURES {
                grad[m][j] += dz[m] * zi[j];
            }
        }
    }
    value /= n;
    for m in 0..N_CLASSES {
        for j in 0..N_FEATURES {
            grad[m][j] /= n;
            if j >= 1 {
                value += 0.5 * lambda * w[m][j] * w[m][j];
                grad[m][j] += lambda * w[m][j];
            }
        }
    }
    (value, grad)
}

fn flatten(w: &Weights) -> Vec<f64> {
    w.iter().flatten().copied().collect()
}

fn unflatten(v: &[f64]) -> Weights {
    std::array::from_fn(|m| std::array::from_fn(|j| v[m * N_FEATURES + j]))
}

pub fn train(data: &[FeatureVector], options: &TrainOptions) -> Result<ClassifierModel> {
    train_from(data, options, [[0.0; N_FEATURES]; N_CLASSES])
}

/// Trains from explicit initial weights (on the scaled features).
pub fn train_from(data: &[FeatureVector], options: &TrainOptions, initial: Weights) -> Result<ClassifierModel> {
    options.validate()?;
    if data.is_empty() {
        return Err(Error::input("no training data"));
    }
    let first = data[0].label;
    if data.iter().all(|d| d.label == first) {
        return Err(Error::DegenerateTraining);
    }
    let scaling = if options.standardize {
        Scaling::fit(data)
    } else {
        Scaling::IDENTITY
    };
    let z: Vec<[f64; N_FEATURES]> = data.iter().map(|d| scaling.apply(d.raw())).collect();
    let labels: Vec<usize> = data.iter().map(|d| d.label.index()).collect();
    let result = lbfgs::minimize(
        |v| {
            let (f, g) =
                objective_value_and_gradient(&unflatten(v), &z, &labels, options.objective, options.regularization_l2);
            (f, flatten(&g))
        },
        flatten(&initial),
        &lbfgs::LbfgsOptions {
            memory: 10,
            max_iterations: options.max_iterations,
            gtol: options.gtol,
        },
    );
    let mut model = ClassifierModel::from_weights(unflatten(&result.x), scaling)?;
    model.objective = options.objective;
    model.regularization_l2 = options.regularization_l2;
    model.converged = result.converged;
    model.iterations = result.iterations;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use ClassLabel::*;

    fn clusters() -> Vec<FeatureVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let centres = [(10.0, 200.0, 1e4, AA), (30.0, 500.0, 5e4, AVM), (50.0, 300.0, 9e4, Treated)];
        let mut out = Vec::new();
        for &(a, b, e, label) in &centres {
            for _ in 0..8 {
                out.push(
                    FeatureVector::new(
                        a + rng.random_range(-2.0..2.0),
                        b + rng.random_range(-20.0..20.0),
                        e + rng.random_range(-2e3..2e3),
                        label,
                    )
                    .unwrap(),
                );
            }
        }
        out
    }

    fn zero_model() -> ClassifierModel {
        ClassifierModel::from_weights([[0.0; 4]; 3], Scaling::IDENTITY).unwrap()
    }

    #[test]
    fn softmax_examples() {
        let x = FeatureVector::new(1.0, 2.0, 3.0, AA).unwrap();
        for p in softmax_probabilities(&zero_model(), &x) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax([1.0, 0.0, 0.0]);
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 2.0)).abs() < 1e-15);
        assert!((p[1] - 1.0 / (e + 2.0)).abs() < 1e-15);
        assert!((p[0] - 0.57612).abs() < 5e-6 && (p[2] - 0.21194).abs() < 5e-6);
        let big = softmax([1000.0, 0.0, -1000.0]);
        assert_eq!(big, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn degenerate_training() {
        let d = vec![FeatureVector::new(1.0, 2.0, 3.0, AA).unwrap(); 4];
        assert!(matches!(train(&d, &TrainOptions::default()), Err(Error::DegenerateTraining)));
        assert!(train(&[], &TrainOptions::default()).is_err());
    }

    #[test]
    fn separable_clusters_are_learned() {
        let data = clusters();
        for objective in [Objective::MultinomialNll, Objective::PaperEq12] {
            let m = train(&data, &TrainOptions { objective, ..TrainOptions::default() }).unwrap();
            assert!(m.converged);
            assert_eq!(m.accuracy(&data), 1.0);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for objective in [Objective::MultinomialNll, Objective::PaperEq12] {
            for _ in 0..20 {
                let z: Vec<[f64; 4]> = (0..12)
                    .map(|_| [1.0, rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
                    .collect();
                let y: Vec<usize> = (0..12).map(|_| rng.random_range(0..3)).collect();
                let w: Weights = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.5..1.5)));
                let (_, g) = objective_value_and_gradient(&w, &z, &y, objective, 0.3);
                let h = 1e-5;
                let (mut num, mut diff) = (0.0_f64, 0.0_f64);
                for m in 0..3 {
                    for j in 0..4 {
                        let (mut wp, mut wm) = (w, w);
                        wp[m][j] += h;
                        wm[m][j] -= h;
                        let fd = (objective_value_and_gradient(&wp, &z, &y, objective, 0.3).0
                            - objective_value_and_gradient(&wm, &z, &y, objective, 0.3).0)
                            / (2.0 * h);
                        num = num.max(fd.abs()).max(g[m][j].abs());
                        diff = diff.max((fd - g[m][j]).abs());
                    }
                }
                assert!(diff / num < 1e-6, "{objective}: relative error {}", diff / num);
            }
        }
    }

    #[test]
    fn eq12_value_by_hand() {
        // one sample, logits (1, 0, 0), label 0
        let w: Weights = [[1.0, 0.0, 0.0, 0.0], [0.0; 4], [0.0; 4]];
        let p = softmax([1.0, 0.0, 0.0]);
        let expect = -(p[0].ln() + 2.0 * (1.0 - p[1]).ln());
        let (v, _) = objective_value_and_gradient(&w, &[[1.0, 0.0, 0.0, 0.0]], &[0], Objective::PaperEq12, 0.0);
        assert!((v - expect).abs() < 1e-14);
        let (v, _) = objective_value_and_gradient(&w, &[[1.0, 0.0, 0.0, 0.0]], &[0], Objective::MultinomialNll, 0.0);
        assert!((v + p[0].ln()).abs() < 1e-14);
    }

    #[test]
    fn different_starts_agree() {
        let data = clusters();
        let opts = TrainOptions::default();
        let a = train(&data, &opts).unwrap();
        let b = train_from(&data, &opts, [[3.0, -1.0, 2.0, 0.5], [-2.0, 1.0, 0.0, 1.0], [0.0, 0.5, -0.5, 2.0]]).unwrap();
        for d in &data {
            assert_eq!(a.predict(d.raw()), b.predict(d.raw()));
        }
    }

    #[test]
    fn feature_rescaling_does_not_change_labels() {
        let data = clusters();
        let opts = TrainOptions::default();
        let base = train(&data, &opts).unwrap();
        let scaled: Vec<FeatureVector> = data
            .iter()
            .map(|d| FeatureVector::new(d.raw()[0] * 7.0, d.raw()[1], d.raw()[2] * 1e-3, d.label).unwrap())
            .collect();
        let other = train(&scaled, &opts).unwrap();
        for (d, s) in data.iter().zip(&scaled) {
            assert_eq!(base.predict(d.raw()), other.predict(s.raw()));
        }
    }

    #[test]
    fn model_json_round_trip() {
        let m = train(&clusters(), &TrainOptions::default()).unwrap();
        let back: ClassifierModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    proptest! {
        #[test]
        fn probabilities_are_a_distribution(
            w in prop::array::uniform3(prop::array::uniform4(-50.0f64..50.0)),
            x in prop::array::uniform3(-10.0f64..10.0),
            shift in prop::array::uniform4(-20.0f64..20.0),
        ) {
            let m = ClassifierModel::from_weights(w, Scaling::IDENTITY).unwrap();
            let p = m.probabilities(x);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let shifted: Weights = std::array::from_fn(|r| std::array::from_fn(|j| w[r][j] + shift[j]));
            let ms = ClassifierModel::from_weights(shifted, Scaling::IDENTITY).unwrap();
            let ps = ms.probabilities(x);
            for k in 0..3 {
                prop_assert!((p[k] - ps[k]).abs() < 1e-12);
            }
            prop_assert_eq!(m.predict(x), ms.predict(x));
        }
    }
}
