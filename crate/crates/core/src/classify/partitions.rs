//! Repeated random train/test evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, FeatureVector, Objective, TrainOptions, N_CLASSES};
use crate::signal::ClassLabel;
use crate::{Error, Result};

/// Redraws allowed per partition when a training set holds a single class.
const MAX_REDRAWS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionOptions {
    pub n_partitions: usize,
    pub train_fraction: f64,
    pub seed: u64,
    /// Draw each class's share of the test set separately.
    pub stratified: bool,
    pub train: TrainOptions,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        Self {
            n_partitions: 100,
            train_fraction: 0.8,
            seed: 0,
            stratified: true,
            train: TrainOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionReport {
    /// Test accuracy per partition, in draw order.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Standard error of the mean.
    pub std: f64,
    /// Sample standard deviation across partitions.
    pub accuracy_sd: f64,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub stratified: bool,
    pub objective: Objective,
    pub regularization_l2: f64,
    /// Splits discarded because training held a single class.
    pub redraws: usize,
    /// Partitions whose optimizer hit its budget.
    pub non_converged: usize,
}

/// Test-set share per class by largest remainder; ties go to the lower class.
fn stratum_sizes(counts: &[usize; N_CLASSES], test: usize) -> [usize; N_CLASSES] {
    let n: usize = counts.iter().sum();
    let mut k = [0; N_CLASSES];
    let mut rem = [(0usize, 0usize); N_CLASSES];
    for c in 0..N_CLASSES {
        let q = test * counts[c];
        k[c] = q / n;
        rem[c] = (q % n, c);
    }
    let mut left = test - k.iter().sum::<usize>();
    rem.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
    for &(_, c) in &rem {
        if left == 0 {
            break;
        }
        if k[c] < counts[c] {
            k[c] += 1;
            left -= 1;
        }
    }
    k
}

fn draw_test_set(labels: &[ClassLabel], test: usize, stratified: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut chosen = if stratified {
        let mut by_class: [Vec<usize>; N_CLASSES] = Default::default();
        for (i, l) in labels.iter().enumerate() {
            by_class[l.index()].push(i);
        }
        let counts = by_class.each_ref().map(Vec::len);
        let sizes = stratum_sizes(&counts, test);
        let mut out = Vec::with_capacity(test);
        for (members, k) in by_class.iter_mut().zip(sizes) {
            let (picked, _) = members.partial_shuffle(rng, k);
            out.extend_from_slice(picked);
        }
        out
    } else {
        let mut all: Vec<usize> = (0..labels.len()).collect();
        let (picked, _) = all.partial_shuffle(rng, test);
        picked.to_vec()
    };
    chosen.sort_unstable();
    chosen
}

/// Draws every split sequentially from one seeded stream, then trains the
/// partitions in parallel. Results are indexed by draw order.
pub fn evaluate_partitions(data: &[FeatureVector], options: &PartitionOptions) -> Result<PartitionReport> {
    options.train.validate()?;
    let n = data.len();
    if options.n_partitions == 0 {
        return Err(Error::parameter("n_partitions must be ≥ 1"));
    }
    if !(options.train_fraction > 0.0 && options.train_fraction < 1.0) {
        return Err(Error::parameter("train_fraction must lie in (0, 1)"));
    }
    if n < 5 {
        return Err(Error::input(format!("need at least 5 examples, got {n}")));
    }
    let train_size = (options.train_fraction * n as f64).round() as usize;
    if train_size < 2 || train_size >= n {
        return Err(Error::parameter(format!("train_fraction gives a {train_size}/{} split", n - train_size)));
    }
    let test_size = n - train_size;
    let labels: Vec<ClassLabel> = data.iter().map(|d| d.label).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut splits = Vec::with_capacity(options.n_partitions);
    let mut redraws = 0;
    for _ in 0..options.n_partitions {
        let mut attempts = 0;
        loop {
            let test = draw_test_set(&labels, test_size, options.stratified, &mut rng);
            let train_labels: Vec<ClassLabel> =
                (0..n).filter(|i| test.binary_search(i).is_err()).map(|i| labels[i]).collect();
            if train_labels.iter().any(|&l| l != train_labels[0]) {
                splits.push(test);
                break;
            }
            attempts += 1;
            redraws += 1;
            if attempts > MAX_REDRAWS {
                return Err(Error::DegenerateTraining);
            }
        }
    }

    let results: Vec<(f64, bool)> = splits
        .par_iter()
        .map(|test| {
            let (tr, te): (Vec<_>, Vec<_>) = (0..n).partition(|i| test.binary_search(i).is_err());
            let train_set: Vec<FeatureVector> = tr.iter().map(|&i| data[i]).collect();
            let test_set: Vec<FeatureVector> = te.iter().map(|&i| data[i]).collect();
            let model = train(&train_set, &options.train)?;
            Ok((model.accuracy(&test_set), model.converged))
        })
        .collect::<Result<_>>()?;

    let accuracies: Vec<f64> = results.iter().map(|r| r.0).collect();
    let k = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / k;
    let accuracy_sd = if accuracies.len() > 1 {
        (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(PartitionReport {
        mean,
        std: accuracy_sd / k.sqrt(),
        accuracy_sd,
        seed: options.seed,
        train_size,
        test_size,
        stratified: options.stratified,
        objective: options.train.objective,
        regularization_l2: options.train.regularization_l2,
        redraws,
        non_converged: results.iter().filter(|r| !r.1).count(),
        accuracies,
    })
}

/// Same features with labels shuffled by a seeded permutation.
pub fn permute_labels(data: &[FeatureVector], seed: u64) -> Vec<FeatureVector> {
    let mut labels: Vec<ClassLabel> = data.iter().map(|d| d.label).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    data.iter().zip(labels).map(|(d, l)| d.with_label(l)).collect()
}
