//! Best-treatment probability estimation.
//!
//! For every observation the pipeline needs `pi_k(X_i)`: the probability
//! that treatment `k` beats every alternative at that subject's
//! characteristics. Joint effect samples `Y^b_k(X_i)` are generated either
//! by refitting a forest to a fresh bootstrap resample of each arm for
//! every `b` (the bootstrap method), or by fitting one forest per arm
//! and drawing from a Gaussian centered at its prediction with the
//! bias-corrected infinitesimal-jackknife variance (the jackknife method).
//! The samples are then reduced to probabilities by counting which
//! treatment attains the maximum, splitting ties evenly.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forest::{fit_forest, ForestParams};
use crate::rng::stream;

const BOOT_ARM_STREAM: u64 = 0x6273_0001;
const BOOT_FOREST_STREAM: u64 = 0x6273_0002;
const JACK_FOREST_STREAM: u64 = 0x6273_0003;
const JACK_DRAW_STREAM: u64 = 0x6273_0004;

/// How the joint effect samples are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbMethod {
    /// Method 1: one forest per (bootstrap replicate, arm).
    Bootstrap,
    /// Method 2: one forest per arm, Gaussian draws with jackknife
    /// variance.
    Jackknife,
}

impl ProbMethod {
    pub fn tag(&self) -> u8 {
        match self {
            ProbMethod::Bootstrap => 1,
            ProbMethod::Jackknife => 2,
        }
    }
}

/// Joint effect samples: `B` draws of the m-vector of hypothetical effects
/// for each of the `n` observations.
#[derive(Debug, Clone)]
pub struct EffectSamples {
    /// Laid out as `[i][b][k]`.
    values: Vec<f64>,
    n: usize,
    b: usize,
    m: usize,
}

impl EffectSamples {
    fn new(n: usize, b: usize, m: usize) -> Self {
        EffectSamples {
            values: vec![0.0; n * b * m],
            n,
            b,
            m,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_samples(&self) -> usize {
        self.b
    }

    pub fn n_treatments(&self) -> usize {
        self.m
    }

    pub fn value(&self, row: usize, sample: usize, treatment: usize) -> f64 {
        self.values[(row * self.b + sample) * self.m + treatment]
    }

    fn sample_slice_mut(&mut self, row: usize, sample: usize) -> &mut [f64] {
        let start = (row * self.b + sample) * self.m;
        &mut self.values[start..start + self.m]
    }

    fn validate(&self) -> Result<()> {
        if let Some(bad) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "non-finite effect sample {bad}"
            )));
        }
        Ok(())
    }
}

/// Row-stochastic n×m matrix of best-treatment probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    values: Vec<f64>,
    n: usize,
    m: usize,
    samples: usize,
    method_tag: u8,
}

impl ProbabilityMatrix {
    /// Validates entries in [0, 1] and row sums within 1e-9 of one.
    pub fn new(values: Vec<f64>, n: usize, m: usize, samples: usize, method_tag: u8) -> Result<Self> {
        if values.len() != n * m || m == 0 || n == 0 {
            return Err(Error::InvalidParam(format!(
                "probability matrix of {} values cannot be {n}x{m}",
                values.len()
            )));
        }
        for (i, row) in values.chunks(m).enumerate() {
            let mut sum = 0.0;
            for &v in row {
                if !(-1e-12..=1.0 + 1e-12).contains(&v) {
                    return Err(Error::InvalidParam(format!(
                        "probability {v} out of [0,1] at row {i}"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParam(format!(
                    "probability row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(ProbabilityMatrix {
            values,
            n,
            m,
            samples,
            method_tag,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_treatments(&self) -> usize {
        self.m
    }

    /// Number of effect samples behind each probability.
    pub fn sample_count(&self) -> usize {
        self.samples
    }

    /// 1 for the bootstrap method, 2 for the jackknife method.
    pub fn method_tag(&self) -> u8 {
        self.method_tag
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.m)
    }

    /// Renders as a delimited table with a row id and one probability
    /// column per treatment.
    pub fn to_csv(&self, treatment_names: &[String]) -> String {
        let mut out = String::from("row");
        for name in treatment_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, row) in self.rows().enumerate() {
            out.push_str(&(i + 1).to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// Method 1: for every `b` and arm `k`, fit a forest to an independent
/// bootstrap resample of that arm and evaluate it at all observations.
pub fn sample_effects_method1(
    data: &Dataset,
    b: usize,
    params: &ForestParams,
    seed: u64,
) -> Result<EffectSamples> {
    if b == 0 {
        return Err(Error::InvalidParam("sample count B must be >= 1".into()));
    }
    let arms = data.partition_by_treatment()?;
    let n = data.n_rows();
    let m = arms.len();

    let jobs: Vec<(usize, usize)> = (0..b)
        .flat_map(|rep| (0..m).map(move |k| (rep, k)))
        .collect();
    let predictions: Vec<Result<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(rep, k)| {
            let mut boot_rng = stream(seed, &[BOOT_ARM_STREAM, rep as u64, k as u64]);
            let resampled = arms[k].bootstrap_resample(&mut boot_rng);
            let forest_params = ForestParams {
                seed: crate::rng::derive_seed(
                    seed,
                    &[BOOT_FOREST_STREAM, rep as u64, k as u64],
                ),
                ..params.clone()
            };
            let forest = fit_forest(&resampled, &forest_params)?;
            Ok((0..n).map(|i| forest.predict(data.features(), i)).collect())
        })
        .collect();

    let mut samples = EffectSamples::new(n, b, m);
    for ((rep, k), preds) in jobs.into_iter().zip(predictions) {
        let preds = preds?;
        for (i, &value) in preds.iter().enumerate() {
            samples.sample_slice_mut(i, rep)[k] = value;
        }
    }
    samples.validate()?;
    Ok(samples)
}

/// Method 2: one forest per arm; `Y^b_k(X_i)` drawn from a Gaussian with
/// the forest prediction as mean and the bias-corrected infinitesimal
/// jackknife as variance. Draw streams are derived per `(k, i)` so output
/// does not depend on scheduling.
pub fn sample_effects_method2(
    data: &Dataset,
    b: usize,
    params: &ForestParams,
    seed: u64,
) -> Result<EffectSamples> {
    if b == 0 {
        return Err(Error::InvalidParam("sample count B must be >= 1".into()));
    }
    let arms = data.partition_by_treatment()?;
    let n = data.n_rows();
    let m = arms.len();

    let forests = arms
        .iter()
        .enumerate()
        .map(|(k, arm)| {
            let forest_params = ForestParams {
                seed: crate::rng::derive_seed(seed, &[JACK_FOREST_STREAM, k as u64]),
                ..params.clone()
            };
            fit_forest(arm, &forest_params)
        })
        .collect::<Result<Vec<_>>>()?;

    // Per (k, i): mean, standard deviation and B draws.
    let per_row: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut draws = vec![0.0; b * m];
            for (k, forest) in forests.iter().enumerate() {
                let tree_preds = forest.tree_predictions(data.features(), i);
                let mean = tree_preds.iter().sum::<f64>() / tree_preds.len() as f64;
                let sd = forest.ij_variance_from_predictions(&tree_preds).sqrt();
                let mut rng = stream(seed, &[JACK_DRAW_STREAM, k as u64, i as u64]);
                for rep in 0..b {
                    let z: f64 = rng.sample(StandardNormal);
                    draws[rep * m + k] = mean + sd * z;
                }
            }
            draws
        })
        .collect();

    let mut samples = EffectSamples::new(n, b, m);
    for (i, draws) in per_row.into_iter().enumerate() {
        for rep in 0..b {
            samples
                .sample_slice_mut(i, rep)
                .copy_from_slice(&draws[rep * m..(rep + 1) * m]);
        }
    }
    samples.validate()?;
    Ok(samples)
}

/// Reduces effect samples to best-treatment probabilities: each sample
/// contributes weight 1 to its maximal treatment, split evenly when
/// several treatments tie for the maximum. Rows therefore sum to one.
pub fn compute_best_probabilities(samples: &EffectSamples) -> Result<ProbabilityMatrix> {
    compute_best_probabilities_tagged(samples, 0)
}

fn compute_best_probabilities_tagged(
    samples: &EffectSamples,
    method_tag: u8,
) -> Result<ProbabilityMatrix> {
    let (n, b, m) = (samples.n_rows(), samples.n_samples(), samples.n_treatments());
    let mut values = vec![0.0f64; n * m];
    for i in 0..n {
        let row = &mut values[i * m..(i + 1) * m];
        for rep in 0..b {
            let mut max = f64::NEG_INFINITY;
            for k in 0..m {
                max = max.max(samples.value(i, rep, k));
            }
            let ties = (0..m).filter(|&k| samples.value(i, rep, k) == max).count();
            let weight = 1.0 / ties as f64;
            for k in 0..m {
                if samples.value(i, rep, k) == max {
                    row[k] += weight;
                }
            }
        }
        for v in row.iter_mut() {
            *v /= b as f64;
        }
    }
    ProbabilityMatrix::new(values, n, m, b, method_tag)
}

/// Estimates the best-treatment probability matrix for every observation
/// in `data` using the chosen sampling method.
pub fn estimate_probabilities(
    data: &Dataset,
    method: ProbMethod,
    b: usize,
    params: &ForestParams,
    seed: u64,
) -> Result<ProbabilityMatrix> {
    let samples = match method {
        ProbMethod::Bootstrap => sample_effects_method1(data, b, params, seed)?,
        ProbMethod::Jackknife => sample_effects_method2(data, b, params, seed)?,
    };
    compute_best_probabilities_tagged(&samples, method.tag())
}
