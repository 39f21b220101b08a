//! Config-driven batch experiments: generate, estimate, grow, score.

use rayon::prelude::*;

use crate::bestprob::{estimate_probabilities, ProbMethod, ProbabilityMatrix};
use crate::dataset::parse_kv_pairs;
use crate::error::{Error, Result};
use crate::forest::ForestParams;
use crate::psicatree::{grow, CostMatrix, GrowConfig, GrowthMethod, PsicaTree, DEFAULT_OMEGA_MAX};
use crate::rng::{derive_seed, stream};

use super::metrics::{self, MetricsReport};
use super::{generate_model, SimModelId};

const TRAIN_STREAM: u64 = 0x7270_0001;
const ESTIMATE_STREAM: u64 = 0x7270_0002;
const EVAL_STREAM: u64 = 0x7270_0003;
const FOREST_STREAM: u64 = 0x7270_0004;
const DELTA_STREAM: u64 = 0x7270_0005;
const REPLICATE_STREAM: u64 = 0x7270_0006;

/// How many features each forest split considers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtryRule {
    All,
    Sqrt,
}

impl MtryRule {
    pub fn resolve(&self, p: usize) -> usize {
        match self {
            MtryRule::All => p.max(1),
            MtryRule::Sqrt => (p as f64).sqrt().ceil() as usize,
        }
    }
}

/// A named probability-estimation configuration: the jackknife sampler
/// with all features per split (m1), the jackknife sampler with sqrt(p)
/// features (m2), or the bootstrap-of-forests sampler with sqrt(p)
/// features (m3).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineMethod {
    pub prob: ProbMethod,
    pub mtry: MtryRule,
}

impl PipelineMethod {
    pub const M1: PipelineMethod = PipelineMethod {
        prob: ProbMethod::Jackknife,
        mtry: MtryRule::All,
    };
    pub const M2: PipelineMethod = PipelineMethod {
        prob: ProbMethod::Jackknife,
        mtry: MtryRule::Sqrt,
    };
    pub const M3: PipelineMethod = PipelineMethod {
        prob: ProbMethod::Bootstrap,
        mtry: MtryRule::Sqrt,
    };

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "m1" => Ok(Self::M1),
            "m2" => Ok(Self::M2),
            "m3" => Ok(Self::M3),
            other => Err(Error::Config(format!(
                "unknown pipeline method '{other}' (expected m1, m2 or m3)"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match (self.prob, self.mtry) {
            (ProbMethod::Jackknife, MtryRule::All) => "m1",
            (ProbMethod::Jackknife, MtryRule::Sqrt) => "m2",
            (ProbMethod::Bootstrap, MtryRule::Sqrt) => "m3",
            (ProbMethod::Bootstrap, MtryRule::All) => "bootstrap-all",
        }
    }
}

/// One full experiment grid.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub models: Vec<SimModelId>,
    pub sizes: Vec<usize>,
    pub methods: Vec<PipelineMethod>,
    pub grow_method: GrowthMethod,
    pub replicates: usize,
    pub base_seed: u64,
    /// Effect-sample count B.
    pub samples_b: usize,
    pub num_trees: usize,
    pub alpha: f64,
    /// Score the multinomial decision rule by sampling instead of its
    /// exact expectation.
    pub delta_sampling: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            models: vec![SimModelId::M1],
            sizes: vec![300],
            methods: vec![PipelineMethod::M1],
            grow_method: GrowthMethod::Full,
            replicates: 5,
            base_seed: 1,
            samples_b: 500,
            num_trees: 100,
            alpha: 0.05,
            delta_sampling: false,
        }
    }
}

impl ExperimentConfig {
    /// Parses a flat `key=value` config. Keys: `models`, `n`, `methods`,
    /// `grow`, `replicates`, `seed`, `b`, `trees`, `alpha`, `delta`.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        let parse_usize = |key: &str, value: &str| -> Result<usize> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("{key} must be an integer, got '{value}'")))
        };
        for (key, value) in parse_kv_pairs(text)? {
            match key.as_str() {
                "models" => {
                    config.models = value
                        .split(',')
                        .map(|s| SimModelId::parse(s.trim()))
                        .collect::<Result<Vec<_>>>()?;
                }
                "n" => {
                    config.sizes = value
                        .split(',')
                        .map(|s| parse_usize("n", s.trim()))
                        .collect::<Result<Vec<_>>>()?;
                }
                "methods" => {
                    config.methods = value
                        .split(',')
                        .map(|s| PipelineMethod::parse(s.trim()))
                        .collect::<Result<Vec<_>>>()?;
                }
                "grow" => {
                    config.grow_method = match value.as_str() {
                        "full" => GrowthMethod::Full,
                        "preprune" => GrowthMethod::Preprune,
                        other => {
                            return Err(Error::Config(format!(
                                "grow must be full or preprune, got '{other}'"
                            )))
                        }
                    };
                }
                "replicates" => config.replicates = parse_usize("replicates", &value)?,
                "seed" => {
                    config.base_seed = value.parse().map_err(|_| {
                        Error::Config(format!("seed must be an integer, got '{value}'"))
                    })?;
                }
                "b" => config.samples_b = parse_usize("b", &value)?,
                "trees" => config.num_trees = parse_usize("trees", &value)?,
                "alpha" => {
                    config.alpha = value.parse().map_err(|_| {
                        Error::Config(format!("alpha must be a number, got '{value}'"))
                    })?;
                }
                "delta" => {
                    config.delta_sampling = match value.as_str() {
                        "exact" => false,
                        "sampled" => true,
                        other => {
                            return Err(Error::Config(format!(
                                "delta must be exact or sampled, got '{other}'"
                            )))
                        }
                    };
                }
                other => return Err(Error::Config(format!("unknown experiment key '{other}'"))),
            }
        }
        if config.models.is_empty() || config.sizes.is_empty() || config.methods.is_empty() {
            return Err(Error::Config(
                "experiment needs at least one model, one n and one method".into(),
            ));
        }
        if config.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        Ok(config)
    }
}

/// Everything one replicate produces.
pub struct ReplicateArtifacts {
    pub probabilities: ProbabilityMatrix,
    pub tree: PsicaTree,
    pub metrics: MetricsReport,
}

/// One full pipeline pass: draw a training sample, estimate best-treatment
/// probabilities, grow the tree, then score it against a fresh sample of
/// the same size.
#[allow(clippy::too_many_arguments)]
pub fn run_replicate(
    model: SimModelId,
    n: usize,
    method: PipelineMethod,
    grow_method: GrowthMethod,
    samples_b: usize,
    num_trees: usize,
    alpha: f64,
    delta_sampling: bool,
    seed: u64,
) -> Result<ReplicateArtifacts> {
    let (train, _) = generate_model(model, n, derive_seed(seed, &[TRAIN_STREAM]))?;
    let p = train.n_features();
    let forest_params = ForestParams {
        num_trees,
        mtry: method.mtry.resolve(p),
        min_split: (n / 10).max(2),
        max_depth: None,
        seed: derive_seed(seed, &[FOREST_STREAM]),
    };
    let probabilities = estimate_probabilities(
        &train,
        method.prob,
        samples_b,
        &forest_params,
        derive_seed(seed, &[ESTIMATE_STREAM]),
    )?;
    let grow_config = GrowConfig {
        method: grow_method,
        alpha,
        min_leaf: (n / 5).max(1),
        max_depth: None,
        costs: CostMatrix::zero_one(train.n_treatments()),
        omega_max: DEFAULT_OMEGA_MAX,
    };
    let tree = grow(
        &probabilities,
        train.features(),
        train.treatment_names(),
        &grow_config,
    )?;

    let (eval_data, eval_oracle) = generate_model(model, n, derive_seed(seed, &[EVAL_STREAM]))?;
    let relevant = model.relevant_features();
    let mut metrics = metrics::evaluate(&tree, eval_data.features(), &eval_oracle, &relevant)?;
    if delta_sampling {
        let mut rng = stream(seed, &[DELTA_STREAM]);
        metrics.decision_accuracy = metrics::decision_accuracy_sampled(
            &tree,
            eval_data.features(),
            &eval_oracle,
            &mut rng,
        )?;
    }
    Ok(ReplicateArtifacts {
        probabilities,
        tree,
        metrics,
    })
}

/// One row of the raw experiment log.
#[derive(Debug, Clone)]
pub struct ReplicateRecord {
    pub model: SimModelId,
    pub n: usize,
    pub method: PipelineMethod,
    pub replicate: usize,
    pub seed: u64,
    pub outcome: std::result::Result<MetricsReport, String>,
}

/// Mean and standard error of one metric over successful replicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

fn mean_se(values: &[f64]) -> MeanSe {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let se = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    MeanSe { mean, se }
}

#[derive(Debug, Clone)]
pub struct CellSummary {
    pub model: SimModelId,
    pub n: usize,
    pub method: PipelineMethod,
    pub replicates: usize,
    pub failures: usize,
    pub accuracy: MeanSe,
    pub uncertainty: MeanSe,
    pub suspect: MeanSe,
    pub decision_accuracy: MeanSe,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub records: Vec<ReplicateRecord>,
    pub cells: Vec<CellSummary>,
}

impl ExperimentReport {
    /// Raw log, one line per replicate.
    pub fn raw_csv(&self) -> String {
        let mut out =
            String::from("model,n,method,replicate,seed,status,accuracy,uncertainty,suspect,decision_accuracy,error\n");
        for r in &self.records {
            match &r.outcome {
                Ok(m) => out.push_str(&format!(
                    "{},{},{},{},{},ok,{},{},{},{},\n",
                    r.model.name(),
                    r.n,
                    r.method.label(),
                    r.replicate,
                    r.seed,
                    m.accuracy,
                    m.uncertainty,
                    m.suspect,
                    m.decision_accuracy
                )),
                Err(e) => out.push_str(&format!(
                    "{},{},{},{},{},failed,,,,,\"{}\"\n",
                    r.model.name(),
                    r.n,
                    r.method.label(),
                    r.replicate,
                    r.seed,
                    e.replace('"', "'")
                )),
            }
        }
        out
    }

    /// Per-cell summary table with means and standard errors.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "model,n,method,replicates,failures,accuracy_mean,accuracy_se,uncertainty_mean,uncertainty_se,suspect_mean,suspect_se,decision_accuracy_mean,decision_accuracy_se\n",
        );
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                c.model.name(),
                c.n,
                c.method.label(),
                c.replicates,
                c.failures,
                c.accuracy.mean,
                c.accuracy.se,
                c.uncertainty.mean,
                c.uncertainty.se,
                c.suspect.mean,
                c.suspect.se,
                c.decision_accuracy.mean,
                c.decision_accuracy.se
            ));
        }
        out
    }

    /// Human-readable summary in the style of the benchmark tables.
    pub fn summary_text(&self) -> String {
        let mut out = String::from(
            "model      n  method  reps  fail  accuracy        uncertainty     suspect         decision\n",
        );
        for c in &self.cells {
            let fmt = |m: MeanSe| format!("{:.2} ({:.3})", m.mean, m.se);
            out.push_str(&format!(
                "{:<6} {:>5}  {:<6}  {:>4}  {:>4}  {:<14}  {:<14}  {:<14}  {:<14}\n",
                c.model.name(),
                c.n,
                c.method.label(),
                c.replicates,
                c.failures,
                fmt(c.accuracy),
                fmt(c.uncertainty),
                fmt(c.suspect),
                fmt(c.decision_accuracy)
            ));
        }
        out
    }

    pub fn cell(&self, model: SimModelId, n: usize, method: PipelineMethod) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.n == n && c.method == method)
    }
}

/// Runs the full grid. Replicates run in parallel with per-replicate
/// seeds; a failed replicate is recorded in the log and does not stop the
/// rest of the grid.
pub fn run_experiment(config: &ExperimentConfig) -> ExperimentReport {
    let mut jobs = Vec::new();
    for &model in &config.models {
        for &n in &config.sizes {
            for &method in &config.methods {
                for replicate in 0..config.replicates {
                    jobs.push((model, n, method, replicate));
                }
            }
        }
    }

    let records: Vec<ReplicateRecord> = jobs
        .par_iter()
        .map(|&(model, n, method, replicate)| {
            let seed = derive_seed(
                config.base_seed,
                &[
                    REPLICATE_STREAM,
                    model as u64,
                    n as u64,
                    method.prob.tag() as u64,
                    method.mtry.resolve(97) as u64,
                    replicate as u64,
                ],
            );
            let outcome = run_replicate(
                model,
                n,
                method,
                config.grow_method,
                config.samples_b,
                config.num_trees,
                config.alpha,
                config.delta_sampling,
                seed,
            )
            .map(|artifacts| artifacts.metrics)
            .map_err(|e| e.to_string());
            ReplicateRecord {
                model,
                n,
                method,
                replicate,
                seed,
                outcome,
            }
        })
        .collect();

    let mut cells = Vec::new();
    for &model in &config.models {
        for &n in &config.sizes {
            for &method in &config.methods {
                let cell_records: Vec<&ReplicateRecord> = records
                    .iter()
                    .filter(|r| r.model == model && r.n == n && r.method == method)
                    .collect();
                let successes: Vec<&MetricsReport> = cell_records
                    .iter()
                    .filter_map(|r| r.outcome.as_ref().ok())
                    .collect();
                let failures = cell_records.len() - successes.len();
                let collect = |f: fn(&MetricsReport) -> f64| -> Vec<f64> {
                    successes.iter().map(|m| f(m)).collect()
                };
                let zero = MeanSe { mean: 0.0, se: 0.0 };
                let (accuracy, uncertainty, suspect, decision_accuracy) = if successes.is_empty() {
                    (zero, zero, zero, zero)
                } else {
                    (
                        mean_se(&collect(|m| m.accuracy)),
                        mean_se(&collect(|m| m.uncertainty)),
                        mean_se(&collect(|m| m.suspect)),
                        mean_se(&collect(|m| m.decision_accuracy)),
                    )
                };
                cells.push(CellSummary {
                    model,
                    n,
                    method,
                    replicates: cell_records.len(),
                    failures,
                    accuracy,
                    uncertainty,
                    suspect,
                    decision_accuracy,
                });
            }
        }
    }
    ExperimentReport { records, cells }
}
