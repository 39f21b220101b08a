//! Synthetic benchmark models with analytic best-treatment oracles.
//!
//! Six simulation models (two to four treatment arms, numeric and
//! categorical features, normal and Laplace noise) plus the three-line
//! linear demo used for the end-to-end example. Every model pads its
//! relevant features with irrelevant uniform noise columns, and exposes
//! its noise-free mean effect so the true best-treatment set is computable
//! exactly, ties included.

mod metrics;
mod runner;

pub use metrics::{
    accuracy, decision_accuracy, decision_accuracy_sampled, evaluate, suspect, uncertainty,
    MetricsReport,
};
pub use runner::{
    run_experiment, run_replicate, CellSummary, ExperimentConfig, MtryRule, PipelineMethod,
    ReplicateArtifacts, ReplicateRecord,
};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{
    Dataset, Feature, FeatureColumn, FeatureKind, FeatureSchema, FeatureTable, TreatmentSet, Value,
};
use crate::error::{Error, Result};
use crate::rng::stream;

const GENERATE_STREAM: u64 = 0x6576_0001;

/// The benchmark models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SimModelId {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
    /// Three linear effects A/B/C over one feature; the plotted demo.
    Fig1,
}

#[derive(Debug, Clone, Copy)]
enum Noise {
    Normal { sd: f64 },
    Laplace { scale: f64 },
}

impl Noise {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Noise::Normal { sd } => sd * rng.sample::<f64, _>(StandardNormal),
            Noise::Laplace { scale } => {
                let u: f64 = rng.gen::<f64>() - 0.5;
                let tail = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
                -scale * u.signum() * tail.ln()
            }
        }
    }
}

impl SimModelId {
    pub const ALL: [SimModelId; 7] = [
        SimModelId::M1,
        SimModelId::M2,
        SimModelId::M3,
        SimModelId::M4,
        SimModelId::M5,
        SimModelId::M6,
        SimModelId::Fig1,
    ];

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "m1" => Ok(SimModelId::M1),
            "m2" => Ok(SimModelId::M2),
            "m3" => Ok(SimModelId::M3),
            "m4" => Ok(SimModelId::M4),
            "m5" => Ok(SimModelId::M5),
            "m6" => Ok(SimModelId::M6),
            "fig1" | "demo" => Ok(SimModelId::Fig1),
            other => Err(Error::Config(format!(
                "unknown simulation model '{other}' (expected m1..m6 or fig1)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SimModelId::M1 => "m1",
            SimModelId::M2 => "m2",
            SimModelId::M3 => "m3",
            SimModelId::M4 => "m4",
            SimModelId::M5 => "m5",
            SimModelId::M6 => "m6",
            SimModelId::Fig1 => "fig1",
        }
    }

    pub fn n_treatments(&self) -> usize {
        match self {
            SimModelId::M1 | SimModelId::M2 | SimModelId::M3 | SimModelId::M4 => 2,
            SimModelId::M5 | SimModelId::Fig1 => 3,
            SimModelId::M6 => 4,
        }
    }

    pub fn treatment_names(&self) -> Vec<String> {
        match self {
            SimModelId::Fig1 => vec!["A".into(), "B".into(), "C".into()],
            _ => (1..=self.n_treatments())
                .map(|k| format!("tau{k}"))
                .collect(),
        }
    }

    /// Number of leading feature columns the model actually uses
    /// (including the categorical column of M6).
    pub fn relevant_feature_count(&self) -> usize {
        match self {
            SimModelId::M1 | SimModelId::M5 | SimModelId::Fig1 => 1,
            SimModelId::M2 | SimModelId::M3 => 2,
            SimModelId::M4 => 40,
            SimModelId::M6 => 41,
        }
    }

    pub fn irrelevant_feature_count(&self) -> usize {
        match self {
            SimModelId::Fig1 => 0,
            SimModelId::M4 | SimModelId::M6 => 160,
            _ => 2,
        }
    }

    pub fn relevant_features(&self) -> Vec<usize> {
        (0..self.relevant_feature_count()).collect()
    }

    fn noise(&self) -> Noise {
        match self {
            SimModelId::M1 => Noise::Normal { sd: 0.8 },
            SimModelId::M2 => Noise::Normal { sd: 0.2 },
            SimModelId::M3 => Noise::Laplace { scale: 0.2 },
            SimModelId::M4 | SimModelId::M6 => Noise::Normal { sd: 2.0 },
            SimModelId::M5 => Noise::Normal { sd: 0.2 },
            SimModelId::Fig1 => Noise::Normal { sd: 0.1 },
        }
    }

    pub fn schema(&self) -> FeatureSchema {
        let mut features = Vec::new();
        if *self == SimModelId::M6 {
            features.push(Feature {
                name: "x0".into(),
                kind: FeatureKind::Categorical {
                    levels: vec!["K1".into(), "K2".into(), "K3".into(), "K4".into()],
                },
            });
        }
        let numeric_relevant = match self {
            SimModelId::M6 => 40,
            _ => self.relevant_feature_count(),
        };
        for j in 1..=numeric_relevant {
            features.push(Feature {
                name: format!("x{j}"),
                kind: FeatureKind::Numeric,
            });
        }
        for j in 1..=self.irrelevant_feature_count() {
            features.push(Feature {
                name: format!("z{j}"),
                kind: FeatureKind::Numeric,
            });
        }
        FeatureSchema::new(features).expect("model schema is valid")
    }

    fn numeric(features: &FeatureTable, row: usize, col: usize) -> f64 {
        match features.value(row, col) {
            Value::Num(v) => v,
            Value::Cat(_) => panic!("expected numeric column {col}"),
        }
    }

    /// Shared main effect (zero for all but M4/M6, which sum their first
    /// 40 numeric features).
    fn baseline(&self, features: &FeatureTable, row: usize) -> f64 {
        match self {
            SimModelId::M4 => (0..40)
                .map(|j| Self::numeric(features, row, j))
                .sum(),
            SimModelId::M6 => (1..=40)
                .map(|j| Self::numeric(features, row, j))
                .sum(),
            _ => 0.0,
        }
    }

    /// The treatment-specific effect component. True best sets come from
    /// this term alone, so exact ties (shared or zero terms) stay exact.
    fn treatment_term(&self, features: &FeatureTable, row: usize, k: usize) -> f64 {
        match self {
            SimModelId::M1 => {
                let x = Self::numeric(features, row, 0);
                match k {
                    0 => 2.0 * (2.0 * x).tanh() + 3.0,
                    _ => 2.0 * x.tanh() + 2.3,
                }
            }
            SimModelId::M2 | SimModelId::M3 => {
                let x1 = Self::numeric(features, row, 0);
                let x2 = Self::numeric(features, row, 1);
                match k {
                    0 if x1 >= 0.0 && x2 >= 0.0 => 0.5,
                    1 if x1 < 0.0 && x2 < 0.0 => 0.5,
                    _ => 0.0,
                }
            }
            SimModelId::M4 => {
                let x1 = Self::numeric(features, row, 0);
                let x2 = Self::numeric(features, row, 1);
                match k {
                    0 if x1 > 0.5 => 5.0 * x1,
                    1 if x1 < 0.5 && x2 > 0.5 => 5.0,
                    _ => 0.0,
                }
            }
            SimModelId::M5 => {
                let x = Self::numeric(features, row, 0);
                match k {
                    0 => -0.7 * x - 0.7,
                    1 => -1.5 * x - 1.1,
                    _ => x - 1.0,
                }
            }
            SimModelId::M6 => {
                let x0 = match features.value(row, 0) {
                    Value::Cat(code) => code,
                    Value::Num(_) => panic!("x0 must be categorical"),
                };
                let x1 = Self::numeric(features, row, 1);
                match k {
                    0 | 1 if x1 > 0.5 => 5.0 * x1,
                    2 if x1 < 0.0 && x0 == 0 => 10.0,
                    _ => 0.0,
                }
            }
            SimModelId::Fig1 => {
                let x = Self::numeric(features, row, 0);
                match k {
                    0 => -0.7 * x,
                    1 => -1.5 * x + 0.2,
                    _ => x - 1.0,
                }
            }
        }
    }

    /// Noise-free expected effect of treatment `k` at one feature row.
    pub fn mean_effect(&self, features: &FeatureTable, row: usize, k: usize) -> f64 {
        self.baseline(features, row) + self.treatment_term(features, row, k)
    }

    /// All treatments attaining the maximal noise-free effect at this row.
    pub fn true_best_set(&self, features: &FeatureTable, row: usize) -> TreatmentSet {
        let m = self.n_treatments();
        let terms: Vec<f64> = (0..m)
            .map(|k| self.treatment_term(features, row, k))
            .collect();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        TreatmentSet::from_indices((0..m).filter(|&k| terms[k] == max))
    }
}

/// True best-treatment sets for each row of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleLabel {
    best: Vec<TreatmentSet>,
}

impl OracleLabel {
    pub fn new(best: Vec<TreatmentSet>) -> Self {
        OracleLabel { best }
    }

    pub fn len(&self) -> usize {
        self.best.len()
    }

    pub fn is_empty(&self) -> bool {
        self.best.is_empty()
    }

    pub fn best(&self, row: usize) -> TreatmentSet {
        self.best[row]
    }

    pub fn sets(&self) -> &[TreatmentSet] {
        &self.best
    }
}

/// Draws `n` observations from the model: features uniform on [-1, 1]
/// (M6's categorical column uniform over its four levels), treatments
/// uniformly randomized, effects with the model's additive noise.
/// Reproducible bit-exactly per seed.
pub fn generate_model(id: SimModelId, n: usize, seed: u64) -> Result<(Dataset, OracleLabel)> {
    if n == 0 {
        return Err(Error::InvalidParam("n must be at least 1".into()));
    }
    let schema = id.schema();
    let p = schema.len();
    let m = id.n_treatments();
    let mut rng = stream(seed, &[GENERATE_STREAM]);

    let mut columns: Vec<FeatureColumn> = schema
        .features()
        .iter()
        .map(|f| match f.kind {
            FeatureKind::Categorical { .. } => FeatureColumn::Categorical(Vec::with_capacity(n)),
            _ => FeatureColumn::Numeric(Vec::with_capacity(n)),
        })
        .collect();
    let mut treatments = Vec::with_capacity(n);
    let mut noise_draws = Vec::with_capacity(n);
    let noise = id.noise();
    for _ in 0..n {
        for column in columns.iter_mut().take(p) {
            match column {
                FeatureColumn::Numeric(v) => v.push(rng.gen_range(-1.0..1.0)),
                FeatureColumn::Categorical(v) => v.push(rng.gen_range(0..4u32)),
            }
        }
        treatments.push(rng.gen_range(0..m) as u32);
        noise_draws.push(noise.sample(&mut rng));
    }

    let features = FeatureTable::new(schema, columns)?;
    let effects: Vec<f64> = (0..n)
        .map(|i| id.mean_effect(&features, i, treatments[i] as usize) + noise_draws[i])
        .collect();
    let best: Vec<TreatmentSet> = (0..n).map(|i| id.true_best_set(&features, i)).collect();
    let dataset = Dataset::new(features, effects, treatments, id.treatment_names())?;
    Ok((dataset, OracleLabel::new(best)))
}
