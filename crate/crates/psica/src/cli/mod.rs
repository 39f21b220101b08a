//! Command implementations behind the `psica` binary.
//!
//! Each command takes a plain config struct and returns its printable
//! summary, so the same entry points serve the CLI, tests and foreign
//! bindings. All file outputs are written atomically.

use std::path::{Path, PathBuf};

use crate::bestprob::{estimate_probabilities, ProbMethod};
use crate::dataset::{
    atomic_write, load_feature_table, load_table, write_table, Dataset, TableSchema, TreatmentSet,
};
use crate::error::{Error, Result};
use crate::evalsim::{
    self, generate_model, run_experiment, ExperimentConfig, MtryRule, OracleLabel, SimModelId,
};
use crate::forest::{fit_forest, ForestParams};
use crate::psicatree::{
    grow, CostMatrix, GrowConfig, GrowthMethod, PsicaTree, DEFAULT_OMEGA_MAX,
};
use crate::rng::derive_seed;

const FIT_FOREST_STREAM: u64 = 0x636c_0001;
const FIT_ESTIMATE_STREAM: u64 = 0x636c_0002;

/// Above this many forest fits (B x arms x trees), the bootstrap method
/// gets a cost warning.
pub const BOOTSTRAP_COST_CEILING: usize = 200_000;

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub struct SimulateArgs {
    pub model: SimModelId,
    pub n: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// File pair written by `simulate`.
pub fn simulate_paths(out_dir: &Path, model: SimModelId) -> (PathBuf, PathBuf) {
    (
        out_dir.join(format!("{}_data.csv", model.name())),
        out_dir.join(format!("{}_oracle.csv", model.name())),
    )
}

fn oracle_csv(oracle: &OracleLabel, names: &[String]) -> String {
    let mut out = String::from("row,best\n");
    for (i, set) in oracle.sets().iter().enumerate() {
        let labels: Vec<&str> = set.iter().map(|k| names[k].as_str()).collect();
        out.push_str(&format!("{},{}\n", i + 1, labels.join("|")));
    }
    out
}

fn parse_oracle_csv(text: &str, names: &[String]) -> Result<OracleLabel> {
    let mut sets = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((_, best)) = line.split_once(',') else {
            return Err(Error::Config(format!(
                "oracle line {}: expected 'row,best'",
                lineno + 1
            )));
        };
        let mut set = TreatmentSet::empty();
        for label in best.split('|').filter(|s| !s.is_empty()) {
            let k = names.iter().position(|n| n == label).ok_or_else(|| {
                Error::Config(format!("oracle names unknown treatment '{label}'"))
            })?;
            set.insert(k);
        }
        if set.is_empty() {
            return Err(Error::Config(format!(
                "oracle line {} has an empty best set",
                lineno + 1
            )));
        }
        sets.push(set);
    }
    Ok(OracleLabel::new(sets))
}

/// Writes `<model>_data.csv` and `<model>_oracle.csv` under the output
/// directory.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<String> {
    let (dataset, oracle) = generate_model(args.model, args.n, args.seed)?;
    let (data_path, oracle_path) = simulate_paths(&args.out_dir, args.model);
    write_table(&dataset, "treatment", "effect", &data_path)?;
    atomic_write(
        &oracle_path,
        oracle_csv(&oracle, dataset.treatment_names()).as_bytes(),
    )?;
    Ok(format!(
        "wrote {} rows to {} and oracle labels to {}",
        dataset.n_rows(),
        data_path.display(),
        oracle_path.display()
    ))
}

#[derive(Debug, Clone)]
pub struct FitArgs {
    pub data: PathBuf,
    pub schema: TableSchema,
    pub prob_method: ProbMethod,
    pub grow_method: GrowthMethod,
    pub alpha: f64,
    pub samples_b: usize,
    pub num_trees: usize,
    pub mtry: MtryRule,
    pub min_leaf: Option<usize>,
    pub max_depth: Option<usize>,
    pub costs: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    pub probs_out: Option<PathBuf>,
    pub forests_out: Option<PathBuf>,
}

impl FitArgs {
    pub fn new(data: impl Into<PathBuf>, schema: TableSchema, out: impl Into<PathBuf>) -> Self {
        FitArgs {
            data: data.into(),
            schema,
            prob_method: ProbMethod::Jackknife,
            grow_method: GrowthMethod::Full,
            alpha: 0.05,
            samples_b: 500,
            num_trees: 100,
            mtry: MtryRule::All,
            min_leaf: None,
            max_depth: None,
            costs: None,
            seed: 1,
            out: out.into(),
            probs_out: None,
            forests_out: None,
        }
    }
}

fn load_costs(path: &Path, m: usize) -> Result<CostMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::Config(format!("cannot read cost matrix {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row: Vec<f64> = record
            .iter()
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::Config(format!("cost matrix cell '{cell}' is not a number"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.len() != m {
        return Err(Error::Config(format!(
            "cost matrix has {} rows but the data has {m} treatments",
            rows.len()
        )));
    }
    CostMatrix::from_rows(rows)
}

/// Fits a PSICA tree to a data file and persists the tree interchange
/// document (plus, optionally, the probability matrix and the per-arm
/// forests). Returns the leaf summary table.
pub fn cmd_fit(args: &FitArgs) -> Result<String> {
    let dataset = load_table(&args.data, &args.schema)?;
    let n = dataset.n_rows();
    let m = dataset.n_treatments();

    let fits = args.samples_b.saturating_mul(m).saturating_mul(args.num_trees);
    if args.prob_method == ProbMethod::Bootstrap && fits > BOOTSTRAP_COST_CEILING {
        eprintln!(
            "warning: bootstrap probabilities need {fits} forest-tree fits \
             (B={} x {m} arms x {} trees); consider --method-prob jackknife",
            args.samples_b, args.num_trees
        );
    }

    let forest_params = ForestParams {
        num_trees: args.num_trees,
        mtry: args.mtry.resolve(dataset.n_features()),
        min_split: (n / 10).max(2),
        max_depth: None,
        seed: derive_seed(args.seed, &[FIT_FOREST_STREAM]),
    };
    let probabilities = estimate_probabilities(
        &dataset,
        args.prob_method,
        args.samples_b,
        &forest_params,
        derive_seed(args.seed, &[FIT_ESTIMATE_STREAM]),
    )?;

    let costs = match &args.costs {
        Some(path) => load_costs(path, m)?,
        None => CostMatrix::zero_one(m),
    };
    let config = GrowConfig {
        method: args.grow_method,
        alpha: args.alpha,
        min_leaf: args.min_leaf.unwrap_or((n / 5).max(1)),
        max_depth: args.max_depth,
        costs,
        omega_max: DEFAULT_OMEGA_MAX,
    };
    let tree = grow(
        &probabilities,
        dataset.features(),
        dataset.treatment_names(),
        &config,
    )?;

    atomic_write(&args.out, tree.to_json()?.as_bytes())?;
    if let Some(path) = &args.probs_out {
        atomic_write(path, probabilities.to_csv(dataset.treatment_names()).as_bytes())?;
    }
    if let Some(dir) = &args.forests_out {
        let arms = dataset.partition_by_treatment()?;
        for (k, arm) in arms.iter().enumerate() {
            let params = ForestParams {
                seed: derive_seed(forest_params.seed, &[k as u64]),
                ..forest_params.clone()
            };
            let forest = fit_forest(arm, &params)?;
            let path = dir.join(format!("forest_{}.json", dataset.treatment_names()[k]));
            atomic_write(&path, forest.to_json()?.as_bytes())?;
        }
    }

    Ok(format!(
        "fitted tree with {} leaves over {n} rows, saved to {}\n{}",
        tree.leaf_count(),
        args.out.display(),
        tree.leaf_table()
    ))
}

pub struct PredictArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub out: Option<PathBuf>,
}

fn prediction_csv(tree: &PsicaTree, table: &crate::dataset::FeatureTable) -> Result<String> {
    let assignments = tree.leaf_assignments(table)?;
    let leaves = tree.leaves();
    let mut out = String::from("row,leaf,potential");
    for name in tree.treatments() {
        out.push_str(&format!(",trunc_{name}"));
    }
    out.push('\n');
    for (row, &leaf) in assignments.iter().enumerate() {
        let summary = leaves[leaf];
        let labels: Vec<&str> = summary
            .potential
            .iter()
            .map(|k| tree.treatments()[k].as_str())
            .collect();
        out.push_str(&format!("{},{},{}", row + 1, leaf + 1, labels.join("|")));
        for v in &summary.trunc_probs {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Routes every row of a feature table through a saved tree.
pub fn cmd_predict(args: &PredictArgs) -> Result<String> {
    let tree = PsicaTree::from_json(&read_to_string(&args.model)?)?;
    let table = load_feature_table(&args.data, tree.schema())?;
    let csv = prediction_csv(&tree, &table)?;
    match &args.out {
        Some(path) => {
            atomic_write(path, csv.as_bytes())?;
            Ok(format!(
                "predicted {} rows into {}",
                table.n_rows(),
                path.display()
            ))
        }
        None => Ok(csv),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Graph,
    Interchange,
}

pub struct ExportArgs {
    pub model: PathBuf,
    pub format: ExportFormat,
    pub out: Option<PathBuf>,
}

/// Re-emits a saved tree as Graphviz text or as its interchange document.
pub fn cmd_export(args: &ExportArgs) -> Result<String> {
    let tree = PsicaTree::from_json(&read_to_string(&args.model)?)?;
    let rendered = match args.format {
        ExportFormat::Graph => tree.to_dot(),
        ExportFormat::Interchange => tree.to_json()?,
    };
    match &args.out {
        Some(path) => {
            atomic_write(path, rendered.as_bytes())?;
            Ok(format!("exported to {}", path.display()))
        }
        None => Ok(rendered),
    }
}

pub struct ExperimentArgs {
    pub config: PathBuf,
    pub out_dir: PathBuf,
}

/// Runs a benchmark grid from a key=value config file; writes the raw
/// replicate log, the summary table and a readable summary.
pub fn cmd_experiment(args: &ExperimentArgs) -> Result<String> {
    let config = ExperimentConfig::from_kv_text(&read_to_string(&args.config)?)?;
    let report = run_experiment(&config);
    atomic_write(args.out_dir.join("raw.csv"), report.raw_csv().as_bytes())?;
    atomic_write(
        args.out_dir.join("summary.csv"),
        report.summary_csv().as_bytes(),
    )?;
    let text = report.summary_text();
    atomic_write(args.out_dir.join("summary.txt"), text.as_bytes())?;
    let failures: usize = report.cells.iter().map(|c| c.failures).sum();
    Ok(format!(
        "{text}\n{} replicates ({failures} failed), reports in {}",
        report.records.len(),
        args.out_dir.display()
    ))
}

pub struct EvaluateArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub oracle: PathBuf,
    /// Feature names counted as relevant for the suspect metric.
    pub relevant: Option<Vec<String>>,
}

/// Scores a saved tree against a data file and its oracle labels.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<String> {
    let tree = PsicaTree::from_json(&read_to_string(&args.model)?)?;
    let table = load_feature_table(&args.data, tree.schema())?;
    let oracle = parse_oracle_csv(&read_to_string(&args.oracle)?, &tree.treatments().to_vec())?;

    let accuracy = evalsim::accuracy(&tree, &table, &oracle)?;
    let uncertainty = evalsim::uncertainty(&tree, &table, &oracle)?;
    let delta = evalsim::decision_accuracy(&tree, &table, &oracle)?;
    let mut out = format!(
        "accuracy: {accuracy:.4}\nuncertainty: {uncertainty:.4}\ndecision_accuracy: {delta:.4}\n"
    );
    if let Some(names) = &args.relevant {
        let mut relevant = Vec::new();
        for name in names {
            let idx = tree
                .schema()
                .index_of(name)
                .ok_or_else(|| Error::Config(format!("unknown feature '{name}'")))?;
            relevant.push(idx);
        }
        out.push_str(&format!(
            "suspect: {:.4}\n",
            evalsim::suspect(&tree, &relevant)
        ));
    }
    Ok(out)
}

/// Helper shared by the binary and tests: dataset loaded from the two
/// files `simulate` writes.
pub fn load_simulated(
    out_dir: &Path,
    model: SimModelId,
) -> Result<(Dataset, OracleLabel)> {
    let (data_path, oracle_path) = simulate_paths(out_dir, model);
    let mut schema = TableSchema::new("treatment", "effect");
    schema.treatments = Some(model.treatment_names());
    for feature in model.schema().features() {
        schema = schema.with_feature(feature.name.clone(), feature.kind.clone());
    }
    let dataset = load_table(&data_path, &schema)?;
    let oracle = parse_oracle_csv(&read_to_string(&oracle_path)?, dataset.treatment_names())?;
    Ok((dataset, oracle))
}
