use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use psica::bestprob::ProbMethod;
use psica::cli::{
    cmd_evaluate, cmd_experiment, cmd_export, cmd_fit, cmd_predict, cmd_simulate, EvaluateArgs,
    ExperimentArgs, ExportArgs, ExportFormat, FitArgs, PredictArgs, SimulateArgs,
};
use psica::dataset::{parse_feature_kind, TableSchema};
use psica::error::{Error, Result};
use psica::evalsim::{MtryRule, SimModelId};
use psica::psicatree::GrowthMethod;

/// Probabilistic subgroup identification for categorical treatments.
#[derive(Parser)]
#[command(name = "psica", version, about)]
struct Cli {
    /// Worker threads (0 = all cores). The PSICA_THREADS environment
    /// variable overrides this flag.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(ValueEnum, Clone, Copy)]
enum ProbMethodArg {
    /// Refit a forest per bootstrap replicate and arm (method 1).
    Bootstrap,
    /// One forest per arm with infinitesimal-jackknife variance (method 2).
    Jackknife,
}

#[derive(ValueEnum, Clone, Copy)]
enum GrowMethodArg {
    /// Grow on raw information gain (method 3).
    Full,
    /// Mask candidate splits by the chi-square test (method 4).
    Preprune,
}

#[derive(ValueEnum, Clone, Copy)]
enum MtryArg {
    /// Consider every feature at each forest split.
    All,
    /// Consider ceil(sqrt(p)) features at each forest split.
    Sqrt,
}

#[derive(ValueEnum, Clone, Copy)]
enum FormatArg {
    /// Graphviz DOT text.
    Graph,
    /// The JSON interchange document.
    Interchange,
}

#[derive(Args)]
struct SchemaFlags {
    /// Flat key=value schema file (treatment_col, effect_col,
    /// feature.<name>=..., treatments=...).
    #[arg(long)]
    schema: Option<PathBuf>,

    /// Name of the treatment column.
    #[arg(long, default_value = "treatment")]
    treatment_col: String,

    /// Name of the effect column.
    #[arg(long, default_value = "effect")]
    effect_col: String,

    /// Feature kind override, repeatable: name=numeric|ordinal|
    /// categorical|categorical(L1,L2). Unlisted columns are numeric.
    #[arg(long = "feature", value_name = "NAME=KIND")]
    features: Vec<String>,

    /// Declared treatment order, comma-separated.
    #[arg(long, value_delimiter = ',')]
    treatments: Option<Vec<String>>,
}

impl SchemaFlags {
    fn build(&self) -> Result<TableSchema> {
        let mut schema = match &self.schema {
            Some(path) => TableSchema::from_kv_file(path)?,
            None => TableSchema::new(self.treatment_col.clone(), self.effect_col.clone()),
        };
        for spec in &self.features {
            let Some((name, kind)) = spec.split_once('=') else {
                return Err(Error::Config(format!(
                    "--feature expects NAME=KIND, got '{spec}'"
                )));
            };
            let kind = parse_feature_kind(kind)?;
            schema = schema.with_feature(name.trim(), kind);
        }
        if let Some(treatments) = &self.treatments {
            schema.treatments = Some(treatments.clone());
        }
        Ok(schema)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic benchmark dataset and its oracle labels.
    Simulate {
        /// Model id: m1..m6 or fig1.
        #[arg(long)]
        model: String,
        /// Number of observations.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a PSICA tree to a delimited data file.
    Fit {
        /// Input table (comma-delimited, header row).
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        schema: SchemaFlags,
        /// How best-treatment probabilities are sampled.
        #[arg(long = "method-prob", value_enum, default_value_t = ProbMethodArg::Jackknife)]
        method_prob: ProbMethodArg,
        /// Tree growth strategy.
        #[arg(long = "method-grow", value_enum, default_value_t = GrowMethodArg::Full)]
        method_grow: GrowMethodArg,
        /// Risk level for useless-treatment labeling and prepruning.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Effect-sample count B.
        #[arg(long = "B", visible_alias = "b", default_value_t = 500)]
        samples_b: usize,
        /// Trees per forest.
        #[arg(long, default_value_t = 100)]
        trees: usize,
        /// Features per forest split.
        #[arg(long, value_enum, default_value_t = MtryArg::All)]
        mtry: MtryArg,
        /// Minimum rows per tree leaf (default: n/5).
        #[arg(long = "min-leaf")]
        min_leaf: Option<usize>,
        /// Maximum tree depth (default: unlimited).
        #[arg(long = "max-depth")]
        max_depth: Option<usize>,
        /// Cost matrix file (m x m, headerless CSV). Default: zero-one.
        #[arg(long)]
        costs: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output path for the tree interchange document.
        #[arg(long)]
        out: PathBuf,
        /// Also dump the probability matrix as CSV.
        #[arg(long = "probs-out")]
        probs_out: Option<PathBuf>,
        /// Also persist the per-arm forests into this directory.
        #[arg(long = "forests-out")]
        forests_out: Option<PathBuf>,
    },
    /// Route rows of a data file through a saved tree.
    Predict {
        /// Tree interchange document.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a saved tree as Graphviz text or raw interchange JSON.
    Export {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Graph)]
        format: FormatArg,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a batch simulation experiment from a key=value config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Directory for raw.csv, summary.csv and summary.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a saved tree against a data file and oracle labels.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Oracle file as written by `simulate` (row,best).
        #[arg(long)]
        oracle: PathBuf,
        /// Relevant feature names for the suspect metric, comma-separated.
        #[arg(long, value_delimiter = ',')]
        relevant: Option<Vec<String>>,
    },
}

fn configure_threads(flag: usize) -> Result<()> {
    let threads = match std::env::var("PSICA_THREADS") {
        Ok(value) => value
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("PSICA_THREADS must be an integer, got '{value}'")))?,
        Err(_) => flag,
    };
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<String> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Simulate {
            model,
            n,
            seed,
            out,
        } => cmd_simulate(&SimulateArgs {
            model: SimModelId::parse(&model)?,
            n,
            seed,
            out_dir: out,
        }),
        Command::Fit {
            data,
            schema,
            method_prob,
            method_grow,
            alpha,
            samples_b,
            trees,
            mtry,
            min_leaf,
            max_depth,
            costs,
            seed,
            out,
            probs_out,
            forests_out,
        } => {
            let args = FitArgs {
                data,
                schema: schema.build()?,
                prob_method: match method_prob {
                    ProbMethodArg::Bootstrap => ProbMethod::Bootstrap,
                    ProbMethodArg::Jackknife => ProbMethod::Jackknife,
                },
                grow_method: match method_grow {
                    GrowMethodArg::Full => GrowthMethod::Full,
                    GrowMethodArg::Preprune => GrowthMethod::Preprune,
                },
                alpha,
                samples_b,
                num_trees: trees,
                mtry: match mtry {
                    MtryArg::All => MtryRule::All,
                    MtryArg::Sqrt => MtryRule::Sqrt,
                },
                min_leaf,
                max_depth,
                costs,
                seed,
                out,
                probs_out,
                forests_out,
            };
            cmd_fit(&args)
        }
        Command::Predict { model, data, out } => cmd_predict(&PredictArgs { model, data, out }),
        Command::Export { model, format, out } => cmd_export(&ExportArgs {
            model,
            format: match format {
                FormatArg::Graph => ExportFormat::Graph,
                FormatArg::Interchange => ExportFormat::Interchange,
            },
            out,
        }),
        Command::Experiment { config, out } => cmd_experiment(&ExperimentArgs {
            config,
            out_dir: out,
        }),
        Command::Evaluate {
            model,
            data,
            oracle,
            relevant,
        } => cmd_evaluate(&EvaluateArgs {
            model,
            data,
            oracle,
            relevant,
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
