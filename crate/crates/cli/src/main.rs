mod bench;
mod commands;
mod config;
mod graph_file;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nystrom_hdc::{CodePath, ErrorKind, InferOptions, LookupEngine};
use serde_json::Value;

use bench::{BenchArgs, Variant};
use commands::{InferInput, Subset};
use config::RunArgs;

/// A problem with how the tool was invoked rather than with the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "nyhdc", version, about = "Nyström hypervector graph classification")]
struct Cli {
    /// Also write the JSON report to this file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Train on the training split and write a model file.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "model.nyhdc")]
        model: PathBuf,
    },
    /// Accuracy and per-graph latency of a saved model.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Subset::Test)]
        subset: Subset,
        #[command(flatten)]
        infer: InferArgs,
    },
    /// Classify one graph, from a JSON file or a dataset index.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "index")]
        graph: Option<PathBuf>,
        /// Graph index into --dataset.
        #[arg(long, requires = "dataset")]
        index: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        infer: InferArgs,
    },
    /// Latency of inference variants and the derived speedups.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated; all variants when omitted.
        #[arg(long, value_enum, value_delimiter = ',')]
        variants: Vec<Variant>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = 4)]
        skewed_graphs: usize,
        #[arg(long, default_value_t = 4096)]
        skewed_nodes: usize,
        /// Landmark count of the DPP model (defaults to --landmarks).
        #[arg(long)]
        dpp_landmarks: Option<usize>,
    },
    /// Dimensions, codebook and hash statistics, memory and roofline.
    ModelInfo {
        #[arg(long)]
        model: PathBuf,
        /// JSON machine block (peak_ops_per_s, bandwidth_bytes_per_s, ...).
        #[arg(long)]
        machine: Option<PathBuf>,
        /// Query size for a per-graph cost report.
        #[arg(long, requires = "edges")]
        nodes: Option<usize>,
        #[arg(long, requires = "nodes")]
        edges: Option<usize>,
    },
    /// Dataset statistics and split sizes.
    DatasetInfo {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args, Debug, Clone)]
struct InferArgs {
    /// Lanes for histogramming and SpMV (defaults to the model's).
    #[arg(long)]
    infer_lanes: Option<usize>,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    load_balance: bool,
    #[arg(long, value_enum, default_value_t = PathArg::Restructured)]
    code_path: PathArg,
    #[arg(long, value_enum, default_value_t = LookupArg::Mph)]
    lookup: LookupArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PathArg {
    Restructured,
    Baseline,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LookupArg {
    Mph,
    Hashmap,
    BinarySearch,
}

impl InferArgs {
    fn options(&self, default_lanes: usize) -> Result<InferOptions> {
        let lanes = self.infer_lanes.unwrap_or(default_lanes);
        if lanes == 0 {
            return Err(UsageError("lanes must be positive".into()).into());
        }
        Ok(InferOptions {
            lanes,
            load_balance: self.load_balance,
            code_path: match self.code_path {
                PathArg::Restructured => CodePath::Restructured,
                PathArg::Baseline => CodePath::Baseline,
            },
            lookup: match self.lookup {
                LookupArg::Mph => LookupEngine::Mph,
                LookupArg::Hashmap => LookupEngine::HashMap,
                LookupArg::BinarySearch => LookupEngine::BinarySearch,
            },
        })
    }
}

fn run(cli: Cli) -> Result<Value> {
    match cli.cmd {
        Cmd::Train { run, model } => commands::cmd_train(&run.resolve()?, &model),
        Cmd::Eval {
            run,
            model,
            subset,
            infer,
        } => {
            let cfg = run.resolve()?;
            commands::cmd_eval(&cfg, &model, subset, &infer.options(cfg.model.lanes)?)
        }
        Cmd::Infer {
            model,
            graph,
            index,
            run,
            infer,
        } => {
            let cfg = run.resolve()?;
            let input = match (graph, index) {
                (Some(g), None) => InferInput::GraphFile(g),
                (None, Some(i)) => InferInput::DatasetIndex(cfg.clone(), i),
                _ => return Err(UsageError("infer needs --graph FILE or --dataset DIR --index I".into()).into()),
            };
            commands::cmd_infer(&model, input, &infer.options(cfg.model.lanes)?)
        }
        Cmd::Bench {
            run,
            variants,
            repeats,
            skewed_graphs,
            skewed_nodes,
            dpp_landmarks,
        } => {
            let args = BenchArgs {
                variants: if variants.is_empty() {
                    Variant::ALL.to_vec()
                } else {
                    variants
                },
                repeats,
                skewed_graphs,
                skewed_nodes,
                dpp_landmarks,
            };
            bench::cmd_bench(&run.resolve()?, &args)
        }
        Cmd::ModelInfo {
            model,
            machine,
            nodes,
            edges,
        } => {
            let mp = commands::read_machine(machine.as_deref())?;
            commands::cmd_model_info(&model, &mp, nodes.zip(edges))
        }
        Cmd::DatasetInfo { run } => commands::cmd_dataset_info(&run.resolve()?),
    }
}

/// 1 usage, 2 data, 3 numeric.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(err) = cause.downcast_ref::<nystrom_hdc::Error>() {
            return match err.kind() {
                ErrorKind::Usage => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numeric => 3,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let report = cli.report.clone();
    match run(cli) {
        Ok(v) => {
            let text = serde_json::to_string_pretty(&v).expect("reports serialize");
            if let Some(p) = report {
                if let Err(e) = fs::write(&p, &text) {
                    eprintln!("error: writing report {}: {e}", p.display());
                    return ExitCode::from(2);
                }
            }
            // a closed pipe (e.g. `| head`) is not an error worth reporting
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
