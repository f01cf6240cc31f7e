use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use kgprep::rdfize::EmissionMode;
use kgprep::store::CsvDialect;
use kgprep_cli::{cmd_analyze, cmd_bench, cmd_optimize, cmd_rdfize, BenchArgs, CliError, InputArgs, RdfizeArgs};

/// Shrink CSV sources before turning them into RDF with RML mappings.
#[derive(Parser)]
#[command(name = "kgprep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Give up after this many seconds (exit code 3).
    #[arg(long, global = true)]
    timeout_secs: Option<u64>,
}

#[derive(Args)]
struct Inputs {
    /// RML mapping document in Turtle.
    #[arg(long)]
    mapping: PathBuf,
    /// Directory the logical sources resolve against.
    #[arg(long)]
    sources: PathBuf,
    /// CSV field delimiter.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    GenerateAll,
    Distinct,
}

#[derive(Subcommand)]
enum Command {
    /// Report which attributes the mapping uses and which rules could merge.
    Analyze(Inputs),
    /// Write transformed sources, the rewritten mapping and the plan.
    Optimize {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Materialize the mapping as sorted N-Triples.
    Rdfize {
        #[command(flatten)]
        inputs: Inputs,
        /// Output N-Triples file; statistics go next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "distinct")]
        mode: Mode,
        /// Preprocess the sources first.
        #[arg(long)]
        optimize: bool,
        /// Skip rdf:type triples for mapped classes.
        #[arg(long)]
        no_type_triples: bool,
    },
    /// Run both pipelines over a synthetic workload matrix.
    Bench {
        /// Workload spec JSON; defaults apply when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Report JSON output file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep generated workloads here instead of a temporary directory.
        #[arg(long)]
        work_dir: Option<PathBuf>,
    },
}

fn input_args(i: Inputs, timeout: Option<u64>) -> Result<InputArgs, CliError> {
    let delimiter = u8::try_from(i.delimiter)
        .map_err(|_| CliError::Input(anyhow::anyhow!("delimiter {:?} is not a single byte", i.delimiter)))?;
    Ok(InputArgs {
        mapping: i.mapping,
        sources: i.sources,
        dialect: CsvDialect::with_delimiter(delimiter),
        timeout: timeout.map(Duration::from_secs),
    })
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce(&T) -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
    } else {
        print!("{}", text(value));
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let json = cli.json;
    match cli.command {
        Command::Analyze(inputs) => {
            let analysis = cmd_analyze(&input_args(inputs, cli.timeout_secs)?)?;
            emit(json, &analysis, |a| a.render());
        }
        Command::Optimize { inputs, out } => {
            let summary = cmd_optimize(&input_args(inputs, cli.timeout_secs)?, &out)?;
            emit(json, &summary, |s| s.render());
        }
        Command::Rdfize { inputs, out, mode, optimize, no_type_triples } => {
            let args = RdfizeArgs {
                input: input_args(inputs, cli.timeout_secs)?,
                out,
                mode: match mode {
                    Mode::GenerateAll => EmissionMode::GenerateAll,
                    Mode::Distinct => EmissionMode::Distinct,
                },
                optimize,
                type_triples: !no_type_triples,
            };
            let summary = cmd_rdfize(&args)?;
            emit(json, &summary, |s| s.render());
        }
        Command::Bench { spec, seed, out, work_dir } => {
            let args = BenchArgs { spec, seed, timeout_secs: cli.timeout_secs, out, work_dir };
            let report = cmd_bench(&args)?;
            emit(json, &report, |r| r.table());
            let failures = report.equivalence_failures();
            if failures > 0 {
                return Err(CliError::Failed(anyhow::anyhow!("{failures} cell(s) produced different graphs")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kgprep: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
