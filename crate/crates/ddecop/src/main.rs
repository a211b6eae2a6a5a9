use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use ddecop::commands::{
    cmd_evaluate, cmd_fit, cmd_sample, cmd_simulate, Common, EvaluateOptions, FitOptions, SampleOptions,
    SimulateOptions,
};
use ddecop::config::{parse_delimiter, parse_variant, VARIANT_NAMES};
use ddecop::io::MissingPath;

/// Deep discrete encoder copulas for mixed-type tables.
#[derive(Parser)]
#[command(name = "ddecop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a CSV table.
    Fit(FitArgs),
    /// Generate a dataset from a preset or a saved design.
    Simulate(SimulateArgs),
    /// Draw synthetic rows from a fitted model.
    Sample(SampleArgs),
    /// Score an estimate against the truth, or synthetic data by pMSE.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    output_dir: PathBuf,
    /// Required for reproducibility.
    #[arg(long)]
    seed: u64,
    /// TOML file with run settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct TableArgs {
    /// Field delimiter: one character or `tab`.
    #[arg(long)]
    delimiter: Option<String>,
    /// The CSV has no header row.
    #[arg(long)]
    no_header: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = VARIANT_NAMES)]
    variant: Option<String>,
    #[command(flatten)]
    table: TableArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// desk, paper-J50, paper-J100 or paper-J150.
    #[arg(long)]
    preset: Option<String>,
    /// A spec.json from an earlier run.
    #[arg(long, conflicts_with = "preset")]
    spec: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    model: PathBuf,
    /// The data the model was fitted to.
    #[arg(long)]
    input: PathBuf,
    /// Rows to draw; defaults to the size of the input.
    #[arg(long)]
    m: Option<usize>,
    #[command(flatten)]
    table: TableArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, requires = "estimate")]
    truth: Option<PathBuf>,
    #[arg(long, requires = "truth")]
    estimate: Option<PathBuf>,
    /// Real table for pMSE.
    #[arg(long, requires = "synthetic", conflicts_with = "truth")]
    input: Option<PathBuf>,
    #[arg(long, requires = "input")]
    synthetic: Option<PathBuf>,
    #[arg(long)]
    folds: Option<usize>,
    #[command(flatten)]
    table: TableArgs,
}

fn common(args: CommonArgs) -> Result<Common> {
    if let Some(w) = args.workers {
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global()?;
    }
    Ok(Common { output_dir: args.output_dir, seed: args.seed, config: args.config })
}

fn delimiter(t: &TableArgs) -> Result<Option<u8>> {
    t.delimiter.as_deref().map(parse_delimiter).transpose()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&FitOptions {
            variant: a.variant.as_deref().map(parse_variant).transpose()?,
            delimiter: delimiter(&a.table)?,
            no_header: a.table.no_header,
            input: a.input,
            common: common(a.common)?,
        }),
        Command::Simulate(a) => {
            cmd_simulate(&SimulateOptions { preset: a.preset, spec: a.spec, n: a.n, common: common(a.common)? })
        }
        Command::Sample(a) => cmd_sample(&SampleOptions {
            model: a.model,
            input: a.input,
            m: a.m,
            delimiter: delimiter(&a.table)?,
            no_header: a.table.no_header,
            common: common(a.common)?,
        }),
        Command::Evaluate(a) => cmd_evaluate(&EvaluateOptions {
            truth: a.truth,
            estimate: a.estimate,
            input: a.input,
            synthetic: a.synthetic,
            folds: a.folds,
            delimiter: delimiter(&a.table)?,
            no_header: a.table.no_header,
            common: common(a.common)?,
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<MissingPath>()) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
