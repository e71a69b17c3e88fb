use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gus_core::dsl::load_plan;
use gus_core::run::{render_text, run_document, RunOptions};
use gus_core::tpch::{generate_tpch_tiny, TpchScale};
use gus_core::{GusError, SamplerSpec};

/// Approximate SUM queries over sampled join plans, with variance and
/// confidence intervals.
#[derive(Parser)]
#[command(name = "gus", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a plan document and print the estimate report.
    Estimate {
        plan: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Include the sampling rewrite trace.
        #[arg(long)]
        explain: bool,
        /// Attach exact or Monte-Carlo ground truth.
        #[arg(long)]
        oracle: bool,
        /// Estimate the variance terms from a lineage-keyed subsample,
        /// e.g. `lineitem=0.2,orders=0.3`.
        #[arg(long, value_name = "SPEC")]
        subsample: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write small TPC-H-shaped CSV tables and plan documents.
    Generate {
        /// Row counts, e.g. `l=1000,o=250,c=50,p=100`.
        #[arg(long, default_value = "l=1000,o=250,c=50,p=100")]
        scale: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &GusError) -> u8 {
    if e.is_not_identifiable() {
        3
    } else if e.is_plan_error() || matches!(e, GusError::InvalidArgument(_)) {
        2
    } else {
        1
    }
}

fn run(cli: Cli) -> Result<(), GusError> {
    match cli.command {
        Command::Estimate {
            plan,
            seed,
            explain,
            oracle,
            subsample,
            format,
            out,
        } => {
            let (doc, base) = load_plan(&plan).map_err(|e| match e {
                GusError::Io(io) => GusError::InvalidArgument(format!("{}: {io}", plan.display())),
                other => other,
            })?;
            let subsample = match subsample {
                Some(text) => match SamplerSpec::parse_dims(&text)? {
                    SamplerSpec::LineageBernoulli { dims } => Some(dims),
                    _ => unreachable!("parse_dims builds a lineage Bernoulli sampler"),
                },
                None => None,
            };
            let catalog = doc.load_catalog(&base)?;
            let options = RunOptions {
                seed,
                explain,
                oracle,
                subsample,
            };
            let outcome = run_document(&doc, &catalog, &options)?;
            let rendered = match format {
                Format::Json => outcome.to_json() + "\n",
                Format::Text => render_text(&outcome),
            };
            match out {
                Some(path) => std::fs::write(path, rendered)?,
                None => print!("{rendered}"),
            }
        }
        Command::Generate { scale, seed, out } => {
            let scale = TpchScale::parse(&scale)?;
            for path in generate_tpch_tiny(&scale, seed, &out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gus: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
