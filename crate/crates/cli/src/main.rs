use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use normform_cli::{dispatch, resolve_problem, CliError, Command, Flags, Format};

/// Local normal forms, equivariant charts and zero-set strata of smooth maps.
#[derive(Debug, Parser)]
#[command(name = "normform", version)]
struct Args {
    command: Command,
    /// Problem JSON file, or a builtin id (an unknown id lists the valid ones).
    #[arg(long)]
    problem: String,
    /// Base point override, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    point: Option<Vec<f64>>,
    /// Rank tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    radius: Option<f64>,
    /// Nodes per axis for zero-set exploration.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    seed: Option<u64>,
}

fn run(args: &Args) -> Result<bool, CliError> {
    let spec = resolve_problem(&args.problem)?;
    let flags = Flags {
        point: args.point.clone(),
        tol: args.tol,
        radius: args.radius,
        grid: args.grid,
        format: args.format,
        seed: args.seed,
    };
    let outcome = dispatch(args.command, &spec, &flags)?;
    let text = outcome.render(args.format)?;
    for w in &outcome.report.warnings {
        eprintln!("warning: {w}");
    }
    write_output(args.output.as_ref(), &text).map_err(|e| CliError::Input(format!("{e:#}")))?;
    Ok(outcome.report.verified())
}

fn write_output(path: Option<&PathBuf>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: verification failed; see the report status");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
