//! `hjpot`: batch evaluation of Hamilton principal functions and the
//! geometry recovered from them.

mod commands;
mod config;
mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use commands::{Output, Report, Status};
use config::{RunArgs, Settings};

#[derive(Debug, Parser)]
#[command(name = "hjpot", version, about = "Potential functions of statistical manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// S(q_in, q_fin) for point pairs `in/fin` or all grid pairs.
    Potential(RunArgs),
    /// Metric, connection and skewness recovered by finite differences.
    Recover(RunArgs),
    /// Fisher-Rao metric and skewness tensor by quadrature.
    Fisher(RunArgs),
    /// Kullback-Leibler divergence by quadrature.
    Kl(RunArgs),
    /// S(from, q) over points or a grid.
    Scan(RunArgs),
    /// Check a model against its closed forms; exit 1 if any check fails.
    Verify(RunArgs),
}

impl Command {
    fn split(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::Potential(a) => ("potential", a),
            Command::Recover(a) => ("recover", a),
            Command::Fisher(a) => ("fisher", a),
            Command::Kl(a) => ("kl", a),
            Command::Scan(a) => ("scan", a),
            Command::Verify(a) => ("verify", a),
        }
    }
}

fn run(cli: &Cli) -> Result<Status> {
    let (name, args) = cli.command.split();
    let settings = Settings::resolve(name, args)?;
    let Report { output, status } = match name {
        "potential" => commands::potential(&settings)?,
        "recover" => commands::recover_cmd(&settings)?,
        "fisher" => commands::fisher(&settings)?,
        "kl" => commands::kl(&settings)?,
        "scan" => commands::scan(&settings)?,
        _ => commands::verify(&settings)?,
    };
    let mut sink: Box<dyn Write> = match &settings.out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    match output {
        Output::Table(t) => t.write(settings.format, &mut sink)?,
        Output::Json(v) => output::write_json(&v, &mut sink)?,
    }
    sink.flush()?;
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(Status::ComputationError as u8)
        }
    }
}
