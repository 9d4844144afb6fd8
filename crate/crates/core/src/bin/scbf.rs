use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use scbf::config::{load_config, Command, ConfigDoc, Format, Overrides};
use scbf::experiment::run_experiment;
use scbf::records::emit_records;
use scbf::Error;

const THREADS_VAR: &str = "SCBF_THREADS";

#[derive(Parser)]
#[command(name = "scbf", version, about = "Stochastic convective Brinkman–Forchheimer lab")]
struct Cli {
    /// Experiment document (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of Monte Carlo paths
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Comma-separated output formats: csv, json
    #[arg(long, global = true, value_delimiter = ',')]
    format: Option<Vec<String>>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Plain ensemble with energy ledger and a checkpoint of trajectory 0
    Simulate,
    /// Asymptotic coupling: contraction, entropy and (weighted mode) measure-change checks
    Couple,
    /// Time averages and the two-start uniqueness proxy
    Ergodic,
    /// Asymptotic log-Harnack margins
    Harnack,
    /// Finite-difference gradient estimate against the semigroup bound
    Gradcheck,
    /// Randomized operator and noise invariant suites
    Proptest,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Simulate => Command::Simulate,
            Cmd::Couple => Command::Couple,
            Cmd::Ergodic => Command::Ergodic,
            Cmd::Harnack => Command::Harnack,
            Cmd::Gradcheck => Command::Gradcheck,
            Cmd::Proptest => Command::Proptest,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Guard { .. } => 3,
        Error::Config { .. }
        | Error::InvalidArgument(_)
        | Error::InvalidBasis(_)
        | Error::InvalidNoise(_)
        | Error::Hypothesis(_)
        | Error::BasisMismatch(_) => 4,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v.trim().parse().map_err(|_| Error::Config {
            path: THREADS_VAR.into(),
            message: format!("expected a positive integer, got `{v}`"),
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let formats = cli
        .format
        .map(|v| v.iter().map(|s| s.parse::<Format>()).collect::<Result<Vec<_>, _>>())
        .transpose()?;
    let overrides = Overrides {
        seed: cli.seed,
        paths: cli.paths,
        out: cli.out,
        formats,
        command: Some(cli.command.into()),
    };
    let spec = match &cli.config {
        Some(path) => load_config(path, &overrides)?,
        None => ConfigDoc::default().with_overrides(&overrides).resolve()?,
    };
    let started = Instant::now();
    let records = run_experiment(&spec)?;
    let files = emit_records(&records, &spec.out, &spec.doc.formats)?;
    // canonical document without the output location, so reruns elsewhere compare equal
    let mut doc = spec.doc.clone();
    doc.out = None;
    std::fs::write(spec.out.join("experiment.toml"), doc.to_toml()?)
        .map_err(|e| Error::Io { path: spec.out.join("experiment.toml"), source: e })?;
    let mut ok = true;
    for r in &records {
        for v in &r.verdicts {
            ok &= v.pass;
            eprintln!("{} [{}] {} (margin {:.3e})", if v.pass { "PASS" } else { "FAIL" }, r.id, v.name, v.margin);
        }
    }
    eprintln!(
        "{} finished in {:.2?}; wrote {} file(s) to {}",
        spec.doc.command.name(),
        started.elapsed(),
        files.len() + 1,
        spec.out.display()
    );
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
