use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use imfcs::harness::{
    load_config_unchecked, reproduce_table, run_experiment, spectrum_csv, table_csv, trace_csv,
    ExperimentSpec, Grade, Mode, TableId,
};
use imfcs::minmode::spectrum_head;
use imfcs::Error;

#[derive(Parser)]
#[command(
    name = "imfcs",
    version,
    about = "Saddle search for phase-field energies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Print the per-iteration trace as CSV on stdout.
    #[arg(long, global = true)]
    trace: bool,
    /// Output directory (overrides the config's `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Perturbation seed (overrides the config's `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment a config describes.
    Run { config: PathBuf },
    /// Reproduce one of T1a..T5b and print the comparison CSV.
    Table {
        id: String,
        /// Only the rows with these Δt values (comma separated).
        #[arg(long, value_delimiter = ',')]
        dt: Vec<f64>,
    },
    /// Smallest eigenvalues of the Hessian at the config's initial field.
    Eig { config: PathBuf },
    /// Relax the config's initial field to a local minimum.
    Relax { config: PathBuf },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Validation(_)
            | Error::Parse { .. }
            | Error::IncompatibleGrid { .. }
            | Error::Unsupported(_) => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn spec_from(cli: &Cli, config: &PathBuf) -> Result<ExperimentSpec, Failure> {
    let mut spec = load_config_unchecked(config)?;
    if let Some(out) = &cli.out {
        spec.out = Some(out.clone());
    }
    if let Some(seed) = cli.seed {
        spec.perturbation.seed = Some(seed);
    }
    spec.validate()?;
    Ok(spec)
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run { config } => run(cli, spec_from(cli, config)?),
        Command::Relax { config } => {
            let mut spec = spec_from(cli, config)?;
            spec.mode = Mode::Relax;
            run(cli, spec)
        }
        Command::Eig { config } => {
            let spec = spec_from(cli, config)?;
            let f0 = spec.initial_field()?;
            let values = spectrum_head(&spec.model, &f0, spec.spectrum, spec.metric)?;
            let csv = spectrum_csv(&values);
            if let Some(dir) = &spec.out {
                std::fs::create_dir_all(dir)
                    .map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
                let path = dir.join("spectrum.csv");
                std::fs::write(&path, &csv)
                    .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            }
            print!("{csv}");
            Ok(())
        }
        Command::Table { id, dt } => {
            let id: TableId = id.parse().map_err(Failure::Validation)?;
            let report = reproduce_table(id, |x| {
                dt.is_empty() || dt.iter().any(|d| (d - x).abs() <= 1e-12 * x)
            })?;
            let csv = table_csv(std::slice::from_ref(&report));
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir)
                    .map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
                let path = dir.join(format!("{id}.csv"));
                std::fs::write(&path, &csv)
                    .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            }
            print!("{csv}");
            eprintln!(
                "{id}: {} pass, {} soft, {} fail",
                report.count(Grade::Pass),
                report.count(Grade::Soft),
                report.count(Grade::Fail)
            );
            Ok(())
        }
    }
}

fn run(cli: &Cli, spec: ExperimentSpec) -> Result<(), Failure> {
    let outcome = run_experiment(&spec)?;
    if cli.trace {
        print!("{}", trace_csv(&outcome.trace));
    }
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "{}: {} F = {:.10} |dF| = {:.3e} cycles = {} iterations = {} lambda = {:?}",
        outcome.name,
        outcome.status,
        outcome.energy,
        outcome.gradient_norm,
        outcome.cycles,
        outcome.total_iterations,
        outcome.spectrum
    );
    if outcome.diverged && !spec.comparison {
        return Err(Failure::Runtime(format!(
            "run {} {}",
            spec.name, outcome.status
        )));
    }
    Ok(())
}
