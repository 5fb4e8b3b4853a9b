use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use inertia_core::scenario::{compare, load_scenario, run, RunOptions, RunReport, SolverKind};
use inertia_core::Error;

#[derive(Parser)]
#[command(name = "inertia", version, about = "Optimal time-variant virtual inertia for power-system frequency control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    DpBasic,
    DpLevelset,
    TrajOpt,
}

impl From<Solver> for SolverKind {
    fn from(s: Solver) -> Self {
        match s {
            Solver::DpBasic => SolverKind::DpBasic,
            Solver::DpLevelset => SolverKind::DpLevelset,
            Solver::TrajOpt => SolverKind::TrajOpt,
        }
    }
}

#[derive(clap::Args)]
struct RunArgs {
    /// Directory for the trajectory CSV, report and solver artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for randomised optimiser starts.
    #[arg(long)]
    seed: Option<u64>,
    /// Integration substeps per sample interval.
    #[arg(long = "dt-substeps")]
    dt_substeps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Roll the scenario out with its constant simulation inertia.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Solve the scenario's optimal control problem.
    Solve {
        scenario: PathBuf,
        /// Override the solver named in the scenario.
        #[arg(long, value_enum)]
        solver: Option<Solver>,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Compare two run reports of the same case.
    Compare { report_a: PathBuf, report_b: PathBuf },
    /// Load and validate a scenario without solving it.
    Validate { scenario: PathBuf },
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_validation() {
        ExitCode::from(2)
    } else {
        ExitCode::from(3)
    }
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serialisable"));
}

fn execute(scenario: PathBuf, solver: Option<SolverKind>, args: RunArgs) -> ExitCode {
    let sc = match load_scenario(&scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions {
        seed: args.seed,
        substeps: args.dt_substeps,
        solver,
    };
    match run(&sc, &args.out, &opts) {
        Ok(report) => {
            print_json(&report);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { scenario, args } => execute(scenario, Some(SolverKind::SimulateOnly), args),
        Command::Solve { scenario, solver, args } => execute(scenario, solver.map(Into::into), args),
        Command::Compare { report_a, report_b } => {
            let reports = RunReport::read(&report_a).and_then(|a| Ok((a, RunReport::read(&report_b)?)));
            match reports.and_then(|(a, b)| compare(&a, &b)) {
                Ok(c) => {
                    print_json(&c);
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Validate { scenario } => match load_scenario(&scenario) {
            Ok(sc) => {
                println!("ok: {} ({} stages, solver {})", sc.name, sc.stages().unwrap_or(0), sc.solver.as_str());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
