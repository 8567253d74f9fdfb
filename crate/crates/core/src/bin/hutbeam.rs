use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hutbeam::cli::{dispatch, Command, Invocation};
use hutbeam::controller::Solver;

#[derive(Parser)]
#[command(name = "hutbeam", version, about = "Downlink beamforming with harvest-use-trade energy management")]
struct Args {
    #[command(subcommand)]
    command: Cmd,

    /// Config file (`key = value` lines); missing keys use defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for CSV output; stdout when omitted
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// sabf or zfbf (run only; sweeps use both)
    #[arg(long, global = true)]
    solver: Option<Solver>,

    #[arg(long, global = true)]
    frames: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one trajectory and write per-frame records
    Run,
    /// Sweep V (or the SINR target) for both solvers
    Sweep,
    /// Count outer iterations over independent channel draws
    Converge,
    /// Cross-check every solver against its independent route
    Validate,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let inv = Invocation {
        command: match args.command {
            Cmd::Run => Command::Run,
            Cmd::Sweep => Command::Sweep,
            Cmd::Converge => Command::Converge,
            Cmd::Validate => Command::Validate,
        },
        config: args.config,
        out: args.out,
        seed: args.seed,
        solver: args.solver,
        frames: args.frames,
    };
    match dispatch(&inv, &mut std::io::stdout().lock()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
