//! `lipcon`: consensus protocol design and simulation for networks of
//! Lipschitz nonlinear agents.

mod commands;
mod files;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{DesignArgs, ReproArgs, SimArgs};

#[derive(Parser)]
#[command(name = "lipcon", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Connectivity flags, r, a(L), lambda_2 and leader-follower data of an edge list.
    Graph {
        graph: PathBuf,
        #[arg(long, env = "LIPCON_OUT_DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Solve (or inject) an LMI certificate and derive K and the coupling bound.
    Synth {
        model: PathBuf,
        graph: PathBuf,
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, env = "LIPCON_OUT_DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Design, then integrate the closed loop and write trajectory.csv and report.json.
    Simulate {
        model: PathBuf,
        graph: PathBuf,
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, env = "LIPCON_OUT_DIR", default_value = "lipcon-out")]
        out_dir: PathBuf,
    },
    /// Built-in six-manipulator example: both certificates, undisturbed and disturbed runs.
    Repro {
        #[command(flatten)]
        args: ReproArgs,
        #[arg(long, env = "LIPCON_OUT_DIR", default_value = "lipcon-out")]
        out_dir: PathBuf,
    },
}

/// 2 precondition, 3 solver budget exhausted, 4 simulation blow-up, 1 anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    use lipcon::Error;
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Precondition(_)) => 2,
        Some(Error::InfeasibleWithinBudget { .. }) => 3,
        Some(Error::BlowUp { .. }) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Graph { graph, out_dir } => commands::cmd_graph(graph, out_dir.as_deref()),
        Command::Synth {
            model,
            graph,
            design,
            out_dir,
        } => commands::cmd_synth(model, graph, design, out_dir.as_deref()),
        Command::Simulate {
            model,
            graph,
            design,
            sim,
            out_dir,
        } => commands::cmd_simulate(model, graph, design, sim, out_dir),
        Command::Repro { args, out_dir } => commands::cmd_repro(args, out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
