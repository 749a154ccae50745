use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Experiment runner for synchronous radio-network routing.
#[derive(Debug, Parser)]
#[command(name = "radio-route", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Network file, or a generator: gen:path:<n>, gen:clique:<n>, gen:random:<n>:<p>.
    #[arg(long)]
    network: Option<String>,
    /// Adversary type as <num>/<den>:<b>:<L>.
    #[arg(long)]
    adv: Option<String>,
    /// Run seed; every random component draws from a named sub-seed of it.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Last simulated round.
    #[arg(long)]
    horizon: Option<u64>,
    /// Directory for CSV outputs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Gossip mode: tdma or oracle:<S_n>.
    #[arg(long, default_value = "tdma")]
    gossip: String,
    /// Window length override for Old-Go-First.
    #[arg(long)]
    window: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algorithm {
    RoundRobin,
    Ogf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compare the chromatic number with the optimal static link schedule.
    Sls {
        #[command(flatten)]
        common: Common,
        /// Tour file with one `t <id> <round> <tail> <head>` line per tour.
        #[arg(long, conflicts_with = "figure1")]
        tours: Option<PathBuf>,
        /// Use the one-link version of the built-in Figure 1 instance.
        #[arg(long)]
        figure1: bool,
    },
    /// Run clique saturation traffic from an unbalanced adversary.
    Instability {
        #[command(flatten)]
        common: Common,
        /// Clique size.
        #[arg(long, default_value_t = 6)]
        n: usize,
        /// Interval length; defaults to the smallest t with (L rho - 1) t >= 1 and rho t integral.
        #[arg(long)]
        t: Option<u64>,
        /// Number of intervals.
        #[arg(long, default_value_t = 1000)]
        intervals: u64,
        #[arg(long, value_enum, default_value_t = Algorithm::RoundRobin)]
        algorithm: Algorithm,
    },
    /// Run Old-Go-First against balanced traffic and check the latency bound.
    Ogf {
        #[command(flatten)]
        common: Common,
        /// Replay this trace instead of generating one.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Run the built-in regression matrix instead of a single scenario.
        #[arg(long)]
        matrix: bool,
    },
    /// Check a trace against its adversary type.
    VerifyTrace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Check that TDMA gossip reaches every node.
    GossipCheck {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(commands::Status::Ok) => ExitCode::SUCCESS,
        Ok(commands::Status::Violated) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
