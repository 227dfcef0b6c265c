use std::path::PathBuf;

use clap::{Parser, Subcommand};

use sea_core::cli::{run_command, CommandKind};

/// Steepest-entropy-ascent relaxation runner: integrate constrained entropy
/// gradient flows, solve MaxEnt endpoints, and report non-equilibrium
/// diagnostics.
#[derive(Parser)]
#[command(name = "sea", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Directory for output files (default: next to each config file).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Number of config files processed in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Suppress per-run status lines.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a relaxation trajectory and write trajectory + summary.
    Simulate {
        /// One or more run configuration files (TOML).
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Solve the constrained MaxEnt distribution for the configured problem.
    Maxent {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Report the disequilibrium measures of the configured initial state.
    Analyze {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
}

fn main() {
    // Log level from SEA_LOG_LEVEL (error, info, debug); errors only by
    // default.
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEA_LOG_LEVEL", "error"))
        .init();
    let cli = Cli::parse();
    let (kind, configs) = match &cli.command {
        Command::Simulate { configs } => (CommandKind::Simulate, configs),
        Command::Maxent { configs } => (CommandKind::Maxent, configs),
        Command::Analyze { configs } => (CommandKind::Analyze, configs),
    };
    let code = run_command(kind, configs, cli.jobs, cli.out_dir.as_deref(), cli.quiet);
    std::process::exit(code);
}
