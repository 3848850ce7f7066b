use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use levicool::cli::{execute, Command, EXIT_CONFIG};
use levicool::config::parse_config;

#[derive(Parser)]
#[command(
    name = "levicool",
    version,
    about = "Cavity cooling of levitated ellipsoidal nanoparticles"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Occupations and rates over a range of tweezer ellipticities.
    SweepEllipticity(Common),
    /// Maximum librational occupation over a grid of particle shapes.
    SweepShape(Common),
    /// Harmonic parameters, couplings and normal modes at one point.
    Linearize(Common),
    /// Cavity output spectra, optionally with a stochastic simulation.
    Spectra(Common),
    /// Nonlinear trajectory.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to `output.directory` of the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Cmd::SweepEllipticity(c) => (Command::SweepEllipticity, c),
        Cmd::SweepShape(c) => (Command::SweepShape, c),
        Cmd::Linearize(c) => (Command::Linearize, c),
        Cmd::Spectra(c) => (Command::Spectra, c),
        Cmd::Simulate(c) => (Command::Simulate, c),
    };
    let cfg = match parse_config(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", common.config.display());
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let out = common
        .out
        .or_else(|| cfg.output.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let seed = common.seed.unwrap_or(cfg.seed);
    match execute(cmd, &cfg, &out, seed, common.threads) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
