use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spinsqueeze::cli::{run, Command, RunConfig, KEYS};

#[derive(Parser)]
#[command(version, about = "Faraday spin-squeezing simulations", after_help = key_help())]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct Common {
    /// key = value file, or a manifest.json from an earlier run
    #[arg(long)]
    config: Option<PathBuf>,
    /// --key value overrides, e.g. --f 4 --prep mx0
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Sub {
    /// Plane-wave covariance-map protocol run
    Simulate(Common),
    /// Differential QND equations
    Ode(Common),
    /// Multi-start search over fiducial states
    Optimize(Common),
    /// Paraxial squeezing over an (aspect ratio, waist) grid
    ParaxialScan(Common),
    /// Exact f = 1 reference trajectory
    OracleF1(Common),
    /// Difference report between two trajectory CSVs (--run-a, --run-b)
    Compare(Common),
}

fn key_help() -> String {
    let mut s = String::from("Configuration keys (file or --key value):\n");
    for (k, d) in KEYS {
        s.push_str(&format!("  {k:<18} {d}\n"));
    }
    s
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Sub::Simulate(c) => (Command::Simulate, c),
        Sub::Ode(c) => (Command::Ode, c),
        Sub::Optimize(c) => (Command::Optimize, c),
        Sub::ParaxialScan(c) => (Command::ParaxialScan, c),
        Sub::OracleF1(c) => (Command::OracleF1, c),
        Sub::Compare(c) => (Command::Compare, c),
    };
    let mut cfg = RunConfig::new(cmd);
    let result = common
        .config
        .as_deref()
        .map_or(Ok(()), |p| cfg.merge_file(p))
        .and_then(|_| cfg.merge_args(&common.overrides))
        .and_then(|_| run(&cfg));
    match result {
        Ok(out) => {
            print!("{}", out.summary);
            println!("wrote {}", out.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
