use std::path::PathBuf;
use std::process::ExitCode;

use bayesagg::{load_config, run_experiment, run_mixing, run_study, run_verify, ExperimentConfig};
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "bayesagg", version, about = "Distributed equilibrium seeking in Bayesian aggregative games")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// Config file (`section.key = value` lines); defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides both `network.seed` and `solver.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the effective configuration (the defaults when no --config is given) and exit.
    #[arg(long, global = true)]
    print_defaults: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Oracle, distributed run, exploitability and artifacts.
    Run,
    /// Exploitability versus grid size and best-response refinement gaps.
    Study,
    /// Consensus mixing diagnostic of the network schedule.
    Mixing,
    /// Invariant suite on the configured game.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(path) => match load_config(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("config error: {e}");
                return ExitCode::from(2);
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = cli.out {
        config.output.dir = dir;
    }
    if let Some(seed) = cli.seed {
        config.network.seed = seed;
        config.solver.seed = seed;
    }
    if cli.print_defaults {
        print!("{}", config.to_text());
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command else {
        eprintln!("no subcommand given (run, study, mixing, verify); see --help");
        return ExitCode::from(2);
    };
    let result = match command {
        Command::Run => run_experiment(&config).map(|s| {
            println!("final oracle distance: {:.6e}", s.final_distance);
            println!("final iterate epsilon: {:.6e}", s.epsilon);
            println!("artifacts in {}", s.out_dir.display());
        }),
        Command::Study => run_study(&config).map(|()| println!("study written to {}", config.output.dir.display())),
        Command::Mixing => run_mixing(&config).map(|()| println!("mixing written to {}", config.output.dir.display())),
        Command::Verify => run_verify(&config).map(|checks| {
            for c in checks {
                println!("PASS {}: {}", c.name, c.detail);
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
