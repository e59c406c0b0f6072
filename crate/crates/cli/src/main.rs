use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lyaplab::config::ExperimentConfig;
use lyaplab::experiment::{self, Outcome, RunContext};
use lyaplab::Error;

/// Simulate accelerated gradient flows and certify Lyapunov energies along them.
#[derive(Parser, Debug)]
#[command(name = "lyaplab", version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (JSON)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides the config's output_dir
    #[arg(long, global = true, env = "LYAPLAB_OUT", value_name = "DIR")]
    out: Option<PathBuf>,

    /// Seed for randomized objectives; overrides the config's seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Integrate every (objective, system) pair and write trajectory CSVs
    Simulate,
    /// Run all certifications; exit 1 if any fails
    Certify,
    /// Search the power-law ansatz family and reconstruct r-dependence
    Discover,
    /// Fit decay rates, compare rate exponents and write plot data
    Fit,
    /// Concatenate existing outputs into summary.txt
    Report,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Integration { .. } => 3,
        _ => 2,
    }
}

fn run(args: &Args) -> Result<Outcome, Error> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| Error::Input("--config is required".into()))?;
    let cfg = ExperimentConfig::load(path)?;
    let mut ctx = RunContext::from_config(&cfg);
    if let Some(out) = &args.out {
        ctx.out = out.clone();
    }
    if let Some(seed) = args.seed {
        ctx.seed = seed;
    }
    match args.command {
        Command::Simulate => experiment::run_simulate(&cfg, &ctx),
        Command::Certify => experiment::run_certify(&cfg, &ctx),
        Command::Discover => experiment::run_discover(&cfg, &ctx),
        Command::Fit => experiment::run_fit(&cfg, &ctx),
        Command::Report => experiment::run_report(&cfg, &ctx),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&args) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            for f in &outcome.failures {
                eprintln!("FAILED {f}");
            }
            if outcome.certification_failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
