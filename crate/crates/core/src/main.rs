use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use longball::commands;
use longball::config::{Overrides, RunConfig};
use longball::error::Error;

#[derive(Debug, Parser)]
#[command(
    name = "longball",
    about = "Hierarchical Bayesian home-run forecasting: fit, predict, validate, report, simulate",
    version
)]
struct Cli {
    /// TOML run configuration; flags below override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    #[arg(long, global = true)]
    iters: Option<usize>,
    #[arg(long = "burn-in", global = true)]
    burn_in: Option<usize>,
    #[arg(long, global = true)]
    thin: Option<usize>,
    /// Model variant: full, no_position_no_elite, or pshmm.
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Training data file.
    #[arg(long, global = true)]
    train: Option<PathBuf>,
    /// Hold-out data file.
    #[arg(long, global = true)]
    holdout: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Fit the model and persist chains plus diagnostics.
    Fit,
    /// Posterior predictive table for the hold-out season.
    Predict,
    /// Model-comparison reports from prediction tables and truths.
    Validate,
    /// Analysis exports: elite onset, age curves, intercepts, contribution.
    Report,
    /// Generate a synthetic training set and hold-out.
    Simulate,
}

fn run(cli: &Cli) -> Result<(), Error> {
    let overrides = Overrides {
        seed: cli.seed,
        chains: cli.chains,
        iters: cli.iters,
        burn_in: cli.burn_in,
        thin: cli.thin,
        variant: cli.variant.clone(),
        out: cli.out.clone(),
        train: cli.train.clone(),
        holdout: cli.holdout.clone(),
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    if let Some(n) = cli.threads {
        // Ignored if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Cmd::Fit => {
            let out = commands::cmd_fit(&cfg)?;
            println!("wrote {} chain file(s) to {}", out.chain_paths.len(), cfg.output.dir.display());
            if let Some((name, r)) = out.max_rhat {
                println!("max gelman-rubin {r:.4} ({name})");
            }
        }
        Cmd::Predict => {
            let path = commands::cmd_predict(&cfg)?;
            println!("wrote {}", path.display());
        }
        Cmd::Validate => {
            let out = commands::cmd_validate(&cfg)?;
            println!("wrote {}", out.internal_path.display());
            if let Some(p) = out.external_path {
                println!("wrote {}", p.display());
            }
        }
        Cmd::Report => {
            let out = commands::cmd_report(&cfg)?;
            println!(
                "wrote {}, {}, {} curve file(s)",
                out.onset_path.display(),
                out.intercept_path.display(),
                out.curve_paths.len()
            );
        }
        Cmd::Simulate => {
            let out = commands::cmd_simulate(&cfg)?;
            println!(
                "wrote {}, {}, {}",
                out.train_path.display(),
                out.holdout_path.display(),
                out.truth_path.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
