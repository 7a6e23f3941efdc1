use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use trlrpo::experiment::config::{preset, PAPER_SEED_COUNT};
use trlrpo::experiment::{aggregate, run, ExperimentConfig, Overrides};

/// Trust-region policy optimization with low-rank actor and critic.
///
/// Log verbosity is controlled by RUST_LOG (default: info).
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train once per seed and write returns, diagnostics and a summary.
    Run {
        /// TOML configuration; omitted keys take the environment's preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// pendulum, acrobot or mountaincar.
        #[arg(long)]
        env: Option<String>,
        /// Comma-separated seed list.
        #[arg(long, value_delimiter = ',', conflicts_with = "paper_seeds")]
        seeds: Option<Vec<u64>>,
        /// Run seeds 0..100 instead of the preset's 20.
        #[arg(long)]
        paper_seeds: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 1 runs everything on one thread.
        #[arg(long)]
        threads: Option<usize>,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Median and quartile return per episode across the seeds of one or
    /// more runs.
    Aggregate {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Trailing moving-average window applied to each column.
        #[arg(long)]
        smooth: Option<usize>,
    },
    /// Print an environment's preset configuration as TOML.
    Preset { env: String },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Run {
            config,
            env,
            seeds,
            paper_seeds,
            out,
            threads,
            force,
        } => {
            let overrides = Overrides {
                env,
                seeds: if paper_seeds {
                    Some((0..PAPER_SEED_COUNT).collect())
                } else {
                    seeds
                },
                out,
                threads,
            };
            let cfg = ExperimentConfig::load(config.as_deref(), &overrides)?;
            log::info!(
                "{}: {} seeds, {} iterations x {} episodes, output {}",
                cfg.env,
                cfg.seeds.len(),
                cfg.training.iterations,
                cfg.training.episodes_per_iteration,
                cfg.out.display()
            );
            let summary = run(&cfg, force)?;
            println!(
                "{}: param_count {} ({}x{} grid), final median return {:.3}",
                summary.env,
                summary.param_count,
                summary.grid_rows,
                summary.grid_cols,
                summary.final_median_return.unwrap_or(f64::NAN)
            );
            if !summary.parsimony_holds {
                log::warn!(
                    "K(N+M) >= NM/2 for at least one matrix; the factorization saves little"
                );
            }
        }
        Command::Aggregate { runs, out, smooth } => {
            let rows = aggregate(&runs, &out, smooth)?;
            println!("wrote {} episodes to {}", rows.len(), out.display());
        }
        Command::Preset { env } => print!("{}", preset(&env)?.to_toml()),
    }
    Ok(())
}
