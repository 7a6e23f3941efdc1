//! Multi-seed experiment runs and their on-disk outputs.
//!
//! An output directory holds:
//!
//! * `config.toml`: the fully resolved configuration,
//! * `returns_seed<s>.csv` per seed and `returns.csv` for all seeds, both with
//!   the header `seed,episode,return` (episodes numbered from 0),
//! * `diagnostics_seed<s>.jsonl`: one JSON object per training iteration,
//! * `summary.json`: parameter counts, the parsimony check and the median
//!   return per episode across seeds.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::envs::make_env;
use crate::par;
use crate::policy::SigmaMode;
use crate::stats;
use crate::trainer::{TrainHistory, Trainer};

pub const RETURNS_FILE: &str = "returns.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("output directory {0} is not empty; pass --force to overwrite")]
    OutputExists(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(#[from] crate::Error),
    #[error("seed {seed} failed: {error} (partial outputs kept in {out})")]
    SeedFailed {
        seed: u64,
        error: crate::Error,
        out: PathBuf,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBreakdown {
    pub actor_mean: usize,
    pub actor_sigma: usize,
    pub critic: usize,
}

/// `K (N + M) < N M / 2` for one factorized matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsimonyCheck {
    pub matrix: String,
    pub rank: usize,
    pub low_rank_params: usize,
    pub dense_params: usize,
    pub fraction: f64,
    pub holds: bool,
}

impl ParsimonyCheck {
    pub fn new(matrix: &str, rank: usize, rows: usize, cols: usize) -> Self {
        let low_rank_params = rank * (rows + cols);
        let dense_params = rows * cols;
        Self {
            matrix: matrix.to_string(),
            rank,
            low_rank_params,
            dense_params,
            fraction: low_rank_params as f64 / dense_params as f64,
            holds: 2 * low_rank_params < dense_params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub env: String,
    pub seeds: Vec<u64>,
    pub completed_seeds: Vec<u64>,
    pub failed_seeds: Vec<u64>,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Trainable parameters of actor plus critic.
    pub param_count: usize,
    pub param_breakdown: ParamBreakdown,
    pub parsimony: Vec<ParsimonyCheck>,
    pub parsimony_holds: bool,
    pub episodes_per_seed: usize,
    /// Median return per episode over the completed seeds.
    pub median_return: Vec<f64>,
    pub final_median_return: Option<f64>,
}

impl Summary {
    pub fn read(dir: &Path) -> Result<Self, RunError> {
        let path = dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| RunError::Io {
            path,
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })
    }
}

pub fn param_breakdown(cfg: &ExperimentConfig, rows: usize, cols: usize) -> ParamBreakdown {
    let per_rank = rows + cols;
    ParamBreakdown {
        actor_mean: cfg.actor.rank * per_rank,
        actor_sigma: match cfg.actor.sigma_mode {
            SigmaMode::Shared => 1,
            SigmaMode::LowRank => cfg.actor.rank * per_rank,
        },
        critic: cfg.critic.rank * per_rank,
    }
}

pub fn parsimony_checks(cfg: &ExperimentConfig, rows: usize, cols: usize) -> Vec<ParsimonyCheck> {
    let mut out = vec![ParsimonyCheck::new(
        "actor_mean",
        cfg.actor.rank,
        rows,
        cols,
    )];
    if cfg.actor.sigma_mode == SigmaMode::LowRank {
        out.push(ParsimonyCheck::new(
            "actor_sigma",
            cfg.actor.rank,
            rows,
            cols,
        ));
    }
    out.push(ParsimonyCheck::new("critic", cfg.critic.rank, rows, cols));
    out
}

/// Median across curves of equal length, episode by episode.
pub fn median_curve(curves: &[&[f64]]) -> Vec<f64> {
    let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..len)
        .map(|e| {
            let column: Vec<f64> = curves.iter().map(|c| c[e]).collect();
            stats::median(&column).expect("at least one curve")
        })
        .collect()
}

/// Writes `seed,episode,return` rows.
pub fn write_returns_csv<'a, I>(path: &Path, rows: I) -> Result<(), RunError>
where
    I: IntoIterator<Item = (u64, &'a [f64])>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    w.write_record(["seed", "episode", "return"])
        .map_err(|e| csv_err(path, e))?;
    for (seed, returns) in rows {
        for (episode, r) in returns.iter().enumerate() {
            w.write_record([seed.to_string(), episode.to_string(), r.to_string()])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> RunError {
    RunError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

fn write_diagnostics(path: &Path, history: &TrainHistory) -> Result<(), RunError> {
    let mut out = String::new();
    for report in &history.iterations {
        out.push_str(&serde_json::to_string(report).expect("reports serialize"));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

fn prepare_out_dir(dir: &Path, force: bool) -> Result<(), RunError> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).map_err(io_err(dir))?.next().is_some();
        if non_empty && !force {
            return Err(RunError::OutputExists(dir.to_path_buf()));
        }
    }
    fs::create_dir_all(dir).map_err(io_err(dir))
}

struct SeedResult {
    seed: u64,
    history: TrainHistory,
    error: Option<crate::Error>,
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedResult, RunError> {
    let env = make_env(&cfg.env)?;
    let grid = cfg.grid.build()?;
    let mut trainer = Trainer::new(env, grid, cfg.trainer_config(seed))?;
    let (history, error) = match trainer.train() {
        Ok(h) => (h, None),
        Err(f) => (f.history, Some(f.error)),
    };
    let out = &cfg.out;
    write_returns_csv(
        &out.join(format!("returns_seed{seed}.csv")),
        [(seed, history.episode_returns.as_slice())],
    )?;
    write_diagnostics(&out.join(format!("diagnostics_seed{seed}.jsonl")), &history)?;
    match &error {
        None => log::info!(
            "seed {seed}: {} episodes, final return {:.2}",
            history.n_episodes(),
            history.episode_returns.last().copied().unwrap_or(f64::NAN)
        ),
        Some(e) => log::error!("seed {seed}: {e}"),
    }
    Ok(SeedResult {
        seed,
        history,
        error,
    })
}

/// Trains once per seed and writes every output file. Seeds run
/// concurrently; each seed's outputs depend only on the config and the seed.
pub fn run(cfg: &ExperimentConfig, force: bool) -> Result<Summary, RunError> {
    let grid = cfg.grid.build()?;
    let (rows, cols) = grid.shape();
    prepare_out_dir(&cfg.out, force)?;
    let config_path = cfg.out.join(CONFIG_FILE);
    fs::write(&config_path, cfg.to_toml()).map_err(io_err(&config_path))?;

    let results = par::install(cfg.threads, || {
        par::map_slice(&cfg.seeds, |&s| run_seed(cfg, s))
    });
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let returns_path = cfg.out.join(RETURNS_FILE);
    write_returns_csv(
        &returns_path,
        results
            .iter()
            .map(|r| (r.seed, r.history.episode_returns.as_slice())),
    )?;

    let completed: Vec<&SeedResult> = results.iter().filter(|r| r.error.is_none()).collect();
    let curves: Vec<&[f64]> = completed
        .iter()
        .map(|r| r.history.episode_returns.as_slice())
        .collect();
    let median_return = median_curve(&curves);
    let breakdown = param_breakdown(cfg, rows, cols);
    let parsimony = parsimony_checks(cfg, rows, cols);
    let summary = Summary {
        env: cfg.env.clone(),
        seeds: cfg.seeds.clone(),
        completed_seeds: completed.iter().map(|r| r.seed).collect(),
        failed_seeds: results
            .iter()
            .filter(|r| r.error.is_some())
            .map(|r| r.seed)
            .collect(),
        grid_rows: rows,
        grid_cols: cols,
        param_count: breakdown.actor_mean + breakdown.actor_sigma + breakdown.critic,
        param_breakdown: breakdown,
        parsimony_holds: parsimony.iter().all(|p| p.holds),
        parsimony,
        episodes_per_seed: cfg.training.iterations * cfg.training.episodes_per_iteration,
        final_median_return: median_return.last().copied(),
        median_return,
    };
    let summary_path = cfg.out.join(SUMMARY_FILE);
    let mut file = fs::File::create(&summary_path).map_err(io_err(&summary_path))?;
    serde_json::to_writer_pretty(&mut file, &summary).expect("summary serializes");
    file.write_all(b"\n").map_err(io_err(&summary_path))?;

    if let Some(failed) = results.into_iter().find(|r| r.error.is_some()) {
        return Err(RunError::SeedFailed {
            seed: failed.seed,
            error: failed.error.expect("filtered on error"),
            out: cfg.out.clone(),
        });
    }
    Ok(summary)
}
