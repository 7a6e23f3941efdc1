//! Experiment configuration: per-environment presets overlaid with an
//! optional TOML file and then with command-line overrides.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::critic::CriticConfig;
use crate::discretizer::{Axis, StateGrid};
use crate::envs::{make_env, ENV_NAMES};
use crate::policy::{ActorConfig, SigmaMode};
use crate::trainer::{Trainer, TrainerConfig, TrainingConfig};
use crate::trustregion::TrustRegionConfig;

/// Seeds run by the default presets.
pub const DEFAULT_SEED_COUNT: u64 = 20;
/// Seeds run with `--paper-seeds`.
pub const PAPER_SEED_COUNT: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dims: Vec<Axis>,
    /// Dimensions indexing matrix rows. Empty means the default split.
    #[serde(default)]
    pub row_dims: Vec<usize>,
    #[serde(default)]
    pub col_dims: Vec<usize>,
}

impl GridSpec {
    pub fn build(&self) -> crate::Result<StateGrid> {
        if self.row_dims.is_empty() && self.col_dims.is_empty() {
            StateGrid::with_default_split(self.dims.clone())
        } else {
            StateGrid::new(
                self.dims.clone(),
                self.row_dims.clone(),
                self.col_dims.clone(),
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: String,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub grid: GridSpec,
    pub actor: ActorConfig,
    pub critic: CriticConfig,
    pub trust_region: TrustRegionConfig,
    pub training: TrainingConfig,
}

/// A configuration problem, anchored to a line of the file when one is known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: Option<PathBuf>,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn new(message: impl Into<String>) -> Self {
        Self {
            path: None,
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.path, self.line) {
            (Some(p), Some(l)) => write!(f, "{}:{}: {}", p.display(), l, self.message),
            (Some(p), None) => write!(f, "{}: {}", p.display(), self.message),
            (None, _) => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn seed_range(n: u64) -> Vec<u64> {
    (0..n).collect()
}

/// Default configuration for one environment.
///
/// Grid sizes, ranks and loop sizes are engineering choices; see the README
/// for the reasoning behind each preset.
pub fn preset(env: &str) -> Result<ExperimentConfig, ConfigError> {
    let base = |grid: GridSpec,
                actor: ActorConfig,
                critic: CriticConfig,
                delta: f64,
                training: TrainingConfig| ExperimentConfig {
        env: env.to_string(),
        seeds: seed_range(DEFAULT_SEED_COUNT),
        out: PathBuf::from(format!("runs/{env}")),
        threads: 0,
        grid,
        actor,
        critic,
        trust_region: TrustRegionConfig {
            delta,
            ..TrustRegionConfig::default()
        },
        training,
    };
    let cfg = match env {
        "pendulum" => base(
            GridSpec {
                dims: vec![Axis::new(-PI, PI, 20), Axis::new(-8.0, 8.0, 20)],
                row_dims: vec![0],
                col_dims: vec![1],
            },
            ActorConfig {
                sigma_init: 1.0,
                ..ActorConfig::default()
            },
            CriticConfig {
                learning_rate: 1e-5,
                steps: 100,
                ..CriticConfig::default()
            },
            0.02,
            TrainingConfig {
                iterations: 50,
                episodes_per_iteration: 10,
                horizon: 200,
                gamma: 0.95,
                ..TrainingConfig::default()
            },
        ),
        "mountaincar" => base(
            GridSpec {
                dims: vec![Axis::new(-1.2, 0.6, 20), Axis::new(-0.07, 0.07, 20)],
                row_dims: vec![0],
                col_dims: vec![1],
            },
            ActorConfig {
                sigma_init: 1.0,
                ..ActorConfig::default()
            },
            CriticConfig {
                learning_rate: 1e-6,
                ..CriticConfig::default()
            },
            0.05,
            TrainingConfig {
                iterations: 50,
                episodes_per_iteration: 10,
                horizon: 999,
                ..TrainingConfig::default()
            },
        ),
        "acrobot" => base(
            GridSpec {
                dims: vec![
                    Axis::new(-PI, PI, 8),
                    Axis::new(-PI, PI, 8),
                    Axis::new(-4.0 * PI, 4.0 * PI, 8),
                    Axis::new(-9.0 * PI, 9.0 * PI, 8),
                ],
                row_dims: vec![0, 2],
                col_dims: vec![1, 3],
            },
            ActorConfig {
                sigma_init: 2.0,
                ..ActorConfig::default()
            },
            CriticConfig {
                learning_rate: 1e-5,
                ..CriticConfig::default()
            },
            0.1,
            TrainingConfig {
                iterations: 50,
                episodes_per_iteration: 10,
                horizon: 500,
                gamma: 0.99,
                ..TrainingConfig::default()
            },
        ),
        other => {
            return Err(ConfigError::new(format!(
                "unknown environment {other:?}; expected one of {ENV_NAMES:?}"
            )))
        }
    };
    Ok(cfg)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialFile {
    env: Option<String>,
    seeds: Option<Vec<u64>>,
    out: Option<PathBuf>,
    threads: Option<usize>,
    grid: Option<PartialGrid>,
    actor: Option<PartialActor>,
    critic: Option<PartialCritic>,
    trust_region: Option<PartialTrustRegion>,
    training: Option<PartialTraining>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialGrid {
    dims: Option<Vec<Axis>>,
    row_dims: Option<Vec<usize>>,
    col_dims: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialActor {
    rank: Option<usize>,
    init_scale: Option<f64>,
    init_spread: Option<f64>,
    sigma_mode: Option<SigmaMode>,
    sigma_init: Option<f64>,
    sigma_floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialCritic {
    rank: Option<usize>,
    learning_rate: Option<f64>,
    steps: Option<usize>,
    init_scale: Option<f64>,
    init_spread: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialTrustRegion {
    delta: Option<f64>,
    cg_iters: Option<usize>,
    cg_tol: Option<f64>,
    damping: Option<f64>,
    backtrack_ratio: Option<f64>,
    max_backtracks: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialTraining {
    iterations: Option<usize>,
    episodes_per_iteration: Option<usize>,
    horizon: Option<usize>,
    gamma: Option<f64>,
    normalize_advantages: Option<bool>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl PartialFile {
    fn overlay(self, cfg: &mut ExperimentConfig) {
        set(&mut cfg.seeds, self.seeds);
        set(&mut cfg.out, self.out);
        set(&mut cfg.threads, self.threads);
        if let Some(g) = self.grid {
            // A new set of axes invalidates the preset's split.
            if g.dims.is_some() {
                cfg.grid.row_dims.clear();
                cfg.grid.col_dims.clear();
            }
            set(&mut cfg.grid.dims, g.dims);
            set(&mut cfg.grid.row_dims, g.row_dims);
            set(&mut cfg.grid.col_dims, g.col_dims);
        }
        if let Some(a) = self.actor {
            let t = &mut cfg.actor;
            set(&mut t.rank, a.rank);
            set(&mut t.init_scale, a.init_scale);
            set(&mut t.init_spread, a.init_spread);
            set(&mut t.sigma_mode, a.sigma_mode);
            set(&mut t.sigma_init, a.sigma_init);
            set(&mut t.sigma_floor, a.sigma_floor);
        }
        if let Some(c) = self.critic {
            let t = &mut cfg.critic;
            set(&mut t.rank, c.rank);
            set(&mut t.learning_rate, c.learning_rate);
            set(&mut t.steps, c.steps);
            set(&mut t.init_scale, c.init_scale);
            set(&mut t.init_spread, c.init_spread);
        }
        if let Some(r) = self.trust_region {
            let t = &mut cfg.trust_region;
            set(&mut t.delta, r.delta);
            set(&mut t.cg_iters, r.cg_iters);
            set(&mut t.cg_tol, r.cg_tol);
            set(&mut t.damping, r.damping);
            set(&mut t.backtrack_ratio, r.backtrack_ratio);
            set(&mut t.max_backtracks, r.max_backtracks);
        }
        if let Some(r) = self.training {
            let t = &mut cfg.training;
            set(&mut t.iterations, r.iterations);
            set(&mut t.episodes_per_iteration, r.episodes_per_iteration);
            set(&mut t.horizon, r.horizon);
            set(&mut t.gamma, r.gamma);
            set(&mut t.normalize_advantages, r.normalize_advantages);
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub env: Option<String>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// 1-based line of `key` inside `[table]` (top level when `table` is empty).
fn locate(text: &str, table: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut table_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line
                .trim_matches(|c| c == '[' || c == ']')
                .trim()
                .to_string();
            if current == table || (!table.is_empty() && current.starts_with(&format!("{table}.")))
            {
                table_line.get_or_insert(i + 1);
            }
            continue;
        }
        let in_table =
            current == table || (!table.is_empty() && current.starts_with(&format!("{table}.")));
        if in_table && !key.is_empty() {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    table_line
}

impl ExperimentConfig {
    /// Builds a configuration from an optional file and overrides. The
    /// environment comes from the override, then the file, then defaults to
    /// pendulum.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| ConfigError {
                path: Some(p.to_path_buf()),
                line: None,
                message: format!("cannot read config: {e}"),
            })?,
            None => String::new(),
        };
        resolve(&text, overrides).map_err(|e| ConfigError {
            path: path.map(Path::to_path_buf),
            ..e
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        resolve(text, &Overrides::default())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn trainer_config(&self, seed: u64) -> TrainerConfig {
        TrainerConfig {
            actor: self.actor.clone(),
            critic: self.critic.clone(),
            trust_region: self.trust_region.clone(),
            training: self.training.clone(),
            seed,
        }
    }

    /// Checks every field, reporting `(table, key, message)` for the first
    /// problem.
    fn validate(&self) -> Result<(), (&'static str, &'static str, String)> {
        if self.seeds.is_empty() {
            return Err(("", "seeds", "seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(("", "seeds", "seeds must be distinct".into()));
        }
        let grid = self.grid.build().map_err(|e| ("grid", "", e.to_string()))?;
        let (n, m) = grid.shape();
        let rank_ok = |k: usize| k >= 1 && k <= n.min(m);
        if !rank_ok(self.actor.rank) {
            return Err((
                "actor",
                "rank",
                format!("rank must lie in 1..={} for a {n}x{m} grid", n.min(m)),
            ));
        }
        if !rank_ok(self.critic.rank) {
            return Err((
                "critic",
                "rank",
                format!("rank must lie in 1..={} for a {n}x{m} grid", n.min(m)),
            ));
        }
        if !(self.actor.sigma_floor > 0.0 && self.actor.sigma_floor.is_finite()) {
            return Err(("actor", "sigma_floor", "sigma_floor must be > 0".into()));
        }
        if !(self.actor.sigma_init >= self.actor.sigma_floor && self.actor.sigma_init.is_finite()) {
            return Err((
                "actor",
                "sigma_init",
                "sigma_init must be finite and >= sigma_floor".into(),
            ));
        }
        if !(self.critic.learning_rate >= 0.0 && self.critic.learning_rate.is_finite()) {
            return Err((
                "critic",
                "learning_rate",
                "learning_rate must be finite and >= 0".into(),
            ));
        }
        self.trust_region
            .validate()
            .map_err(|e| ("trust_region", "", e.to_string()))?;
        let t = &self.training;
        if t.episodes_per_iteration == 0 {
            return Err((
                "training",
                "episodes_per_iteration",
                "episodes_per_iteration must be >= 1".into(),
            ));
        }
        if t.horizon == 0 {
            return Err(("training", "horizon", "horizon must be >= 1".into()));
        }
        if !(t.gamma > 0.0 && t.gamma <= 1.0) {
            return Err((
                "training",
                "gamma",
                format!("gamma must lie in (0, 1], got {}", t.gamma),
            ));
        }
        let env = make_env(&self.env).map_err(|e| ("", "env", e.to_string()))?;
        Trainer::new(env, grid, self.trainer_config(self.seeds[0]))
            .map_err(|e| ("", "", e.to_string()))?;
        Ok(())
    }
}

fn resolve(text: &str, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let anchored = |line: Option<usize>, message: String| ConfigError {
        path: None,
        line,
        message,
    };
    let partial: PartialFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
        anchored(line, e.message().to_string())
    })?;
    let env = overrides
        .env
        .clone()
        .or_else(|| partial.env.clone())
        .unwrap_or_else(|| "pendulum".to_string());
    let mut cfg = preset(&env).map_err(|e| anchored(locate(text, "", "env"), e.message))?;
    partial.overlay(&mut cfg);
    set(&mut cfg.seeds, overrides.seeds.clone());
    set(&mut cfg.out, overrides.out.clone());
    set(&mut cfg.threads, overrides.threads);
    cfg.validate()
        .map_err(|(table, key, msg)| anchored(locate(text, table, key), msg))?;
    Ok(cfg)
}
