//! The training loop: sample episodes under the current policy, compute
//! advantages against the frozen critic, take one trust-region actor step,
//! then fit the critic to the fresh returns.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use crate::buffer::RolloutBuffer;
use crate::critic::{Critic, CriticConfig};
use crate::discretizer::StateGrid;
use crate::envs::{Environment, Episode, Transition};
use crate::error::{Error, Result};
use crate::par;
use crate::policy::{ActorConfig, GaussianPolicy};
use crate::stats;
use crate::trustregion::{trust_region_update, StepDiagnostics, TrustRegionConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Outer iterations `H`.
    pub iterations: usize,
    /// Episodes per iteration `E`.
    pub episodes_per_iteration: usize,
    /// Step limit per episode `T`.
    pub horizon: usize,
    pub gamma: f64,
    pub normalize_advantages: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            episodes_per_iteration: 10,
            horizon: 200,
            gamma: 1.0,
            normalize_advantages: false,
        }
    }
}

/// Everything needed to build and run a [`Trainer`] apart from the
/// environment and grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub actor: ActorConfig,
    pub critic: CriticConfig,
    pub trust_region: TrustRegionConfig,
    pub training: TrainingConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutSpec {
    pub episodes: usize,
    pub horizon: usize,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub episode_returns: Vec<f64>,
    pub n_transitions: usize,
    pub step: StepDiagnostics,
    pub critic_loss_before: f64,
    pub critic_loss_after: f64,
    pub sigma_mean: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// `sum_t r_t` of every training episode, in order.
    pub episode_returns: Vec<f64>,
    pub iterations: Vec<IterationReport>,
    pub actor_params: usize,
    pub critic_params: usize,
}

impl TrainHistory {
    pub fn n_episodes(&self) -> usize {
        self.episode_returns.len()
    }
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug)]
pub struct TrainFailure {
    pub history: TrainHistory,
    pub error: Error,
}

impl std::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "training aborted after {} iterations: {}",
            self.history.iterations.len(),
            self.error
        )
    }
}

impl std::error::Error for TrainFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Runs one episode with its own RNG stream.
fn run_episode(
    env: &dyn Environment,
    policy: &GaussianPolicy,
    horizon: usize,
    episode_id: usize,
    seed: u64,
) -> Result<Vec<Transition>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = env.reset_with(&mut rng);
    let mut episode = Episode::new(env, start, horizon);
    let mut out = Vec::with_capacity(horizon);
    while !episode.is_finished() {
        let state = episode.state().to_vec();
        let action = policy.sample_action(&state, &mut rng)?;
        let step_index = episode.steps();
        let (outcome, done) = episode.step(action)?;
        out.push(Transition {
            state,
            action,
            next_state: outcome.next_state,
            reward: outcome.reward,
            done,
            episode_id,
            step_index,
        });
    }
    Ok(out)
}

/// Samples `spec.episodes` episodes. One seed per episode is drawn from `rng`
/// up front, so the buffer is identical whether episodes run in parallel or
/// not.
pub fn collect_rollouts<R: Rng + ?Sized>(
    env: &dyn Environment,
    policy: &GaussianPolicy,
    spec: RolloutSpec,
    rng: &mut R,
) -> Result<RolloutBuffer> {
    if spec.episodes == 0 {
        return Err(Error::Config("episodes per iteration must be >= 1".into()));
    }
    let seeds: Vec<u64> = (0..spec.episodes).map(|_| rng.next_u64()).collect();
    let episodes = par::map_range(spec.episodes, |e| {
        run_episode(env, policy, spec.horizon, e, seeds[e])
    });
    let mut transitions = Vec::new();
    for ep in episodes {
        transitions.extend(ep?);
    }
    RolloutBuffer::from_transitions(transitions, policy, spec.gamma)
}

pub struct Trainer {
    env: Box<dyn Environment>,
    policy: GaussianPolicy,
    critic: Critic,
    config: TrainerConfig,
    rng: ChaCha8Rng,
    iteration: usize,
}

impl Trainer {
    pub fn new(env: Box<dyn Environment>, grid: StateGrid, config: TrainerConfig) -> Result<Self> {
        if grid.state_dim() != env.spec().state_dim {
            return Err(Error::Config(format!(
                "grid has {} dimensions but {} states have {}",
                grid.state_dim(),
                env.spec().name,
                env.spec().state_dim
            )));
        }
        config.trust_region.validate()?;
        let t = &config.training;
        if t.episodes_per_iteration == 0 || t.horizon == 0 {
            return Err(Error::Config(
                "episodes_per_iteration and horizon must be >= 1".into(),
            ));
        }
        if !(t.gamma > 0.0 && t.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "gamma must lie in (0, 1], got {}",
                t.gamma
            )));
        }
        let grid = Arc::new(grid);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let policy = GaussianPolicy::init(grid.clone(), &config.actor, &mut rng)?;
        let critic = Critic::init(grid, &config.critic, &mut rng)?;
        Ok(Self {
            env,
            policy,
            critic,
            config,
            rng,
            iteration: 0,
        })
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn critic(&self) -> &Critic {
        &self.critic
    }

    pub fn env(&self) -> &dyn Environment {
        self.env.as_ref()
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn rollout_spec(&self) -> RolloutSpec {
        let t = &self.config.training;
        RolloutSpec {
            episodes: t.episodes_per_iteration,
            horizon: t.horizon,
            gamma: t.gamma,
        }
    }

    /// Actor and critic updates on an already collected buffer. Advantages
    /// are computed here from the critic as it stands before its own update.
    pub fn update_from_buffer(
        &mut self,
        buffer: &mut RolloutBuffer,
    ) -> Result<(StepDiagnostics, Vec<f64>)> {
        buffer.check_aligned()?;
        buffer.advantages = self
            .critic
            .advantages(buffer, self.config.training.normalize_advantages);
        let (policy, step) = trust_region_update(
            &self.policy,
            &buffer.policy_batch()?,
            &self.config.trust_region,
        )?;
        self.policy = policy;
        let trace = self
            .critic
            .critic_update(buffer, self.config.critic.steps)?;
        Ok((step, trace))
    }

    pub fn train_iteration(&mut self) -> Result<IterationReport> {
        let started = Instant::now();
        let spec = self.rollout_spec();
        let mut buffer = collect_rollouts(self.env.as_ref(), &self.policy, spec, &mut self.rng)?;
        let (step, trace) = self.update_from_buffer(&mut buffer)?;
        if !step.accepted {
            log::info!("iteration {}: trust-region step rejected", self.iteration);
        }
        let report = IterationReport {
            iteration: self.iteration,
            episode_returns: buffer.episode_totals(),
            n_transitions: buffer.len(),
            step,
            critic_loss_before: trace[0],
            critic_loss_after: *trace.last().expect("trace has the initial loss"),
            sigma_mean: mean_sigma(&self.policy, &buffer),
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        self.iteration += 1;
        Ok(report)
    }

    /// Runs the configured number of iterations.
    pub fn train(&mut self) -> Result<TrainHistory, TrainFailure> {
        let mut history = TrainHistory {
            actor_params: self.policy.param_count(),
            critic_params: self.critic.param_count(),
            ..Default::default()
        };
        for _ in 0..self.config.training.iterations {
            match self.train_iteration() {
                Ok(report) => {
                    log::debug!(
                        "iteration {}: median return {:.2}, kl {:.2e}",
                        report.iteration,
                        stats::median(&report.episode_returns).unwrap_or(f64::NAN),
                        report.step.kl_after
                    );
                    history
                        .episode_returns
                        .extend_from_slice(&report.episode_returns);
                    history.iterations.push(report);
                }
                Err(error) => return Err(TrainFailure { history, error }),
            }
        }
        Ok(history)
    }
}

fn mean_sigma(policy: &GaussianPolicy, buffer: &RolloutBuffer) -> f64 {
    if buffer.is_empty() {
        return policy.std_at(crate::discretizer::Cell::new(0, 0));
    }
    buffer.cells.iter().map(|&c| policy.std_at(c)).sum::<f64>() / buffer.len() as f64
}

/// Builds a trainer and runs it to completion.
pub fn train(
    env: Box<dyn Environment>,
    grid: StateGrid,
    config: TrainerConfig,
) -> Result<(TrainHistory, GaussianPolicy, Critic), TrainFailure> {
    let mut trainer = Trainer::new(env, grid, config).map_err(|error| TrainFailure {
        history: TrainHistory::default(),
        error,
    })?;
    let history = trainer.train()?;
    Ok((history, trainer.policy, trainer.critic))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Stochastic,
    MeanAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnStats {
    pub returns: Vec<f64>,
    pub median: f64,
    pub mean: f64,
    pub std: f64,
}

impl ReturnStats {
    pub fn from_returns(returns: Vec<f64>) -> Option<Self> {
        Some(Self {
            median: stats::median(&returns)?,
            mean: stats::mean(&returns)?,
            std: stats::std_dev(&returns)?,
            returns,
        })
    }
}

/// Policy returns without learning. Mean-action mode uses `a = mu(s)` and
/// only consumes randomness for the start states.
pub fn evaluate(
    policy: &GaussianPolicy,
    env: &dyn Environment,
    n_episodes: usize,
    horizon: usize,
    mode: EvalMode,
    seed: u64,
) -> Result<ReturnStats> {
    if n_episodes == 0 {
        return Err(Error::Config("n_episodes must be >= 1".into()));
    }
    let returns = par::map_range(n_episodes, |e| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(e as u64);
        let mut episode = Episode::new(env, env.reset_with(&mut rng), horizon);
        let mut total = 0.0;
        while !episode.is_finished() {
            let action = match mode {
                EvalMode::Stochastic => policy.sample_action(episode.state(), &mut rng)?,
                EvalMode::MeanAction => policy.mean(episode.state())?,
            };
            total += episode.step(action)?.0.reward;
        }
        Ok(total)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ReturnStats::from_returns(returns).expect("n_episodes >= 1"))
}

/// Return of one episode under a fixed action, e.g. the zero-torque baseline.
pub fn constant_action_return(
    env: &dyn Environment,
    action: f64,
    horizon: usize,
    seed: u64,
) -> Result<f64> {
    let mut episode = Episode::new(env, env.reset(seed), horizon);
    let mut total = 0.0;
    while !episode.is_finished() {
        total += episode.step(action)?.0.reward;
    }
    Ok(total)
}
