//! Continuous-action classic-control tasks.
//!
//! Each environment is a pure transition function: `reset` draws a start
//! state, `step` maps `(state, action)` to `(next_state, reward, terminal)`.
//! Horizon truncation is tracked separately by [`Episode`].

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod acrobot;
mod mountain_car;
mod pendulum;

pub use acrobot::Acrobot;
pub use mountain_car::MountainCar;
pub use pendulum::Pendulum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_low: f64,
    pub action_high: f64,
    pub max_steps: usize,
}

impl EnvSpec {
    pub fn clip_action(&self, action: f64) -> f64 {
        action.clamp(self.action_low, self.action_high)
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// Goal reached; horizon truncation is not reported here.
    pub terminal: bool,
}

/// One recorded environment interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    /// The sampled (unclipped) action.
    pub action: f64,
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub episode_id: usize,
    pub step_index: usize,
}

pub trait Environment: Send + Sync {
    fn spec(&self) -> &EnvSpec;

    /// Draws a start state.
    fn reset_with(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Transition on an action already clipped to the action bounds.
    fn dynamics(&self, state: &[f64], action: f64) -> StepOutcome;

    /// Deterministic reset from a seed.
    fn reset(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.reset_with(&mut rng)
    }

    /// Clips the action, validates inputs and applies the dynamics.
    fn step(&self, state: &[f64], action: f64) -> Result<StepOutcome> {
        let spec = self.spec();
        if state.len() != spec.state_dim {
            return Err(Error::Shape {
                expected: spec.state_dim,
                actual: state.len(),
            });
        }
        if !action.is_finite() {
            return Err(Error::NonFinite(format!(
                "action {action} in {}",
                spec.name
            )));
        }
        if state.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "state {state:?} in {}",
                spec.name
            )));
        }
        let out = self.dynamics(state, spec.clip_action(action));
        if out.next_state.iter().any(|x| !x.is_finite()) || !out.reward.is_finite() {
            return Err(Error::NonFinite(format!(
                "{} produced non-finite output from state {state:?}",
                spec.name
            )));
        }
        Ok(out)
    }
}

pub const ENV_NAMES: [&str; 3] = ["pendulum", "acrobot", "mountaincar"];

pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    match name {
        "pendulum" => Ok(Box::new(Pendulum::default())),
        "acrobot" => Ok(Box::new(Acrobot::default())),
        "mountaincar" => Ok(Box::new(MountainCar::default())),
        other => Err(Error::Config(format!(
            "unknown environment {other:?}; expected one of {ENV_NAMES:?}"
        ))),
    }
}

/// Step counter enforcing the horizon on top of an [`Environment`].
pub struct Episode<'a> {
    env: &'a dyn Environment,
    state: Vec<f64>,
    steps: usize,
    horizon: usize,
    finished: bool,
}

impl<'a> Episode<'a> {
    pub fn new(env: &'a dyn Environment, initial_state: Vec<f64>, horizon: usize) -> Self {
        Self {
            env,
            state: initial_state,
            steps: 0,
            horizon: horizon.max(1),
            finished: false,
        }
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Returns `(reward, done)`; `done` once the goal is reached or the
    /// horizon is exhausted.
    pub fn step(&mut self, action: f64) -> Result<(StepOutcome, bool)> {
        debug_assert!(!self.finished, "stepping a finished episode");
        let out = self.env.step(&self.state, action)?;
        self.steps += 1;
        let done = out.terminal || self.steps >= self.horizon;
        self.finished = done;
        self.state.clone_from(&out.next_state);
        Ok((out, done))
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub(crate) fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::PI;
    (x + PI).rem_euclid(2.0 * PI) - PI
}
