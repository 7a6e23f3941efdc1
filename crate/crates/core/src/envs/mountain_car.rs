use rand::{Rng, RngCore};

use super::{EnvSpec, Environment, StepOutcome};

/// Continuous-force mountain car. State is `(position, velocity)`.
#[derive(Debug, Clone)]
pub struct MountainCar {
    spec: EnvSpec,
    pub min_position: f64,
    pub max_position: f64,
    pub max_speed: f64,
    pub goal_position: f64,
    pub power: f64,
    pub goal_bonus: f64,
}

impl Default for MountainCar {
    fn default() -> Self {
        Self {
            spec: EnvSpec {
                name: "mountaincar".into(),
                state_dim: 2,
                action_low: -1.0,
                action_high: 1.0,
                max_steps: 999,
            },
            min_position: -1.2,
            max_position: 0.6,
            max_speed: 0.07,
            goal_position: 0.45,
            power: 0.0015,
            goal_bonus: 100.0,
        }
    }
}

impl Environment for MountainCar {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset_with(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        vec![rng.random_range(-0.6..=-0.4), 0.0]
    }

    fn dynamics(&self, state: &[f64], force: f64) -> StepOutcome {
        let (position, velocity) = (state[0], state[1]);
        let mut velocity = velocity + force * self.power - 0.0025 * (3.0 * position).cos();
        velocity = velocity.clamp(-self.max_speed, self.max_speed);
        let position = (position + velocity).clamp(self.min_position, self.max_position);
        if position == self.min_position && velocity < 0.0 {
            velocity = 0.0;
        }

        let terminal = position >= self.goal_position && velocity >= 0.0;
        let mut reward = -0.1 * force * force;
        if terminal {
            reward += self.goal_bonus;
        }
        StepOutcome {
            next_state: vec![position, velocity],
            reward,
            terminal,
        }
    }
}
