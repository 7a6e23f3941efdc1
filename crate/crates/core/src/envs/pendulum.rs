use std::f64::consts::PI;

use rand::{Rng, RngCore};

use super::{wrap_angle, EnvSpec, Environment, StepOutcome};

/// Torque-driven rigid rod. State is `(angle, angular velocity)` with the
/// angle measured from upright and wrapped to `[-pi, pi)`.
#[derive(Debug, Clone)]
pub struct Pendulum {
    spec: EnvSpec,
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub max_speed: f64,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            spec: EnvSpec {
                name: "pendulum".into(),
                state_dim: 2,
                action_low: -2.0,
                action_high: 2.0,
                max_steps: 200,
            },
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            max_speed: 8.0,
        }
    }
}

impl Environment for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset_with(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let theta = rng.random_range(-PI..=PI);
        let theta_dot = rng.random_range(-1.0..=1.0);
        vec![theta, theta_dot]
    }

    fn dynamics(&self, state: &[f64], torque: f64) -> StepOutcome {
        let (theta, theta_dot) = (state[0], state[1]);
        let angle = wrap_angle(theta);
        let cost = angle * angle + 0.1 * theta_dot * theta_dot + 0.001 * torque * torque;

        let (g, m, l) = (self.gravity, self.mass, self.length);
        let accel = 3.0 * g / (2.0 * l) * theta.sin() + 3.0 / (m * l * l) * torque;
        let new_dot = (theta_dot + accel * self.dt).clamp(-self.max_speed, self.max_speed);
        let new_theta = wrap_angle(theta + new_dot * self.dt);

        StepOutcome {
            next_state: vec![new_theta, new_dot],
            reward: -cost,
            terminal: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_bounds_over_many_seeds() {
        let env = Pendulum::default();
        for seed in 0..1000 {
            let s = env.reset(seed);
            assert!((-PI..=PI).contains(&s[0]));
            assert!((-1.0..=1.0).contains(&s[1]));
        }
        assert_eq!(env.reset(5), env.reset(5));
    }

    #[test]
    fn upright_rest_has_zero_reward() {
        let env = Pendulum::default();
        let out = env.step(&[0.0, 0.0], 0.0).unwrap();
        assert_eq!(out.reward, 0.0);
        assert_eq!(out.next_state, vec![0.0, 0.0]);
        assert!(!out.terminal);
    }

    #[test]
    fn one_step_hand_evaluation() {
        let env = Pendulum::default();
        // theta_dot' = 0.5 + (15 sin(1) + 3 * 1.5) * 0.05
        let out = env.step(&[1.0, 0.5], 1.5).unwrap();
        let dot = 0.5 + (15.0 * 1.0f64.sin() + 4.5) * 0.05;
        assert!((out.next_state[1] - dot).abs() < 1e-12);
        assert!((out.next_state[0] - (1.0 + dot * 0.05)).abs() < 1e-12);
        let cost = 1.0 + 0.1 * 0.25 + 0.001 * 2.25;
        assert!((out.reward + cost).abs() < 1e-12);
    }

    #[test]
    fn torque_is_clipped() {
        let env = Pendulum::default();
        let a = env.step(&[0.3, 0.0], 50.0).unwrap();
        let b = env.step(&[0.3, 0.0], 2.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reward_bounds() {
        let env = Pendulum::default();
        let worst = -(PI * PI + 0.1 * 64.0 + 0.001 * 4.0);
        for (th, dot, u) in [(PI - 1e-9, 8.0, 2.0), (-PI, -8.0, -2.0), (0.1, 3.0, 0.5)] {
            let r = env.step(&[th, dot], u).unwrap().reward;
            assert!(r <= 0.0 && r >= worst - 1e-12, "{r}");
        }
    }
}
