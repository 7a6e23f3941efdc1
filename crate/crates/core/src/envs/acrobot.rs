use std::f64::consts::PI;

use rand::{Rng, RngCore};

use super::{wrap_angle, EnvSpec, Environment, StepOutcome};

/// Two-link underactuated arm with a continuous torque on the second joint.
/// State is `(theta1, theta2, dtheta1, dtheta2)`; integrated with one RK4
/// step per control interval.
#[derive(Debug, Clone)]
pub struct Acrobot {
    spec: EnvSpec,
    pub dt: f64,
    pub link_length_1: f64,
    pub link_mass_1: f64,
    pub link_mass_2: f64,
    pub link_com_1: f64,
    pub link_com_2: f64,
    pub link_moi: f64,
    pub gravity: f64,
    pub max_vel_1: f64,
    pub max_vel_2: f64,
}

impl Default for Acrobot {
    fn default() -> Self {
        Self {
            spec: EnvSpec {
                name: "acrobot".into(),
                state_dim: 4,
                action_low: -1.0,
                action_high: 1.0,
                max_steps: 500,
            },
            dt: 0.2,
            link_length_1: 1.0,
            link_mass_1: 1.0,
            link_mass_2: 1.0,
            link_com_1: 0.5,
            link_com_2: 0.5,
            link_moi: 1.0,
            gravity: 9.8,
            max_vel_1: 4.0 * PI,
            max_vel_2: 9.0 * PI,
        }
    }
}

impl Acrobot {
    /// Time derivative of `(theta1, theta2, dtheta1, dtheta2)` under torque.
    fn derivatives(&self, s: [f64; 4], torque: f64) -> [f64; 4] {
        let (m1, m2) = (self.link_mass_1, self.link_mass_2);
        let l1 = self.link_length_1;
        let (lc1, lc2) = (self.link_com_1, self.link_com_2);
        let (i1, i2) = (self.link_moi, self.link_moi);
        let g = self.gravity;
        let [theta1, theta2, dtheta1, dtheta2] = s;

        let d1 =
            m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * theta2.cos()) + i1 + i2;
        let d2 = m2 * (lc2 * lc2 + l1 * lc2 * theta2.cos()) + i2;
        let phi2 = m2 * lc2 * g * (theta1 + theta2 - PI / 2.0).cos();
        let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * theta2.sin()
            - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * theta2.sin()
            + (m1 * lc1 + m2 * l1) * g * (theta1 - PI / 2.0).cos()
            + phi2;
        let ddtheta2 =
            (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * theta2.sin() - phi2)
                / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
        let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
        [dtheta1, dtheta2, ddtheta1, ddtheta2]
    }

    fn rk4(&self, s: [f64; 4], torque: f64) -> [f64; 4] {
        let h = self.dt;
        let add = |a: [f64; 4], b: [f64; 4], w: f64| std::array::from_fn(|i| a[i] + w * b[i]);
        let k1 = self.derivatives(s, torque);
        let k2 = self.derivatives(add(s, k1, h / 2.0), torque);
        let k3 = self.derivatives(add(s, k2, h / 2.0), torque);
        let k4 = self.derivatives(add(s, k3, h), torque);
        std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
    }

    /// Height of the free end above the pivot, in link lengths.
    pub fn tip_height(state: &[f64]) -> f64 {
        -state[0].cos() - (state[0] + state[1]).cos()
    }
}

impl Environment for Acrobot {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset_with(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..4).map(|_| rng.random_range(-0.1..=0.1)).collect()
    }

    fn dynamics(&self, state: &[f64], torque: f64) -> StepOutcome {
        let s = [state[0], state[1], state[2], state[3]];
        let ns = self.rk4(s, torque);
        let next_state = vec![
            wrap_angle(ns[0]),
            wrap_angle(ns[1]),
            ns[2].clamp(-self.max_vel_1, self.max_vel_1),
            ns[3].clamp(-self.max_vel_2, self.max_vel_2),
        ];
        let terminal = Self::tip_height(&next_state) > 1.0;
        StepOutcome {
            next_state,
            reward: if terminal { 0.0 } else { -1.0 },
            terminal,
        }
    }
}
