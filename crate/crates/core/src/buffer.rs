use crate::discretizer::Cell;
use crate::envs::Transition;
use crate::error::{Error, Result};
use crate::policy::GaussianPolicy;

/// One iteration's worth of on-policy samples.
///
/// Transitions are stored episode by episode in step order. `cells`,
/// `actions`, `returns` and `old_log_probs` are aligned with `transitions`; `advantages`
/// stays zero until the critic fills it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    pub cells: Vec<Cell>,
    pub actions: Vec<f64>,
    pub returns: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl RolloutBuffer {
    /// Computes cells, reward-to-go and sampling-policy log-probabilities.
    pub fn from_transitions(
        transitions: Vec<Transition>,
        policy: &GaussianPolicy,
        gamma: f64,
    ) -> Result<Self> {
        let cells = transitions
            .iter()
            .map(|t| policy.cell(&t.state))
            .collect::<Result<Vec<_>>>()?;
        let old_log_probs = transitions
            .iter()
            .zip(&cells)
            .map(|(t, &c)| policy.log_prob_at(c, t.action))
            .collect();
        let returns = episode_returns_to_go(&transitions, gamma);
        let advantages = vec![0.0; transitions.len()];
        let actions = transitions.iter().map(|t| t.action).collect();
        Ok(Self {
            transitions,
            cells,
            actions,
            returns,
            old_log_probs,
            advantages,
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn states(&self) -> Vec<Vec<f64>> {
        self.transitions.iter().map(|t| t.state.clone()).collect()
    }

    /// Undiscounted total reward of each episode, in episode order.
    pub fn episode_totals(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut current: Option<usize> = None;
        for t in &self.transitions {
            if current != Some(t.episode_id) {
                out.push(0.0);
                current = Some(t.episode_id);
            }
            *out.last_mut().expect("pushed above") += t.reward;
        }
        out
    }

    pub fn n_episodes(&self) -> usize {
        self.episode_totals().len()
    }

    pub fn check_aligned(&self) -> Result<()> {
        let n = self.len();
        for (name, len) in [
            ("cells", self.cells.len()),
            ("actions", self.actions.len()),
            ("returns", self.returns.len()),
            ("old_log_probs", self.old_log_probs.len()),
            ("advantages", self.advantages.len()),
        ] {
            if len != n {
                return Err(Error::Layout(format!(
                    "buffer field {name} has {len} entries for {n} transitions"
                )));
            }
        }
        Ok(())
    }
}

/// `G_t = sum_{t' >= t} gamma^(t' - t) r_t'` within one episode.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    out
}

/// Reward-to-go for a sequence of transitions, restarting at every episode
/// boundary.
pub fn episode_returns_to_go(transitions: &[Transition], gamma: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(transitions.len());
    let mut start = 0;
    while start < transitions.len() {
        let id = transitions[start].episode_id;
        let end = transitions[start..]
            .iter()
            .position(|t| t.episode_id != id)
            .map_or(transitions.len(), |p| start + p);
        let rewards: Vec<f64> = transitions[start..end].iter().map(|t| t.reward).collect();
        out.extend(discounted_returns(&rewards, gamma));
        start = end;
    }
    out
}
