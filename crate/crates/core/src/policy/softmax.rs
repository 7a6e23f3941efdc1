//! Low-rank softmax policy for discrete action sets.
//!
//! Logits for state `s` are row `s` of `X_z = L_z R_z` (`|S| x |A|`).

use rand::Rng;

use crate::error::{Error, Result};
use crate::factorization::LowRankMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    weights: LowRankMatrix,
}

/// Gradient of `log pi(a | s)` with respect to `L_z` and `R_z`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxScore {
    pub d_left: Vec<f64>,
    pub d_right: Vec<f64>,
}

impl SoftmaxPolicy {
    pub fn new(weights: LowRankMatrix) -> Self {
        Self { weights }
    }

    pub fn weights(&self) -> &LowRankMatrix {
        &self.weights
    }

    pub fn n_states(&self) -> usize {
        self.weights.n_rows()
    }

    pub fn n_actions(&self) -> usize {
        self.weights.n_cols()
    }

    fn check(&self, state: usize, action: Option<usize>) -> Result<()> {
        let bad_action = action.is_some_and(|a| a >= self.n_actions());
        if state >= self.n_states() || bad_action {
            return Err(Error::Index {
                row: state,
                col: action.unwrap_or(0),
                n_rows: self.n_states(),
                n_cols: self.n_actions(),
            });
        }
        Ok(())
    }

    pub fn probabilities(&self, state: usize) -> Result<Vec<f64>> {
        self.check(state, None)?;
        let logits: Vec<f64> = (0..self.n_actions())
            .map(|b| self.weights.entry_unchecked(state, b))
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        Ok(exp.into_iter().map(|e| e / total).collect())
    }

    pub fn log_prob(&self, state: usize, action: usize) -> Result<f64> {
        self.check(state, Some(action))?;
        Ok(self.probabilities(state)?[action].ln())
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> Result<usize> {
        let probs = self.probabilities(state)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Ok(a);
            }
        }
        Ok(probs.len() - 1)
    }

    /// `d log pi / d z_b = 1{b = a} - p_b`, pushed through `z = L R`.
    pub fn score(&self, state: usize, action: usize) -> Result<SoftmaxScore> {
        self.check(state, Some(action))?;
        let probs = self.probabilities(state)?;
        let (n, m, k) = (self.n_states(), self.n_actions(), self.weights.rank());
        let coeff: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(b, p)| if b == action { 1.0 - p } else { -p })
            .collect();
        let mut d_left = vec![0.0; n * k];
        let mut d_right = vec![0.0; k * m];
        for kk in 0..k {
            d_left[state * k + kk] = (0..m)
                .map(|b| coeff[b] * self.weights.right_at(kk, b))
                .sum();
            let l = self.weights.left_at(state, kk);
            for (b, c) in coeff.iter().enumerate() {
                d_right[kk * m + b] = c * l;
            }
        }
        Ok(SoftmaxScore { d_left, d_right })
    }
}

/// Functional form of [`SoftmaxPolicy::score`].
pub fn softmax_score(weights: &LowRankMatrix, state: usize, action: usize) -> Result<SoftmaxScore> {
    SoftmaxPolicy::new(weights.clone()).score(state, action)
}
