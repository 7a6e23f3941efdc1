//! Low-rank value function `V(s) = [L_w R_w]_(i_s, j_s)` fitted to Monte
//! Carlo returns by gradient descent on `0.5 * sum_t (G_t - V(s_t))^2`.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::buffer::RolloutBuffer;
use crate::discretizer::{Cell, StateGrid};
use crate::error::{Error, Result};
use crate::factorization::LowRankMatrix;

pub use crate::buffer::discounted_returns as returns;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    pub rank: usize,
    pub learning_rate: f64,
    /// Gradient steps per training iteration.
    pub steps: usize,
    pub init_scale: f64,
    pub init_spread: f64,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            rank: 3,
            learning_rate: 1e-3,
            steps: 20,
            init_scale: 0.1,
            init_spread: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    vf: LowRankMatrix,
    learning_rate: f64,
    grid: Arc<StateGrid>,
}

/// Gradient of the critic loss with respect to both factors.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticGradient {
    pub d_left: Vec<f64>,
    pub d_right: Vec<f64>,
}

/// Per-cell sufficient statistics of the regression targets.
#[derive(Debug, Clone)]
struct CellTargets {
    /// `(cell, count, mean target)` for every visited cell.
    cells: Vec<(Cell, f64, f64)>,
    /// `sum_t (G_t - mean_cell(t))^2`, the part of the loss no factor can fit.
    within: f64,
}

impl CellTargets {
    fn new(cells: &[Cell], targets: &[f64]) -> Result<Self> {
        if cells.len() != targets.len() {
            return Err(Error::Shape {
                expected: cells.len(),
                actual: targets.len(),
            });
        }
        if cells.is_empty() {
            return Err(Error::EmptyBatch("critic targets"));
        }
        let mut groups: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
        for (c, g) in cells.iter().zip(targets) {
            let e = groups.entry((c.row, c.col)).or_default();
            e.0 += 1.0;
            e.1 += g;
        }
        let means: BTreeMap<(usize, usize), f64> =
            groups.iter().map(|(&k, &(n, s))| (k, s / n)).collect();
        let within = cells
            .iter()
            .zip(targets)
            .map(|(c, g)| {
                let d = g - means[&(c.row, c.col)];
                d * d
            })
            .sum();
        let cells = groups
            .into_iter()
            .map(|((row, col), (n, _))| (Cell::new(row, col), n, means[&(row, col)]))
            .collect();
        Ok(Self { cells, within })
    }
}

impl Critic {
    pub fn new(vf: LowRankMatrix, learning_rate: f64, grid: Arc<StateGrid>) -> Result<Self> {
        if (vf.n_rows(), vf.n_cols()) != grid.shape() {
            return Err(Error::Config(format!(
                "value matrix is {}x{} but grid is {:?}",
                vf.n_rows(),
                vf.n_cols(),
                grid.shape()
            )));
        }
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "critic learning rate must be >= 0, got {learning_rate}"
            )));
        }
        if vf.rank() >= vf.n_rows().min(vf.n_cols()) {
            log::warn!(
                "critic rank {} is not below min({}, {}); the factorization is not low-rank",
                vf.rank(),
                vf.n_rows(),
                vf.n_cols()
            );
        }
        Ok(Self {
            vf,
            learning_rate,
            grid,
        })
    }

    pub fn init<R: Rng + ?Sized>(
        grid: Arc<StateGrid>,
        cfg: &CriticConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let (n, m) = grid.shape();
        let vf =
            LowRankMatrix::random_uniform(n, m, cfg.rank, cfg.init_scale, cfg.init_spread, rng)?;
        Self::new(vf, cfg.learning_rate, grid)
    }

    pub fn matrix(&self) -> &LowRankMatrix {
        &self.vf
    }

    pub fn matrix_mut(&mut self) -> &mut LowRankMatrix {
        &mut self.vf
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn param_count(&self) -> usize {
        self.vf.param_count()
    }

    #[inline]
    pub fn value_at(&self, c: Cell) -> f64 {
        self.vf.entry_unchecked(c.row, c.col)
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        Ok(self.value_at(self.grid.cell(state)?))
    }

    /// `0.5 * sum_t (G_t - V(s_t))^2`.
    pub fn loss(&self, cells: &[Cell], targets: &[f64]) -> Result<f64> {
        if cells.len() != targets.len() {
            return Err(Error::Shape {
                expected: cells.len(),
                actual: targets.len(),
            });
        }
        Ok(0.5
            * cells
                .iter()
                .zip(targets)
                .map(|(&c, g)| (g - self.value_at(c)).powi(2))
                .sum::<f64>())
    }

    fn loss_from_stats(&self, stats: &CellTargets) -> f64 {
        let fit: f64 = stats
            .cells
            .iter()
            .map(|&(c, n, mean)| n * (mean - self.value_at(c)).powi(2))
            .sum();
        0.5 * (stats.within + fit)
    }

    fn gradient_from_stats(&self, stats: &CellTargets) -> CriticGradient {
        let (k, m) = (self.vf.rank(), self.vf.n_cols());
        let mut d_left = vec![0.0; self.vf.left().len()];
        let mut d_right = vec![0.0; self.vf.right().len()];
        for &(c, n, mean) in &stats.cells {
            // sum over the cell's samples of (G_t - V)
            let residual = n * (mean - self.value_at(c));
            for kk in 0..k {
                d_left[c.row * k + kk] -= residual * self.vf.right_at(kk, c.col);
                d_right[kk * m + c.col] -= residual * self.vf.left_at(c.row, kk);
            }
        }
        CriticGradient { d_left, d_right }
    }

    /// Gradient of [`loss`](Self::loss) with respect to `(L_w, R_w)`.
    pub fn gradient(&self, cells: &[Cell], targets: &[f64]) -> Result<CriticGradient> {
        Ok(self.gradient_from_stats(&CellTargets::new(cells, targets)?))
    }

    pub fn critic_gradient(&self, buffer: &RolloutBuffer) -> Result<CriticGradient> {
        self.gradient(&buffer.cells, &buffer.returns)
    }

    /// Runs `n_steps` descent steps. The returned trace has `n_steps + 1`
    /// entries: the loss before the first step, then after each step.
    pub fn update(&mut self, cells: &[Cell], targets: &[f64], n_steps: usize) -> Result<Vec<f64>> {
        let stats = CellTargets::new(cells, targets)?;
        let mut trace = Vec::with_capacity(n_steps + 1);
        trace.push(self.loss_from_stats(&stats));
        for step in 1..=n_steps {
            let grad = self.gradient_from_stats(&stats);
            let lr = self.learning_rate;
            for (w, g) in self.vf.left_mut().iter_mut().zip(&grad.d_left) {
                *w -= lr * g;
            }
            for (w, g) in self.vf.right_mut().iter_mut().zip(&grad.d_right) {
                *w -= lr * g;
            }
            let loss = self.loss_from_stats(&stats);
            if !loss.is_finite() || !self.vf.is_finite() {
                return Err(Error::CriticDiverged { step, loss });
            }
            trace.push(loss);
        }
        Ok(trace)
    }

    pub fn critic_update(&mut self, buffer: &RolloutBuffer, n_steps: usize) -> Result<Vec<f64>> {
        self.update(&buffer.cells, &buffer.returns, n_steps)
    }

    /// `A_t = G_t - V(s_t)`, optionally standardized over the batch.
    pub fn advantages(&self, buffer: &RolloutBuffer, normalize: bool) -> Vec<f64> {
        let raw: Vec<f64> = buffer
            .cells
            .iter()
            .zip(&buffer.returns)
            .map(|(&c, g)| g - self.value_at(c))
            .collect();
        if normalize {
            standardize(&raw)
        } else {
            raw
        }
    }
}

/// Zero mean, unit (population) variance; constant input only gets centred.
pub fn standardize(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if std > 0.0 { 1.0 / std } else { 1.0 };
    values.iter().map(|v| (v - mean) * scale).collect()
}
