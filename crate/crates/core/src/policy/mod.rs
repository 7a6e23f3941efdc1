//! Low-rank Gaussian policy.
//!
//! The mean is `mu(s) = [L_mu R_mu]_(i_s, j_s)`. The standard deviation is
//! either one shared learned scalar or a second low-rank matrix
//! `[L_sigma R_sigma]_(i_s, j_s)`. In both cases the raw value is floored at
//! `sigma_floor`, and the gradient through the floor is zero.
//!
//! Actor parameters flatten in the fixed order `L_mu, R_mu, L_sigma, R_sigma`
//! (or `L_mu, R_mu, sigma` in shared mode).

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::discretizer::{Cell, StateGrid};
use crate::error::{Error, Result};
use crate::factorization::{Factor, FlatParams, LowRankMatrix, Segment};

pub mod softmax;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// One standard deviation for every state.
    Shared,
    /// A low-rank matrix of per-state standard deviations.
    LowRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorConfig {
    pub rank: usize,
    /// Centre of the uniform factor initialization for `L_mu`/`R_mu`.
    pub init_scale: f64,
    /// Relative half-width of the uniform initialization.
    pub init_spread: f64,
    pub sigma_mode: SigmaMode,
    /// Initial standard deviation (every state).
    pub sigma_init: f64,
    pub sigma_floor: f64,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self {
            rank: 3,
            init_scale: 0.1,
            init_spread: 0.1,
            sigma_mode: SigmaMode::Shared,
            sigma_init: 1.0,
            sigma_floor: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SigmaModel {
    Shared { raw: f64 },
    LowRank(LowRankMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    mu: LowRankMatrix,
    sigma: SigmaModel,
    sigma_floor: f64,
    grid: Arc<StateGrid>,
}

/// Per-sample log-density derivatives with respect to every actor factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradient {
    pub d_left_mu: Vec<f64>,
    pub d_right_mu: Vec<f64>,
    pub d_sigma: SigmaGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SigmaGradient {
    Shared(f64),
    LowRank { d_left: Vec<f64>, d_right: Vec<f64> },
}

impl ScoreGradient {
    /// Concatenation in actor flat-parameter order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.d_left_mu);
        out.extend_from_slice(&self.d_right_mu);
        match &self.d_sigma {
            SigmaGradient::Shared(g) => out.push(*g),
            SigmaGradient::LowRank { d_left, d_right } => {
                out.extend_from_slice(d_left);
                out.extend_from_slice(d_right);
            }
        }
        out
    }
}

/// Non-zero entries of one sample's score, indexed into the actor flat vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseScore {
    pub entries: Vec<(usize, f64)>,
}

impl SparseScore {
    #[inline]
    pub fn dot(&self, v: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, s)| s * v[i]).sum()
    }

    #[inline]
    pub fn add_scaled_to(&self, alpha: f64, out: &mut [f64]) {
        for &(i, s) in &self.entries {
            out[i] += alpha * s;
        }
    }
}

/// Log-density partials with respect to the mean and the standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LogDensityPartials {
    d_mu: f64,
    d_sigma: f64,
}

pub fn gaussian_log_density(a: f64, mean: f64, std: f64) -> f64 {
    let z = (a - mean) / std;
    -0.5 * z * z - std.ln() - HALF_LN_2PI
}

/// Closed-form `KL(N(m_p, s_p) || N(m_q, s_q))`.
pub fn gaussian_kl(mean_p: f64, std_p: f64, mean_q: f64, std_q: f64) -> f64 {
    let dm = mean_p - mean_q;
    (std_q / std_p).ln() + (std_p * std_p + dm * dm) / (2.0 * std_q * std_q) - 0.5
}

impl GaussianPolicy {
    pub fn new(
        mu: LowRankMatrix,
        sigma: SigmaModel,
        sigma_floor: f64,
        grid: Arc<StateGrid>,
    ) -> Result<Self> {
        let shape = grid.shape();
        if (mu.n_rows(), mu.n_cols()) != shape {
            return Err(Error::Config(format!(
                "mean matrix is {}x{} but grid is {}x{}",
                mu.n_rows(),
                mu.n_cols(),
                shape.0,
                shape.1
            )));
        }
        match &sigma {
            SigmaModel::LowRank(m) if (m.n_rows(), m.n_cols()) != shape => {
                return Err(Error::Config(format!(
                    "sigma matrix is {}x{} but grid is {}x{}",
                    m.n_rows(),
                    m.n_cols(),
                    shape.0,
                    shape.1
                )));
            }
            SigmaModel::Shared { raw } if !raw.is_finite() => {
                return Err(Error::NonFinite(format!("shared sigma {raw}")));
            }
            _ => {}
        }
        if !(sigma_floor > 0.0 && sigma_floor.is_finite()) {
            return Err(Error::Config(format!(
                "sigma floor must be > 0, got {sigma_floor}"
            )));
        }
        Ok(Self {
            mu,
            sigma,
            sigma_floor,
            grid,
        })
    }

    /// Uniform-around-scale initialization. In low-rank sigma mode both sigma
    /// factors start at `sqrt(sigma_init / rank)` so every entry is close to
    /// `sigma_init`.
    pub fn init<R: Rng + ?Sized>(
        grid: Arc<StateGrid>,
        cfg: &ActorConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let (n, m) = grid.shape();
        let mu =
            LowRankMatrix::random_uniform(n, m, cfg.rank, cfg.init_scale, cfg.init_spread, rng)?;
        if !(cfg.sigma_init > 0.0 && cfg.sigma_init.is_finite()) {
            return Err(Error::Config(format!(
                "sigma_init must be > 0, got {}",
                cfg.sigma_init
            )));
        }
        let sigma = match cfg.sigma_mode {
            SigmaMode::Shared => SigmaModel::Shared {
                raw: cfg.sigma_init,
            },
            SigmaMode::LowRank => {
                let scale = (cfg.sigma_init / cfg.rank as f64).sqrt();
                SigmaModel::LowRank(LowRankMatrix::random_uniform(
                    n,
                    m,
                    cfg.rank,
                    scale,
                    cfg.init_spread,
                    rng,
                )?)
            }
        };
        Self::new(mu, sigma, cfg.sigma_floor, grid)
    }

    pub fn grid(&self) -> &Arc<StateGrid> {
        &self.grid
    }

    pub fn mu_matrix(&self) -> &LowRankMatrix {
        &self.mu
    }

    pub fn sigma_model(&self) -> &SigmaModel {
        &self.sigma
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    pub fn set_sigma_floor(&mut self, floor: f64) -> Result<()> {
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::Config(format!(
                "sigma floor must be > 0, got {floor}"
            )));
        }
        self.sigma_floor = floor;
        Ok(())
    }

    pub fn cell(&self, state: &[f64]) -> Result<Cell> {
        self.grid.cell(state)
    }

    #[inline]
    pub fn mean_at(&self, c: Cell) -> f64 {
        self.mu.entry_unchecked(c.row, c.col)
    }

    /// Unfloored standard deviation.
    #[inline]
    pub fn raw_std_at(&self, c: Cell) -> f64 {
        match &self.sigma {
            SigmaModel::Shared { raw } => *raw,
            SigmaModel::LowRank(m) => m.entry_unchecked(c.row, c.col),
        }
    }

    #[inline]
    pub fn std_at(&self, c: Cell) -> f64 {
        self.raw_std_at(c).max(self.sigma_floor)
    }

    pub fn mean(&self, state: &[f64]) -> Result<f64> {
        Ok(self.mean_at(self.cell(state)?))
    }

    pub fn std(&self, state: &[f64]) -> Result<f64> {
        Ok(self.std_at(self.cell(state)?))
    }

    pub fn sample_at<R: Rng + ?Sized>(&self, c: Cell, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mean_at(c) + self.std_at(c) * z
    }

    /// Unclipped action; the environment clips it to its bounds.
    pub fn sample_action<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<f64> {
        Ok(self.sample_at(self.cell(state)?, rng))
    }

    #[inline]
    pub fn log_prob_at(&self, c: Cell, a: f64) -> f64 {
        gaussian_log_density(a, self.mean_at(c), self.std_at(c))
    }

    pub fn log_prob(&self, state: &[f64], a: f64) -> Result<f64> {
        Ok(self.log_prob_at(self.cell(state)?, a))
    }

    fn partials(&self, c: Cell, a: f64) -> LogDensityPartials {
        let mean = self.mean_at(c);
        let raw = self.raw_std_at(c);
        let std = raw.max(self.sigma_floor);
        let diff = a - mean;
        let d_sigma = if raw > self.sigma_floor {
            diff * diff / (std * std * std) - 1.0 / std
        } else {
            0.0
        };
        LogDensityPartials {
            d_mu: diff / (std * std),
            d_sigma,
        }
    }

    /// Dense `grad_theta log pi(a | s)`.
    pub fn score(&self, state: &[f64], a: f64) -> Result<ScoreGradient> {
        let c = self.cell(state)?;
        let p = self.partials(c, a);
        let (n, m, k) = (self.mu.n_rows(), self.mu.n_cols(), self.mu.rank());
        let mut d_left_mu = vec![0.0; n * k];
        let mut d_right_mu = vec![0.0; k * m];
        for kk in 0..k {
            d_left_mu[c.row * k + kk] = p.d_mu * self.mu.right_at(kk, c.col);
            d_right_mu[kk * m + c.col] = p.d_mu * self.mu.left_at(c.row, kk);
        }
        let d_sigma = match &self.sigma {
            SigmaModel::Shared { .. } => SigmaGradient::Shared(p.d_sigma),
            SigmaModel::LowRank(s) => {
                let ks = s.rank();
                let mut d_left = vec![0.0; n * ks];
                let mut d_right = vec![0.0; ks * m];
                for kk in 0..ks {
                    d_left[c.row * ks + kk] = p.d_sigma * s.right_at(kk, c.col);
                    d_right[kk * m + c.col] = p.d_sigma * s.left_at(c.row, kk);
                }
                SigmaGradient::LowRank { d_left, d_right }
            }
        };
        Ok(ScoreGradient {
            d_left_mu,
            d_right_mu,
            d_sigma,
        })
    }

    /// Score restricted to its non-zero pattern: row `i_s` of each tall
    /// factor, column `j_s` of each fat factor and the shared sigma slot.
    pub fn sparse_score_at(&self, c: Cell, a: f64) -> SparseScore {
        let p = self.partials(c, a);
        let (n, m, k) = (self.mu.n_rows(), self.mu.n_cols(), self.mu.rank());
        let mut entries = Vec::with_capacity(4 * k + 1);
        let right_base = n * k;
        for kk in 0..k {
            entries.push((c.row * k + kk, p.d_mu * self.mu.right_at(kk, c.col)));
            entries.push((
                right_base + kk * m + c.col,
                p.d_mu * self.mu.left_at(c.row, kk),
            ));
        }
        let sigma_base = self.mu.param_count();
        match &self.sigma {
            SigmaModel::Shared { .. } => entries.push((sigma_base, p.d_sigma)),
            SigmaModel::LowRank(s) => {
                let ks = s.rank();
                let right_base = sigma_base + n * ks;
                for kk in 0..ks {
                    entries.push((
                        sigma_base + c.row * ks + kk,
                        p.d_sigma * s.right_at(kk, c.col),
                    ));
                    entries.push((
                        right_base + kk * m + c.col,
                        p.d_sigma * s.left_at(c.row, kk),
                    ));
                }
            }
        }
        SparseScore { entries }
    }

    pub fn param_count(&self) -> usize {
        self.mu.param_count() + self.sigma_param_count()
    }

    pub fn sigma_param_count(&self) -> usize {
        match &self.sigma {
            SigmaModel::Shared { .. } => 1,
            SigmaModel::LowRank(m) => m.param_count(),
        }
    }

    pub fn flat_params(&self) -> FlatParams {
        let mut flat = crate::factorization::flatten(std::slice::from_ref(&self.mu));
        match &self.sigma {
            SigmaModel::Shared { raw } => {
                flat.values.push(*raw);
                flat.layout.push(Segment {
                    matrix: 1,
                    factor: Factor::Scalar,
                    rows: 1,
                    cols: 1,
                });
            }
            SigmaModel::LowRank(m) => {
                let s = crate::factorization::flatten(std::slice::from_ref(m));
                flat.values.extend(s.values);
                flat.layout
                    .extend(s.layout.into_iter().map(|seg| Segment { matrix: 1, ..seg }));
            }
        }
        flat
    }

    /// Same structure with parameters replaced by `values` (actor flat order).
    pub fn with_params(&self, values: &[f64]) -> Result<Self> {
        let n_params = self.param_count();
        if values.len() != n_params {
            return Err(Error::Layout(format!(
                "actor has {n_params} parameters, got a vector of length {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("actor parameter {v}")));
        }
        let mut out = self.clone();
        let (l, r) = values.split_at(self.mu.left().len());
        let (r, rest) = r.split_at(self.mu.right().len());
        out.mu.left_mut().copy_from_slice(l);
        out.mu.right_mut().copy_from_slice(r);
        match &mut out.sigma {
            SigmaModel::Shared { raw } => *raw = rest[0],
            SigmaModel::LowRank(m) => {
                let (l, r) = rest.split_at(m.left().len());
                m.left_mut().copy_from_slice(l);
                m.right_mut().copy_from_slice(r);
            }
        }
        Ok(out)
    }

    /// Mean closed-form KL over `cells`.
    pub fn kl_at_cells(old: &Self, new: &Self, cells: &[Cell]) -> f64 {
        if cells.is_empty() {
            return 0.0;
        }
        let total: f64 = cells
            .iter()
            .map(|&c| gaussian_kl(old.mean_at(c), old.std_at(c), new.mean_at(c), new.std_at(c)))
            .sum();
        total / cells.len() as f64
    }
}

/// Mean over `states` of `KL(pi_old(.|s) || pi_new(.|s))`.
pub fn kl(old: &GaussianPolicy, new: &GaussianPolicy, states: &[Vec<f64>]) -> Result<f64> {
    if old.grid.shape() != new.grid.shape() {
        return Err(Error::Config(
            "policies are defined on different grids".into(),
        ));
    }
    let cells = states
        .iter()
        .map(|s| old.cell(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(GaussianPolicy::kl_at_cells(old, new, &cells))
}
