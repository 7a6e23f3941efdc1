//! KL-constrained natural-gradient step for the actor.
//!
//! The surrogate `L(theta) = mean_t [pi_theta(a_t|s_t) / pi_old(a_t|s_t)] A_t`
//! is linearized at `theta_old`, the KL constraint is replaced by its
//! quadratic model with the empirical Fisher matrix, and the resulting
//! subproblem is solved with conjugate gradient followed by a backtracking
//! line search on the exact sampled KL and surrogate.

use serde::{Deserialize, Serialize};

use crate::buffer::RolloutBuffer;
use crate::discretizer::Cell;
use crate::error::{Error, Result};
use crate::par;
use crate::policy::{GaussianPolicy, SparseScore};
use crate::vecops::{all_finite, axpy, dot, norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionConfig {
    /// KL radius.
    pub delta: f64,
    pub cg_iters: usize,
    /// Relative residual tolerance for CG.
    pub cg_tol: f64,
    /// Multiple of the identity added to the Fisher matrix.
    pub damping: f64,
    pub backtrack_ratio: f64,
    pub max_backtracks: usize,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            delta: 1e-2,
            cg_iters: 10,
            cg_tol: 1e-10,
            damping: 1e-2,
            backtrack_ratio: 0.8,
            max_backtracks: 10,
        }
    }
}

impl TrustRegionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be > 0, got {}", self.delta));
        }
        if self.cg_iters == 0 {
            return bad("cg_iters must be >= 1".into());
        }
        if !(self.cg_tol > 0.0 && self.cg_tol.is_finite()) {
            return bad(format!("cg_tol must be > 0, got {}", self.cg_tol));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return bad(format!("damping must be >= 0, got {}", self.damping));
        }
        if !(self.backtrack_ratio > 0.0 && self.backtrack_ratio < 1.0) {
            return bad(format!(
                "backtrack_ratio must lie in (0, 1), got {}",
                self.backtrack_ratio
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    pub kl_after: f64,
    pub grad_norm: f64,
    pub cg_residual: f64,
    pub cg_iterations: usize,
    /// Fraction of the full trust-region step that was applied.
    pub step_scale: f64,
    pub n_backtracks: usize,
    pub accepted: bool,
}

/// Borrowed view of the fields the actor update needs.
#[derive(Debug, Clone, Copy)]
pub struct PolicyBatch<'a> {
    pub cells: &'a [Cell],
    pub actions: &'a [f64],
    pub advantages: &'a [f64],
    pub old_log_probs: &'a [f64],
}

impl<'a> PolicyBatch<'a> {
    pub fn new(
        cells: &'a [Cell],
        actions: &'a [f64],
        advantages: &'a [f64],
        old_log_probs: &'a [f64],
    ) -> Result<Self> {
        let n = cells.len();
        for len in [actions.len(), advantages.len(), old_log_probs.len()] {
            if len != n {
                return Err(Error::Shape {
                    expected: n,
                    actual: len,
                });
            }
        }
        Ok(Self {
            cells,
            actions,
            advantages,
            old_log_probs,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Per-sample scores of a batch, evaluated once at `theta_old`.
#[derive(Debug, Clone)]
pub struct ScoreBatch {
    dim: usize,
    scores: Vec<SparseScore>,
}

impl ScoreBatch {
    pub fn new(policy: &GaussianPolicy, cells: &[Cell], actions: &[f64]) -> Self {
        let scores = par::map_range(cells.len(), |t| {
            policy.sparse_score_at(cells[t], actions[t])
        });
        Self {
            dim: policy.param_count(),
            scores,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[SparseScore] {
        &self.scores
    }

    /// `(1/n) sum_t w_t * score_t`.
    pub fn weighted_mean(&self, weights: &[f64]) -> Vec<f64> {
        let n = self.scores.len();
        let mut out = par::chunked_sum(n, self.dim, |range, acc| {
            for t in range {
                self.scores[t].add_scaled_to(weights[t], acc);
            }
        });
        if n > 0 {
            out.iter_mut().for_each(|v| *v /= n as f64);
        }
        out
    }
}

/// Matrix-free `H v = (1/n) sum_t s_t (s_t^T v) + damping * v`.
#[derive(Debug, Clone, Copy)]
pub struct FisherOperator<'a> {
    scores: &'a ScoreBatch,
    damping: f64,
}

impl<'a> FisherOperator<'a> {
    pub fn new(scores: &'a ScoreBatch, damping: f64) -> Self {
        Self { scores, damping }
    }

    pub fn dim(&self) -> usize {
        self.scores.dim
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.scores.dim {
            return Err(Error::Layout(format!(
                "vector of length {} does not match {} actor parameters",
                v.len(),
                self.scores.dim
            )));
        }
        let n = self.scores.len();
        let mut out = par::chunked_sum(n, self.scores.dim, |range, acc| {
            for s in &self.scores.scores[range] {
                let proj = s.dot(v);
                s.add_scaled_to(proj, acc);
            }
        });
        let inv_n = if n > 0 { 1.0 / n as f64 } else { 0.0 };
        for (o, vi) in out.iter_mut().zip(v) {
            *o = *o * inv_n + self.damping * vi;
        }
        Ok(out)
    }
}

/// Gradient of the sampled surrogate at `theta_old`. The likelihood ratio is
/// recomputed from the stored log-probabilities and must be 1 there.
pub fn surrogate_gradient(
    batch: &PolicyBatch<'_>,
    policy_old: &GaussianPolicy,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch("surrogate gradient"));
    }
    let scores = ScoreBatch::new(policy_old, batch.cells, batch.actions);
    let weights = ratio_weighted_advantages(batch, policy_old)?;
    Ok(scores.weighted_mean(&weights))
}

fn ratio_weighted_advantages(
    batch: &PolicyBatch<'_>,
    policy_old: &GaussianPolicy,
) -> Result<Vec<f64>> {
    (0..batch.len())
        .map(|t| {
            let log_ratio = policy_old.log_prob_at(batch.cells[t], batch.actions[t]) - batch.old_log_probs[t];
            let ratio = log_ratio.exp();
            if (ratio - 1.0).abs() > 1e-6 {
                return Err(Error::Numeric(format!(
                    "likelihood ratio {ratio} at sample {t}: stored log-probabilities do not belong to this policy"
                )));
            }
            Ok(ratio * batch.advantages[t])
        })
        .collect()
}

/// Sampled surrogate `mean_t exp(log pi(a_t|s_t) - log pi_old(a_t|s_t)) A_t`.
pub fn surrogate(batch: &PolicyBatch<'_>, policy: &GaussianPolicy) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let total = par::chunked_sum(batch.len(), 1, |range, acc| {
        for t in range {
            let lp = policy.log_prob_at(batch.cells[t], batch.actions[t]);
            acc[0] += (lp - batch.old_log_probs[t]).exp() * batch.advantages[t];
        }
    });
    total[0] / batch.len() as f64
}

pub fn fisher_vector_product(
    batch: &PolicyBatch<'_>,
    policy_old: &GaussianPolicy,
    v: &[f64],
    damping: f64,
) -> Result<Vec<f64>> {
    let scores = ScoreBatch::new(policy_old, batch.cells, batch.actions);
    FisherOperator::new(&scores, damping).apply(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    /// `||H x - g||` as tracked by the recurrence.
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Solves `H x = g` for symmetric positive (semi)definite `H`, stopping when
/// `||r|| <= tol * ||g||` or after `max_iters` iterations.
pub fn conjugate_gradient<F>(
    mut apply: F,
    g: &[f64],
    max_iters: usize,
    tol: f64,
) -> Result<CgSolution>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = vec![0.0; g.len()];
    let g_norm = norm(g);
    if g_norm == 0.0 {
        return Ok(CgSolution {
            x,
            residual_norm: 0.0,
            iterations: 0,
        });
    }
    let threshold = tol * g_norm;
    let mut r = g.to_vec();
    let mut p = g.to_vec();
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    while iterations < max_iters && rr.sqrt() > threshold {
        let hp = apply(&p)?;
        let php = dot(&p, &hp);
        if php.is_nan() || php <= 0.0 {
            return Err(Error::Numeric(format!(
                "conjugate gradient met non-positive curvature p^T H p = {php}; increase damping"
            )));
        }
        let alpha = rr / php;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &hp, &mut r);
        let rr_next = dot(&r, &r);
        iterations += 1;
        if !all_finite(&x) || !rr_next.is_finite() {
            return Err(Error::Numeric(
                "conjugate gradient produced a non-finite iterate; increase damping".into(),
            ));
        }
        let beta = rr_next / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_next;
    }
    Ok(CgSolution {
        x,
        residual_norm: rr.sqrt(),
        iterations,
    })
}

/// Full trust-region step `sqrt(2 delta / x^T H x) * x`, where `x` solves
/// `H x = g`; on the boundary of the quadratic KL model.
pub fn boundary_step(x: &[f64], hx: &[f64], delta: f64) -> Result<Vec<f64>> {
    let shs = dot(x, hx);
    if !(shs > 0.0 && shs.is_finite()) {
        return Err(Error::Numeric(format!(
            "x^T H x = {shs} is not positive; increase damping"
        )));
    }
    let scale = (2.0 * delta / shs).sqrt();
    Ok(x.iter().map(|v| v * scale).collect())
}

/// One actor update. A step that fails the line search leaves the policy
/// unchanged and is reported with `accepted = false`; that is not an error.
pub fn trust_region_update(
    policy_old: &GaussianPolicy,
    batch: &PolicyBatch<'_>,
    cfg: &TrustRegionConfig,
) -> Result<(GaussianPolicy, StepDiagnostics)> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch("trust-region update"));
    }
    let scores = ScoreBatch::new(policy_old, batch.cells, batch.actions);
    let weights = ratio_weighted_advantages(batch, policy_old)?;
    let g = scores.weighted_mean(&weights);
    let surrogate_before = surrogate(batch, policy_old);
    let grad_norm = norm(&g);

    let unchanged = |accepted, cg_residual, cg_iterations, n_backtracks| StepDiagnostics {
        surrogate_before,
        surrogate_after: surrogate_before,
        kl_after: 0.0,
        grad_norm,
        cg_residual,
        cg_iterations,
        step_scale: 0.0,
        n_backtracks,
        accepted,
    };
    if grad_norm == 0.0 {
        return Ok((policy_old.clone(), unchanged(true, 0.0, 0, 0)));
    }

    let fisher = FisherOperator::new(&scores, cfg.damping);
    let cg = conjugate_gradient(|v| fisher.apply(v), &g, cfg.cg_iters, cfg.cg_tol)?;
    let hx = fisher.apply(&cg.x)?;
    let full_step = boundary_step(&cg.x, &hx, cfg.delta)?;

    let theta_old = policy_old.flat_params().values;
    let mut fraction = 1.0;
    for n_backtracks in 0..=cfg.max_backtracks {
        let mut theta = theta_old.clone();
        axpy(fraction, &full_step, &mut theta);
        let candidate = policy_old.with_params(&theta)?;
        let kl = GaussianPolicy::kl_at_cells(policy_old, &candidate, batch.cells);
        let surrogate_after = surrogate(batch, &candidate);
        if kl <= cfg.delta && surrogate_after > surrogate_before {
            let diag = StepDiagnostics {
                surrogate_before,
                surrogate_after,
                kl_after: kl,
                grad_norm,
                cg_residual: cg.residual_norm,
                cg_iterations: cg.iterations,
                step_scale: fraction,
                n_backtracks,
                accepted: true,
            };
            return Ok((candidate, diag));
        }
        fraction *= cfg.backtrack_ratio;
    }
    log::debug!(
        "line search exhausted {} backtracks; step rejected",
        cfg.max_backtracks
    );
    Ok((
        policy_old.clone(),
        unchanged(false, cg.residual_norm, cg.iterations, cfg.max_backtracks),
    ))
}

impl RolloutBuffer {
    pub fn policy_batch(&self) -> Result<PolicyBatch<'_>> {
        PolicyBatch::new(
            &self.cells,
            &self.actions,
            &self.advantages,
            &self.old_log_probs,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(v: &[f64]) -> Result<Vec<f64>> {
        Ok(v.to_vec())
    }

    #[test]
    fn cg_identity_one_iteration() {
        let g = vec![0.5, -1.0, 2.0];
        let sol = conjugate_gradient(identity, &g, 10, 1e-10).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.x, g);
    }

    #[test]
    fn cg_zero_rhs() {
        let sol = conjugate_gradient(identity, &[0.0; 4], 10, 1e-10).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cg_detects_indefinite_operator() {
        let neg = |v: &[f64]| Ok(v.iter().map(|x| -x).collect());
        assert!(matches!(
            conjugate_gradient(neg, &[1.0, 2.0], 5, 1e-10),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn boundary_step_identity() {
        // H = I, g = e1, delta = 0.5 -> x = e1, step = sqrt(1) e1.
        let x = vec![1.0, 0.0, 0.0];
        let step = boundary_step(&x, &x, 0.5).unwrap();
        assert_eq!(step, vec![1.0, 0.0, 0.0]);
        assert!((dot(&step, &step) - 2.0 * 0.5).abs() < 1e-15);
        assert!(boundary_step(&[0.0], &[0.0], 0.5).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrustRegionConfig::default().validate().is_ok());
        let bad = TrustRegionConfig {
            backtrack_ratio: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrustRegionConfig {
            delta: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
