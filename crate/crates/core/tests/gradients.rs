//! Analytic gradients against central finite differences.

mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;

use trlrpo::critic::Critic;
use trlrpo::discretizer::Cell;
use trlrpo::policy::{SigmaGradient, SigmaMode};
use trlrpo::trustregion::{surrogate, surrogate_gradient, PolicyBatch};

const TOL: f64 = 1e-6;

fn score_error(seed: u64, n: usize, m: usize, k: usize, mode: SigmaMode) -> f64 {
    let mut r = rng(seed);
    let grid = unit_grid(n, m);
    let policy = random_policy(&mut r, grid, k, mode);
    let cell = random_cell(&mut r, n, m);
    let state = state_in(cell, n, m);
    let a = policy.mean_at(cell) + policy.std_at(cell) * r.random_range(-2.5..2.5);
    let analytic = policy.score(&state, a).unwrap().to_flat();
    relative_error(&analytic, &fd_score(&policy, &state, a), 1e-2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn shared_sigma_score(seed in any::<u64>(), n in 2usize..7, m in 2usize..7, k in 1usize..3) {
        let k = k.min(n.min(m));
        prop_assert!(score_error(seed, n, m, k, SigmaMode::Shared) < TOL);
    }

    #[test]
    fn low_rank_sigma_score(seed in any::<u64>(), n in 2usize..7, m in 2usize..7, k in 1usize..3) {
        let k = k.min(n.min(m));
        prop_assert!(score_error(seed, n, m, k, SigmaMode::LowRank) < TOL);
    }

    #[test]
    fn critic_factor_gradients(seed in any::<u64>(), n in 2usize..7, m in 2usize..7, k in 1usize..3, samples in 1usize..40) {
        let k = k.min(n.min(m));
        let mut r = rng(seed);
        let critic = Critic::new(random_matrix(&mut r, n, m, k, -1.0, 1.0), 1e-3, unit_grid(n, m)).unwrap();
        let cells: Vec<Cell> = (0..samples).map(|_| random_cell(&mut r, n, m)).collect();
        let targets: Vec<f64> = (0..samples).map(|_| r.random_range(-3.0..3.0)).collect();
        let g = critic.gradient(&cells, &targets).unwrap();
        let mut analytic = g.d_left.clone();
        analytic.extend_from_slice(&g.d_right);
        prop_assert!(relative_error(&analytic, &fd_critic(&critic, &cells, &targets), 1e-2) < TOL);
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences(seed in any::<u64>(), mode in prop_oneof![Just(SigmaMode::Shared), Just(SigmaMode::LowRank)]) {
        let (n, m, k) = (4, 5, 2);
        let mut r = rng(seed);
        let policy = random_policy(&mut r, unit_grid(n, m), k, mode);
        let cells: Vec<Cell> = (0..30).map(|_| random_cell(&mut r, n, m)).collect();
        let actions: Vec<f64> = cells.iter().map(|&c| policy.mean_at(c) + r.random_range(-1.0..1.0)).collect();
        let advantages: Vec<f64> = (0..30).map(|_| r.random_range(-2.0..2.0)).collect();
        let old_lp: Vec<f64> = cells.iter().zip(&actions).map(|(&c, &a)| policy.log_prob_at(c, a)).collect();
        let batch = PolicyBatch::new(&cells, &actions, &advantages, &old_lp).unwrap();
        let g = surrogate_gradient(&batch, &policy).unwrap();
        let theta = policy.flat_params().values;
        let fd = central_difference(|p| surrogate(&batch, &policy.with_params(p).unwrap()), &theta, 1e-6);
        prop_assert!(relative_error(&g, &fd, 1e-2) < TOL);
    }
}

#[test]
fn single_sample_rank_one_critic_gradient() {
    let mut r = rng(3);
    let critic = Critic::new(
        random_matrix(&mut r, 3, 4, 1, -1.0, 1.0),
        1e-3,
        unit_grid(3, 4),
    )
    .unwrap();
    let c = Cell::new(2, 1);
    let g = 1.7;
    let grad = critic.gradient(&[c], &[g]).unwrap();
    let residual = g - critic.value_at(c);
    assert!((grad.d_left[2] + residual * critic.matrix().right_at(0, 1)).abs() < 1e-14);
    assert!((grad.d_right[1] + residual * critic.matrix().left_at(2, 0)).abs() < 1e-14);
}

#[test]
fn score_components_are_separated_by_mode() {
    let mut r = rng(5);
    let p = random_policy(&mut r, unit_grid(3, 3), 2, SigmaMode::Shared);
    assert!(matches!(
        p.score(&[0.5, 0.5], 0.1).unwrap().d_sigma,
        SigmaGradient::Shared(_)
    ));
    let p = random_policy(&mut r, unit_grid(3, 3), 2, SigmaMode::LowRank);
    assert!(matches!(
        p.score(&[0.5, 0.5], 0.1).unwrap().d_sigma,
        SigmaGradient::LowRank { .. }
    ));
}
