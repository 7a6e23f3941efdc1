//! Fixtures and reference computations shared by the integration tests and
//! the acceptance runner. Nothing here calls the library's own gradient or
//! solver code.

#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trlrpo::critic::Critic;
use trlrpo::discretizer::{Axis, Cell, StateGrid};
use trlrpo::factorization::LowRankMatrix;
use trlrpo::policy::{GaussianPolicy, SigmaMode, SigmaModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_grid(n: usize, m: usize) -> Arc<StateGrid> {
    Arc::new(
        StateGrid::new(
            vec![Axis::new(0.0, 1.0, n), Axis::new(0.0, 1.0, m)],
            vec![0],
            vec![1],
        )
        .unwrap(),
    )
}

fn uniform_vec<R: Rng>(rng: &mut R, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_matrix<R: Rng>(
    rng: &mut R,
    n: usize,
    m: usize,
    k: usize,
    lo: f64,
    hi: f64,
) -> LowRankMatrix {
    LowRankMatrix::from_factors(
        n,
        m,
        k,
        uniform_vec(rng, n * k, lo, hi),
        uniform_vec(rng, k * m, lo, hi),
    )
    .unwrap()
}

/// Random policy with signed mean factors. Sigma stays well above the floor
/// so the log-density is smooth around every fixture.
pub fn random_policy<R: Rng>(
    rng: &mut R,
    grid: Arc<StateGrid>,
    k: usize,
    mode: SigmaMode,
) -> GaussianPolicy {
    let (n, m) = grid.shape();
    let mu = random_matrix(rng, n, m, k, -1.0, 1.0);
    let sigma = match mode {
        SigmaMode::Shared => SigmaModel::Shared {
            raw: rng.random_range(0.3..2.0),
        },
        SigmaMode::LowRank => SigmaModel::LowRank(random_matrix(rng, n, m, k, 0.3, 1.0)),
    };
    GaussianPolicy::new(mu, sigma, 1e-3, grid).unwrap()
}

pub fn random_cell<R: Rng>(rng: &mut R, n: usize, m: usize) -> Cell {
    Cell::new(rng.random_range(0..n), rng.random_range(0..m))
}

/// A state in the interior of `cell` on a unit grid.
pub fn state_in(cell: Cell, n: usize, m: usize) -> Vec<f64> {
    vec![
        (cell.row as f64 + 0.5) / n as f64,
        (cell.col as f64 + 0.5) / m as f64,
    ]
}

/// Central difference of `f` at `x` for every coordinate.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `max_i |a_i - b_i| / max(max_i |b_i|, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(floor, |acc, v| acc.max(v.abs()));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Finite-difference score of `log pi(a | s)` over the flat actor parameters.
pub fn fd_score(policy: &GaussianPolicy, state: &[f64], a: f64) -> Vec<f64> {
    let theta = policy.flat_params().values;
    central_difference(
        |p| policy.with_params(p).unwrap().log_prob(state, a).unwrap(),
        &theta,
        1e-6,
    )
}

/// Finite-difference gradient of the critic loss over `[L, R]`.
pub fn fd_critic(critic: &Critic, cells: &[Cell], targets: &[f64]) -> Vec<f64> {
    let nl = critic.matrix().left().len();
    let mut x = critic.matrix().left().to_vec();
    x.extend_from_slice(critic.matrix().right());
    central_difference(
        |p| {
            let mut c = critic.clone();
            c.matrix_mut().left_mut().copy_from_slice(&p[..nl]);
            c.matrix_mut().right_mut().copy_from_slice(&p[nl..]);
            c.loss(cells, targets).unwrap()
        },
        &x,
        1e-6,
    )
}

/// `(1/n) sum s s^T + damping I` from dense per-sample scores.
pub fn dense_fisher(scores: &[Vec<f64>], damping: f64) -> Vec<Vec<f64>> {
    let d = scores[0].len();
    let n = scores.len() as f64;
    let mut f = vec![vec![0.0; d]; d];
    for s in scores {
        for i in 0..d {
            for j in 0..d {
                f[i][j] += s[i] * s[j] / n;
            }
        }
    }
    for (i, row) in f.iter_mut().enumerate() {
        row[i] += damping;
    }
    f
}

pub fn mat_vec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

/// Gaussian elimination with partial pivoting.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        let pivot_row = m[col].clone();
        for r in m.iter_mut().skip(col + 1) {
            let factor = r[col] / pivot_row[col];
            for (x, p) in r[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= factor * p;
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (m[row][n] - tail) / m[row][row];
    }
    x
}

/// Random symmetric positive definite matrix `B^T B + shift I`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, shift: f64) -> Vec<Vec<f64>> {
    let b: Vec<Vec<f64>> = (0..n).map(|_| uniform_vec(rng, n, -1.0, 1.0)).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (0..n).map(|k| b[k][i] * b[k][j]).sum::<f64>()
                        + if i == j { shift } else { 0.0 }
                })
                .collect()
        })
        .collect()
}
