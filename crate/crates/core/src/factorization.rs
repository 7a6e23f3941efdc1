//! Low-rank matrix factors `X = L * R` shared by the actor and the critic.
//!
//! A [`LowRankMatrix`] stores a tall factor `L` (`n_rows x rank`) and a fat
//! factor `R` (`rank x n_cols`), both dense and row-major. Only individual
//! entries of the product are ever needed, so the full matrix is never formed
//! outside of tests and reporting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRankMatrix {
    n_rows: usize,
    n_cols: usize,
    rank: usize,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl LowRankMatrix {
    /// Builds a matrix from explicit row-major factors.
    pub fn from_factors(
        n_rows: usize,
        n_cols: usize,
        rank: usize,
        left: Vec<f64>,
        right: Vec<f64>,
    ) -> Result<Self> {
        check_shape(n_rows, n_cols, rank)?;
        if left.len() != n_rows * rank {
            return Err(Error::Shape {
                expected: n_rows * rank,
                actual: left.len(),
            });
        }
        if right.len() != rank * n_cols {
            return Err(Error::Shape {
                expected: rank * n_cols,
                actual: right.len(),
            });
        }
        Ok(Self {
            n_rows,
            n_cols,
            rank,
            left,
            right,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize, rank: usize) -> Result<Self> {
        check_shape(n_rows, n_cols, rank)?;
        Ok(Self {
            n_rows,
            n_cols,
            rank,
            left: vec![0.0; n_rows * rank],
            right: vec![0.0; rank * n_cols],
        })
    }

    /// Draws every factor entry i.i.d. from
    /// `U[scale * (1 - spread), scale * (1 + spread)]`.
    pub fn random_uniform<R: Rng + ?Sized>(
        n_rows: usize,
        n_cols: usize,
        rank: usize,
        scale: f64,
        spread: f64,
        rng: &mut R,
    ) -> Result<Self> {
        check_shape(n_rows, n_cols, rank)?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!(
                "init scale must be > 0, got {scale}"
            )));
        }
        if !(0.0..1.0).contains(&spread) {
            return Err(Error::Config(format!(
                "init spread must lie in [0, 1), got {spread}"
            )));
        }
        let lo = scale * (1.0 - spread);
        let hi = scale * (1.0 + spread);
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|_| {
                    if spread == 0.0 {
                        scale
                    } else {
                        rng.random_range(lo..=hi)
                    }
                })
                .collect()
        };
        let left = draw(n_rows * rank);
        let right = draw(rank * n_cols);
        Ok(Self {
            n_rows,
            n_cols,
            rank,
            left,
            right,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn left(&self) -> &[f64] {
        &self.left
    }

    pub fn right(&self) -> &[f64] {
        &self.right
    }

    pub fn left_mut(&mut self) -> &mut [f64] {
        &mut self.left
    }

    pub fn right_mut(&mut self) -> &mut [f64] {
        &mut self.right
    }

    #[inline]
    pub fn left_at(&self, i: usize, k: usize) -> f64 {
        self.left[i * self.rank + k]
    }

    #[inline]
    pub fn right_at(&self, k: usize, j: usize) -> f64 {
        self.right[k * self.n_cols + j]
    }

    /// Row `i` of the tall factor.
    #[inline]
    pub fn left_row(&self, i: usize) -> &[f64] {
        &self.left[i * self.rank..(i + 1) * self.rank]
    }

    /// `X[i, j] = sum_k L[i, k] * R[k, j]`.
    pub fn entry(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.n_rows || j >= self.n_cols {
            return Err(Error::Index {
                row: i,
                col: j,
                n_rows: self.n_rows,
                n_cols: self.n_cols,
            });
        }
        Ok(self.entry_unchecked(i, j))
    }

    /// Same as [`entry`](Self::entry) for indices already known to be in range.
    #[inline]
    pub fn entry_unchecked(&self, i: usize, j: usize) -> f64 {
        self.left_row(i)
            .iter()
            .enumerate()
            .map(|(k, l)| l * self.right[k * self.n_cols + j])
            .sum()
    }

    /// Materializes the full `n_rows x n_cols` product (row-major).
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows * self.n_cols];
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                out[i * self.n_cols + j] = self.entry_unchecked(i, j);
            }
        }
        out
    }

    /// `K * (N + M)`.
    pub fn param_count(&self) -> usize {
        self.rank * (self.n_rows + self.n_cols)
    }

    pub fn dense_count(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn is_finite(&self) -> bool {
        self.left.iter().chain(&self.right).all(|v| v.is_finite())
    }
}

fn check_shape(n_rows: usize, n_cols: usize, rank: usize) -> Result<()> {
    if n_rows == 0 || n_cols == 0 || rank == 0 {
        return Err(Error::Config(format!(
            "matrix dimensions must be positive, got {n_rows}x{n_cols} with rank {rank}"
        )));
    }
    if rank > n_rows.min(n_cols) {
        return Err(Error::Config(format!(
            "rank {rank} exceeds min({n_rows}, {n_cols})"
        )));
    }
    Ok(())
}

/// Seeded initialization; see [`LowRankMatrix::random_uniform`].
pub fn init_factors(
    n: usize,
    m: usize,
    k: usize,
    scale: f64,
    spread: f64,
    seed: u64,
) -> Result<LowRankMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LowRankMatrix::random_uniform(n, m, k, scale, spread, &mut rng)
}

/// Which factor a flat segment belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Factor {
    Left,
    Right,
    /// A lone scalar parameter (the shared standard deviation).
    Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub matrix: usize,
    pub factor: Factor,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A parameter vector together with the layout that maps it back onto
/// factor matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatParams {
    pub values: Vec<f64>,
    pub layout: Vec<Segment>,
}

impl FlatParams {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout_len(&self) -> usize {
        self.layout.iter().map(Segment::len).sum()
    }

    /// Same layout, different values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.layout_len() {
            return Err(Error::Layout(format!(
                "vector of length {} does not match layout of length {}",
                values.len(),
                self.layout_len()
            )));
        }
        Ok(Self {
            values,
            layout: self.layout.clone(),
        })
    }
}

/// Concatenates `(L, R)` of every matrix, in order.
pub fn flatten(matrices: &[LowRankMatrix]) -> FlatParams {
    let mut values = Vec::with_capacity(param_count(matrices));
    let mut layout = Vec::with_capacity(2 * matrices.len());
    for (idx, m) in matrices.iter().enumerate() {
        values.extend_from_slice(&m.left);
        values.extend_from_slice(&m.right);
        layout.push(Segment {
            matrix: idx,
            factor: Factor::Left,
            rows: m.n_rows,
            cols: m.rank,
        });
        layout.push(Segment {
            matrix: idx,
            factor: Factor::Right,
            rows: m.rank,
            cols: m.n_cols,
        });
    }
    FlatParams { values, layout }
}

/// Inverse of [`flatten`]. Every matrix must be described by a consecutive
/// `Left` then `Right` segment pair with matching rank.
pub fn unflatten(p: &FlatParams) -> Result<Vec<LowRankMatrix>> {
    if p.values.len() != p.layout_len() {
        return Err(Error::Layout(format!(
            "vector of length {} does not match layout of length {}",
            p.values.len(),
            p.layout_len()
        )));
    }
    if !p.layout.len().is_multiple_of(2) {
        return Err(Error::Layout("odd number of factor segments".into()));
    }
    let mut out = Vec::with_capacity(p.layout.len() / 2);
    let mut offset = 0;
    for pair in p.layout.chunks(2) {
        let (l, r) = (pair[0], pair[1]);
        if l.factor != Factor::Left || r.factor != Factor::Right || l.matrix != r.matrix {
            return Err(Error::Layout(format!(
                "expected (Left, Right) pair for one matrix, got {:?}/{:?}",
                l, r
            )));
        }
        if l.cols != r.rows {
            return Err(Error::Layout(format!(
                "rank mismatch between factors: {} vs {}",
                l.cols, r.rows
            )));
        }
        let left = p.values[offset..offset + l.len()].to_vec();
        offset += l.len();
        let right = p.values[offset..offset + r.len()].to_vec();
        offset += r.len();
        out.push(LowRankMatrix::from_factors(
            l.rows, r.cols, l.cols, left, right,
        )?);
    }
    Ok(out)
}

/// `sum_i K_i * (N_i + M_i)`.
pub fn param_count(matrices: &[LowRankMatrix]) -> usize {
    matrices.iter().map(LowRankMatrix::param_count).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_product(m: &LowRankMatrix) -> Vec<f64> {
        // Plain triple loop over the factors, independent of `entry`.
        let (n, k, cols) = (m.n_rows(), m.rank(), m.n_cols());
        let mut out = vec![0.0; n * cols];
        for i in 0..n {
            for kk in 0..k {
                let l = m.left()[i * k + kk];
                for j in 0..cols {
                    out[i * cols + j] += l * m.right()[kk * cols + j];
                }
            }
        }
        out
    }

    #[test]
    fn zero_left_factor_gives_zero_entries() {
        let mut m = init_factors(4, 3, 2, 1.0, 0.1, 7).unwrap();
        m.left_mut().fill(0.0);
        for i in 0..4 {
            for j in 0..3 {
                assert_eq!(m.entry(i, j).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn rank_one_scalar_product() {
        let m = LowRankMatrix::from_factors(2, 2, 1, vec![2.0, 2.0], vec![3.0, 3.0]).unwrap();
        assert_eq!(m.entry(1, 0).unwrap(), 6.0);
    }

    #[test]
    fn entries_match_dense_product() {
        let m = init_factors(4, 3, 2, 0.7, 0.9, 11).unwrap();
        let dense = dense_product(&m);
        for i in 0..4 {
            for j in 0..3 {
                assert!((m.entry(i, j).unwrap() - dense[i * 3 + j]).abs() < 1e-12);
            }
        }
        assert_eq!(m.to_dense().len(), 12);
    }

    #[test]
    fn out_of_range_entry_is_an_error() {
        let m = LowRankMatrix::zeros(3, 3, 1).unwrap();
        assert!(matches!(m.entry(3, 0), Err(Error::Index { .. })));
        assert!(matches!(m.entry(0, 3), Err(Error::Index { .. })));
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_factors(10, 8, 3, 0.5, 0.1, 42).unwrap();
        let b = init_factors(10, 8, 3, 0.5, 0.1, 42).unwrap();
        assert_eq!(a, b);
        let c = init_factors(10, 8, 3, 0.5, 0.1, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_init_gives_rank_valued_entries() {
        let m = init_factors(5, 6, 3, 1.0, 0.0, 1).unwrap();
        assert!(m.left().iter().chain(m.right()).all(|&v| v == 1.0));
        assert_eq!(m.entry(4, 5).unwrap(), 3.0);
    }

    #[test]
    fn init_product_stays_in_interval() {
        // Each of the K terms lies in [0.9^2, 1.1^2].
        let m = init_factors(10, 10, 2, 1.0, 0.1, 3).unwrap();
        for v in m.to_dense() {
            assert!((2.0 * 0.81..=2.0 * 1.21).contains(&v), "{v}");
        }
    }

    #[test]
    fn rank_above_min_dimension_is_rejected() {
        assert!(matches!(
            init_factors(3, 5, 4, 1.0, 0.1, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            init_factors(3, 5, 0, 1.0, 0.1, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn flatten_sizes() {
        let a = LowRankMatrix::zeros(2, 2, 1).unwrap();
        assert_eq!(flatten(&[a]).len(), 4);
        let b = LowRankMatrix::zeros(3, 4, 2).unwrap();
        let c = LowRankMatrix::zeros(5, 5, 1).unwrap();
        assert_eq!(flatten(&[b, c]).len(), 24);
    }

    #[test]
    fn param_counts() {
        let m = LowRankMatrix::zeros(20, 20, 3).unwrap();
        assert_eq!(param_count(std::slice::from_ref(&m)), 120);
        assert_eq!(param_count(&[m.clone(), m.clone(), m.clone()]), 360);
        assert_eq!(m.dense_count(), 400);
        assert!((m.param_count() as f64 / m.dense_count() as f64 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn unflatten_rejects_bad_lengths() {
        let m = LowRankMatrix::zeros(3, 4, 2).unwrap();
        let mut flat = flatten(&[m]);
        flat.values.pop();
        assert!(matches!(unflatten(&flat), Err(Error::Layout(_))));
    }

    fn arb_matrix() -> impl Strategy<Value = LowRankMatrix> {
        (1usize..6, 1usize..6, any::<u64>()).prop_flat_map(|(n, m, seed)| {
            (1..=n.min(m)).prop_map(move |k| init_factors(n, m, k, 1.0, 0.9, seed).unwrap())
        })
    }

    proptest! {
        #[test]
        fn flatten_round_trip(ms in prop::collection::vec(arb_matrix(), 1..4)) {
            let flat = flatten(&ms);
            prop_assert_eq!(flat.len(), param_count(&ms));
            prop_assert_eq!(flat.len(), flat.layout_len());
            let back = unflatten(&flat).unwrap();
            prop_assert_eq!(back, ms);
        }

        #[test]
        fn entry_matches_dense_oracle(m in arb_matrix()) {
            let dense = dense_product(&m);
            for i in 0..m.n_rows() {
                for j in 0..m.n_cols() {
                    prop_assert!((m.entry(i, j).unwrap() - dense[i * m.n_cols() + j]).abs() < 1e-12);
                }
            }
        }
    }
}
