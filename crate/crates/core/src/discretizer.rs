//! Regular state-space grid mapping continuous states to matrix indices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bounds and resolution of one state dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, cells: usize) -> Self {
        Self { lo, hi, cells }
    }

    /// Cell holding `x`, clamped to the boundary cells.
    #[inline]
    pub fn cell(&self, x: f64) -> usize {
        let pos = ((x - self.lo) / (self.hi - self.lo) * self.cells as f64).floor();
        if pos <= 0.0 {
            0
        } else {
            (pos as usize).min(self.cells - 1)
        }
    }
}

/// Matrix coordinates of a discretized state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Per-dimension grid plus a split of the dimensions into a row group and a
/// column group. Each group is flattened mixed-radix, first listed dimension
/// most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    dims: Vec<Axis>,
    row_dims: Vec<usize>,
    col_dims: Vec<usize>,
}

impl StateGrid {
    pub fn new(dims: Vec<Axis>, row_dims: Vec<usize>, col_dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "state grid needs at least 2 dimensions, got {}",
                dims.len()
            )));
        }
        for (d, axis) in dims.iter().enumerate() {
            if !(axis.lo.is_finite() && axis.hi.is_finite() && axis.lo < axis.hi) {
                return Err(Error::Config(format!(
                    "dimension {d}: bounds must be finite with lo < hi, got [{}, {}]",
                    axis.lo, axis.hi
                )));
            }
            if axis.cells == 0 {
                return Err(Error::Config(format!("dimension {d}: cells must be >= 1")));
            }
        }
        if row_dims.is_empty() || col_dims.is_empty() {
            return Err(Error::Config(
                "row and column dimension groups must both be non-empty".into(),
            ));
        }
        let mut seen = vec![false; dims.len()];
        for &d in row_dims.iter().chain(&col_dims) {
            if d >= dims.len() {
                return Err(Error::Config(format!(
                    "dimension index {d} out of range for {}-dimensional state",
                    dims.len()
                )));
            }
            if std::mem::replace(&mut seen[d], true) {
                return Err(Error::Config(format!("dimension {d} assigned twice")));
            }
        }
        if let Some(d) = seen.iter().position(|s| !s) {
            return Err(Error::Config(format!(
                "dimension {d} is not assigned to rows or columns"
            )));
        }
        Ok(Self {
            dims,
            row_dims,
            col_dims,
        })
    }

    /// Default split: first half of the dimensions index rows, the rest columns.
    pub fn with_default_split(dims: Vec<Axis>) -> Result<Self> {
        let half = dims.len() / 2;
        let rows = (0..half).collect();
        let cols = (half..dims.len()).collect();
        Self::new(dims, rows, cols)
    }

    pub fn dims(&self) -> &[Axis] {
        &self.dims
    }

    pub fn row_dims(&self) -> &[usize] {
        &self.row_dims
    }

    pub fn col_dims(&self) -> &[usize] {
        &self.col_dims
    }

    pub fn state_dim(&self) -> usize {
        self.dims.len()
    }

    /// `(N, M)`.
    pub fn shape(&self) -> (usize, usize) {
        let prod = |group: &[usize]| group.iter().map(|&d| self.dims[d].cells).product();
        (prod(&self.row_dims), prod(&self.col_dims))
    }

    pub fn n_cells(&self) -> usize {
        let (n, m) = self.shape();
        n * m
    }

    pub fn cell(&self, state: &[f64]) -> Result<Cell> {
        if state.len() != self.dims.len() {
            return Err(Error::Shape {
                expected: self.dims.len(),
                actual: state.len(),
            });
        }
        if let Some(x) = state.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("state component {x}")));
        }
        let flatten = |group: &[usize]| {
            group.iter().fold(0usize, |acc, &d| {
                let axis = &self.dims[d];
                acc * axis.cells + axis.cell(state[d])
            })
        };
        Ok(Cell::new(flatten(&self.row_dims), flatten(&self.col_dims)))
    }

    pub fn state_to_indices(&self, state: &[f64]) -> Result<(usize, usize)> {
        self.cell(state).map(|c| (c.row, c.col))
    }
}

pub fn grid_shape(g: &StateGrid) -> (usize, usize) {
    g.shape()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_grid() -> StateGrid {
        StateGrid::new(
            vec![Axis::new(0.0, 1.0, 10), Axis::new(0.0, 1.0, 10)],
            vec![0],
            vec![1],
        )
        .unwrap()
    }

    #[test]
    fn lower_corner() {
        assert_eq!(unit_grid().state_to_indices(&[0.0, 0.0]).unwrap(), (0, 0));
    }

    #[test]
    fn interior_point() {
        // floor(0.95 * 10) = 9, floor(0.25 * 10) = 2
        assert_eq!(unit_grid().state_to_indices(&[0.95, 0.25]).unwrap(), (9, 2));
    }

    #[test]
    fn clamps_out_of_bounds() {
        assert_eq!(unit_grid().state_to_indices(&[1.7, -0.3]).unwrap(), (9, 0));
        assert_eq!(unit_grid().state_to_indices(&[1.0, 1.0]).unwrap(), (9, 9));
    }

    #[test]
    fn shapes() {
        assert_eq!(grid_shape(&unit_grid()), (10, 10));
        let acro = StateGrid::with_default_split(vec![Axis::new(-1.0, 1.0, 8); 4]).unwrap();
        assert_eq!(acro.shape(), (64, 64));
        let three = StateGrid::new(
            vec![
                Axis::new(0.0, 1.0, 20),
                Axis::new(0.0, 1.0, 8),
                Axis::new(0.0, 1.0, 8),
            ],
            vec![0],
            vec![1, 2],
        )
        .unwrap();
        assert_eq!(three.shape(), (20, 64));
    }

    #[test]
    fn mixed_radix_order() {
        let g = StateGrid::new(
            vec![
                Axis::new(0.0, 1.0, 3),
                Axis::new(0.0, 1.0, 4),
                Axis::new(0.0, 1.0, 5),
            ],
            vec![0],
            vec![1, 2],
        )
        .unwrap();
        // col = cell1 * 5 + cell2
        assert_eq!(
            g.state_to_indices(&[0.5, 0.6, 0.9]).unwrap(),
            (1, 2 * 5 + 4)
        );
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            unit_grid().state_to_indices(&[0.1]),
            Err(Error::Shape {
                expected: 2,
                actual: 1
            })
        ));
    }

    #[test]
    fn invalid_grids_are_rejected() {
        let ax = Axis::new(0.0, 1.0, 4);
        assert!(StateGrid::new(vec![ax, ax], vec![0, 1], vec![]).is_err());
        assert!(StateGrid::new(vec![ax, ax], vec![0], vec![0]).is_err());
        assert!(StateGrid::new(vec![ax, ax, ax], vec![0], vec![1]).is_err());
        assert!(StateGrid::new(vec![Axis::new(1.0, 1.0, 4), ax], vec![0], vec![1]).is_err());
        assert!(StateGrid::new(vec![Axis::new(0.0, 1.0, 0), ax], vec![0], vec![1]).is_err());
    }

    proptest! {
        #[test]
        fn indices_always_in_range(
            x in -1e6f64..1e6, y in -1e6f64..1e6, z in -1e3f64..1e3,
        ) {
            let g = StateGrid::new(
                vec![Axis::new(-3.0, 3.0, 7), Axis::new(-1.0, 2.0, 5), Axis::new(0.0, 0.5, 3)],
                vec![0, 2],
                vec![1],
            ).unwrap();
            let (n, m) = g.shape();
            let (i, j) = g.state_to_indices(&[x, y, z]).unwrap();
            prop_assert!(i < n && j < m);
        }

        #[test]
        fn same_cell_same_indices(cx in 0usize..10, cy in 0usize..10, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let g = unit_grid();
            let s1 = [(cx as f64 + a * 0.999) / 10.0, (cy as f64 + b * 0.999) / 10.0];
            let s2 = [(cx as f64 + 0.0005) / 10.0, (cy as f64 + 0.0005) / 10.0];
            prop_assert_eq!(g.state_to_indices(&s1).unwrap(), g.state_to_indices(&s2).unwrap());
        }
    }
}
