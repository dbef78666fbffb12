use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::grid::{Grid, GridFunction};
use crate::{Error, Result};

/// Largest operator that may be materialized as a dense matrix.
pub const DENSE_LIMIT: usize = 5000;

/// Sparse complex operator on the functions of one grid, stored row-wise
/// with column indices ascending in every row.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    grid: Arc<Grid>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl LinearOperator {
    /// Builds the operator row by row; `fill(k, row)` pushes `(column, value)`
    /// pairs of row `k` in any order. Duplicate columns are summed.
    pub fn from_rows(
        grid: Arc<Grid>,
        mut fill: impl FnMut(usize, &mut Vec<(usize, Complex64)>),
    ) -> LinearOperator {
        let total = grid.total();
        let mut row_ptr = Vec::with_capacity(total + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut row = Vec::new();
        row_ptr.push(0);
        for k in 0..total {
            row.clear();
            fill(k, &mut row);
            row.sort_by_key(|&(c, _)| c);
            for &(c, v) in &row {
                debug_assert!(c < total);
                if cols.len() > row_ptr[k] && cols.last() == Some(&c) {
                    *vals.last_mut().expect("nonempty") += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        LinearOperator {
            grid,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn diagonal(grid: Arc<Grid>, diag: &[Complex64]) -> LinearOperator {
        LinearOperator::from_rows(grid, |k, row| {
            if diag[k] != Complex64::new(0.0, 0.0) {
                row.push((k, diag[k]));
            }
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, k: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let range = self.row_ptr[k]..self.row_ptr[k + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn entry(&self, j: usize, k: usize) -> Complex64 {
        let range = self.row_ptr[j]..self.row_ptr[j + 1];
        match self.cols[range.clone()].binary_search(&k) {
            Ok(pos) => self.vals[range.start + pos],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        if !(Arc::ptr_eq(&self.grid, u.grid()) || *self.grid == **u.grid()) {
            return Err(Error::GridMismatch);
        }
        let x = u.values();
        let out = (0..self.grid.total())
            .map(|k| {
                self.row(k)
                    .fold(Complex64::new(0.0, 0.0), |acc, (c, v)| acc + v * x[c])
            })
            .collect();
        GridFunction::new(Arc::clone(&self.grid), out)
    }

    /// Sparse product `self · other`.
    pub fn compose(&self, other: &LinearOperator) -> Result<LinearOperator> {
        if !(Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(LinearOperator::from_rows(Arc::clone(&self.grid), |j, row| {
            for (k, a) in self.row(j) {
                row.extend(other.row(k).map(|(l, b)| (l, a * b)));
            }
        }))
    }

    /// `self - other`.
    pub fn sub(&self, other: &LinearOperator) -> Result<LinearOperator> {
        if !(Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(LinearOperator::from_rows(Arc::clone(&self.grid), |j, row| {
            row.extend(self.row(j));
            row.extend(other.row(j).map(|(k, v)| (k, -v)));
        }))
    }

    /// Dense matrix; fails above [`DENSE_LIMIT`] unknowns.
    pub fn to_dense(&self) -> Result<DMatrix<Complex64>> {
        let n = self.grid.total();
        if n > DENSE_LIMIT {
            return Err(Error::Dimension(format!(
                "{n} unknowns exceed the dense limit of {DENSE_LIMIT}"
            )));
        }
        let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for j in 0..n {
            for (k, v) in self.row(j) {
                m[(j, k)] = v;
            }
        }
        Ok(m)
    }

    /// max |A_jk - conj(A_kj)| / max |A_jk| over stored entries.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for j in 0..self.grid.total() {
            for (k, v) in self.row(j) {
                scale = scale.max(v.norm());
                worst = worst.max((v - self.entry(k, j).conj()).norm());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

/// Elementwise relative hermiticity defect of a dense matrix.
pub fn dense_hermiticity_defect(m: &DMatrix<Complex64>) -> f64 {
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for j in 0..m.nrows() {
        for k in j..m.ncols() {
            worst = worst.max((m[(j, k)] - m[(k, j)].conj()).norm());
        }
    }
    worst / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::diff_operator;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn duplicate_columns_accumulate() {
        let g = Arc::new(Grid::cube(1, 0.0, 1.0, 3).unwrap());
        let op = LinearOperator::from_rows(Arc::clone(&g), |k, row| {
            row.push((k, c(1.0, 0.0)));
            row.push((k, c(0.0, 2.0)));
        });
        assert_eq!(op.nnz(), 3);
        assert_eq!(op.entry(1, 1), c(1.0, 2.0));
        assert_eq!(op.entry(1, 2), c(0.0, 0.0));
    }

    #[test]
    fn dense_limit() {
        let g = Arc::new(Grid::cube(1, 0.0, 1.0, DENSE_LIMIT + 1).unwrap());
        let op = diff_operator(&g, 0);
        assert!(matches!(op.to_dense(), Err(Error::Dimension(_))));
    }

    #[test]
    fn compose_matches_dense_product() {
        let g = Arc::new(Grid::new(vec![(-1.0, 1.0), (0.0, 2.0)], vec![6, 5]).unwrap());
        let a = diff_operator(&g, 0);
        let b = LinearOperator::from_rows(Arc::clone(&g), |k, row| {
            row.push((k, c(k as f64, 1.0)));
            for (col, v) in diff_operator(&g, 1).row(k) {
                row.push((col, v * c(0.0, 2.0)));
            }
        });
        let ab = a.compose(&b).unwrap().to_dense().unwrap();
        let expected = a.to_dense().unwrap() * b.to_dense().unwrap();
        assert!((ab - expected).iter().all(|z| z.norm() < 1e-12));
        let diff = b.sub(&b).unwrap().to_dense().unwrap();
        assert!(diff.iter().all(|z| *z == c(0.0, 0.0)));
    }

    proptest! {
        #[test]
        fn apply_is_linear_and_matches_dense(
            a in (-2.0f64..2.0, -2.0f64..2.0),
            b in (-2.0f64..2.0, -2.0f64..2.0),
            u in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 7 * 6),
            v in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 7 * 6),
        ) {
            let g = Arc::new(Grid::new(vec![(-1.0, 1.0), (0.0, 2.0)], vec![7, 6]).unwrap());
            let d0 = diff_operator(&g, 0);
            let mix = LinearOperator::from_rows(Arc::clone(&g), |k, row| {
                row.push((k, c(0.5, -1.0)));
                for (col, val) in diff_operator(&g, 1).row(k) {
                    row.push((col, val * c(0.0, 3.0)));
                }
                for (col, val) in d0.row(k) {
                    row.push((col, val));
                }
            });
            let (a, b) = (c(a.0, a.1), c(b.0, b.1));
            let u = GridFunction::new(Arc::clone(&g), u.into_iter().map(|(r, i)| c(r, i)).collect()).unwrap();
            let v = GridFunction::new(Arc::clone(&g), v.into_iter().map(|(r, i)| c(r, i)).collect()).unwrap();
            let lhs = mix.apply(&u.scale(a).add(&v.scale(b)).unwrap()).unwrap();
            let rhs = mix.apply(&u).unwrap().scale(a).add(&mix.apply(&v).unwrap().scale(b)).unwrap();
            for (x, y) in lhs.values().iter().zip(rhs.values()) {
                prop_assert!((x - y).norm() <= 1e-12 * (1.0 + x.norm()));
            }
            let dense = mix.to_dense().unwrap();
            let du = &dense * nalgebra::DVector::from_column_slice(u.values());
            let applied = mix.apply(&u).unwrap();
            for (x, y) in du.iter().zip(applied.values()) {
                prop_assert_eq!(x, y);
            }
        }
    }
}
