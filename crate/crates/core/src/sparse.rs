//! Sparse matrices in CSR form with the four products the solvers need:
//! `A y`, `A' x`, `|A| y`, `|A|' x`, where `|A|` is the entrywise absolute value.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// An `n x d` real matrix stored in compressed sparse row form.
///
/// Explicit zeros are dropped at construction and duplicate entries are
/// summed, so every stored value is finite and nonzero. The struct carries a
/// relaxed atomic counter of product-routine invocations, used to verify the
/// per-iteration cost budget of the solvers.
#[derive(Debug)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
    product_ops: AtomicU64,
}

impl Clone for SparseMatrix {
    fn clone(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            vals: self.vals.clone(),
            product_ops: AtomicU64::new(0),
        }
    }
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicates are summed,
    /// zeros (including sums that cancel) are dropped.
    pub fn from_triplets(rows: usize, cols: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for &(i, j, v) in entries {
            if i >= rows || j >= cols {
                return Err(Error::IndexOutOfBounds {
                    row: i,
                    col: j,
                    rows,
                    cols,
                });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("matrix entry ({i}, {j}) = {v}")));
            }
            triplets.push((i, j, v));
        }
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut iter = triplets.into_iter().peekable();
        while let Some((i, j, mut v)) = iter.next() {
            while let Some(&(i2, j2, v2)) = iter.peek() {
                if i2 == i && j2 == j {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            if v != 0.0 {
                row_ptr[i + 1] += 1;
                col_idx.push(j);
                vals.push(v);
            }
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            vals,
            product_ops: AtomicU64::new(0),
        })
    }

    /// Builds from a dense row-major matrix; zeros are dropped.
    pub fn from_dense(dense: &[Vec<f64>]) -> Result<Self> {
        let rows = dense.len();
        let cols = dense.first().map_or(0, |r| r.len());
        let mut triplets = Vec::new();
        for (i, row) in dense.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "ragged dense matrix: row {i} has {} columns, expected {cols}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(rows, cols, &triplets)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Iterates stored entries as `(row, col, value)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.col_idx[k], self.vals[k]))
        })
    }

    pub fn row_is_empty(&self, i: usize) -> bool {
        self.row_ptr[i] == self.row_ptr[i + 1]
    }

    /// Number of product-routine calls since construction (or the last reset).
    pub fn product_count(&self) -> u64 {
        self.product_ops.load(Ordering::Relaxed)
    }

    pub fn reset_product_count(&self) {
        self.product_ops.store(0, Ordering::Relaxed);
    }

    fn tick(&self) {
        self.product_ops.fetch_add(1, Ordering::Relaxed);
    }

    /// `A y`, length `rows`.
    pub fn mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.cols, "mul_vec: vector length mismatch");
        self.tick();
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * y[self.col_idx[k]];
            }
            out[i] = acc;
        }
        out
    }

    /// `A' x`, length `cols`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "tr_mul_vec: vector length mismatch");
        self.tick();
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.col_idx[k]] += self.vals[k] * xi;
            }
        }
        out
    }

    /// `|A| y`, length `rows`.
    pub fn abs_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.cols, "abs_mul_vec: vector length mismatch");
        self.tick();
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k].abs() * y[self.col_idx[k]];
            }
            out[i] = acc;
        }
        out
    }

    /// `|A|' x`, length `cols`.
    pub fn abs_tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "abs_tr_mul_vec: vector length mismatch");
        self.tick();
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.col_idx[k]] += self.vals[k].abs() * xi;
            }
        }
        out
    }

    /// Per-column sums of absolute values.
    pub fn col_abs_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for k in 0..self.vals.len() {
            sums[self.col_idx[k]] += self.vals[k].abs();
        }
        sums
    }

    /// Returns `factor * A`.
    pub fn scaled(&self, factor: f64) -> SparseMatrix {
        let triplets: Vec<_> = self.entries().map(|(i, j, v)| (i, j, factor * v)).collect();
        SparseMatrix::from_triplets(self.rows, self.cols, &triplets)
            .expect("scaling preserves well-formedness")
    }

    /// Returns `-A`.
    pub fn negated(&self) -> SparseMatrix {
        self.scaled(-1.0)
    }

    /// Dense row-major copy, for reference computations in tests and tiny instances.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.cols]; self.rows];
        for (i, j, v) in self.entries() {
            dense[i][j] = v;
        }
        dense
    }
}
