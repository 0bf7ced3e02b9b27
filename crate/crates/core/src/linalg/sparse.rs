use alloc::borrow::Cow;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{ensure_finite, Tensor};
use crate::{Error, Result};

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing within a row and no explicit zeros
/// are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl<'a> From<&'a SparseMatrix> for Cow<'a, SparseMatrix> {
    fn from(m: &'a SparseMatrix) -> Self {
        Cow::Borrowed(m)
    }
}

impl From<SparseMatrix> for Cow<'_, SparseMatrix> {
    fn from(m: SparseMatrix) -> Self {
        Cow::Owned(m)
    }
}

impl SparseMatrix {
    /// Builds from raw CSR arrays, validating every layout invariant.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |msg: &str| Err(Error::Input(alloc::format!("invalid CSR layout: {msg}")));
        if row_ptr.len() != rows + 1 || row_ptr[0] != 0 {
            return bad("row pointer length or origin");
        }
        if row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return bad("row pointer decreases");
        }
        if row_ptr[rows] != values.len() || col_idx.len() != values.len() {
            return bad("final row pointer does not match the value count");
        }
        for i in 0..rows {
            let cols_i = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols_i.windows(2).any(|w| w[0] >= w[1]) {
                return bad("column indices not strictly increasing");
            }
            if cols_i.iter().any(|&c| c >= cols) {
                return bad("column index out of range");
            }
        }
        if values.contains(&0.0) {
            return bad("explicit zero stored");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: "SparseMatrix::from_csr",
            });
        }
        Ok(SparseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds from `(row, col, value)` entries in any order. Zero values are
    /// dropped; a repeated position is an error.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        entries.retain(|e| e.2 != 0.0);
        entries.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for (k, &(r, c, v)) in entries.iter().enumerate() {
            if r >= rows || c >= cols {
                return Err(Error::Input(alloc::format!(
                    "entry ({r}, {c}) outside a {rows}x{cols} matrix"
                )));
            }
            if k > 0 && entries[k - 1].0 == r && entries[k - 1].1 == c {
                return Err(Error::Input(alloc::format!("duplicate entry ({r}, {c})")));
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self::from_csr(rows, cols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Stores every nonzero of a dense tensor.
    pub fn from_dense(t: &Tensor) -> Self {
        let mut row_ptr = Vec::with_capacity(t.rows() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..t.rows() {
            for (j, &v) in t.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(values.len());
        }
        SparseMatrix {
            rows: t.rows(),
            cols: t.cols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored `(column, value)` pairs of row `i` in ascending column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    /// All stored entries as `(row, col, value)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Exact transpose; values are moved, never recomputed.
    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                let slot = next[j];
                col_idx[slot] = i;
                values[slot] = v;
                next[j] += 1;
            }
        }
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> Tensor {
        let mut out = Tensor::zeros(self.rows, self.cols);
        for (i, j, v) in self.entries() {
            out.set(i, j, v);
        }
        out
    }

    /// Sparse × dense. Each output row accumulates in ascending column order,
    /// matching `to_dense().matmul(d)` bit for bit.
    pub fn spmm(&self, d: &Tensor) -> Result<Tensor> {
        if self.cols != d.rows() {
            return Err(Error::Dimension {
                op: "spmm",
                left: self.shape(),
                right: d.shape(),
            });
        }
        let mut out = Tensor::zeros(self.rows, d.cols());
        for i in 0..self.rows {
            let out_row = out.row_mut(i);
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let a = self.values[k];
                for (o, b) in out_row.iter_mut().zip(d.row(self.col_idx[k])) {
                    *o += a * b;
                }
            }
        }
        ensure_finite("spmm", out)
    }

    /// `selfᵀ × d` without building the transpose.
    pub fn spmm_t(&self, d: &Tensor) -> Result<Tensor> {
        if self.rows != d.rows() {
            return Err(Error::Dimension {
                op: "spmm_t",
                left: (self.cols, self.rows),
                right: d.shape(),
            });
        }
        let mut out = Tensor::zeros(self.cols, d.cols());
        for i in 0..self.rows {
            let src = d.row(i);
            for (j, a) in self.row(i) {
                for (o, b) in out.row_mut(j).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        ensure_finite("spmm_t", out)
    }

    /// Multiplies entry `(i, j)` by `factor(i, j)`, dropping entries that
    /// become zero.
    pub fn scale_values(&self, factor: impl Fn(usize, usize) -> f64) -> SparseMatrix {
        let mut row_ptr = Vec::with_capacity(self.rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                let scaled = v * factor(i, j);
                if scaled != 0.0 {
                    col_idx.push(j);
                    values.push(scaled);
                }
            }
            row_ptr.push(values.len());
        }
        SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            row_ptr,
            col_idx,
            values,
        }
    }
}
