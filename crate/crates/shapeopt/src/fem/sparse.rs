//! Compressed sparse row matrices with deterministic assembly.
//!
//! Triplets are reduced to CSR by a stable sort on (row, col) followed by
//! in-order summation, so repeated assembly of the same data is bitwise
//! reproducible and structurally symmetric inputs stay bitwise symmetric.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trips: Vec<(u32, u32, f64)>) -> Self {
        trips.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut iter = trips.into_iter().peekable();
        while let Some((r, c, v)) = iter.next() {
            let mut acc = v;
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if r2 == r && c2 == c {
                    acc += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            row_ptr[r as usize + 1] += 1;
            col_idx.push(c);
            values.push(acc);
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi].iter().zip(&self.values[lo..hi]).map(|(&c, &v)| (c as usize, v))
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for i in 0..self.nrows {
            let mut s = 0.0;
            for (j, v) in self.row(i) {
                s += v * x[j];
            }
            y[i] = s;
        }
        y
    }

    /// y = A^T x
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            let xi = x[i];
            if xi != 0.0 {
                for (j, v) in self.row(i) {
                    y[j] += v * xi;
                }
            }
        }
        y
    }

    /// x^T A y
    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        let mut s = 0.0;
        for i in 0..self.nrows {
            let mut row_sum = 0.0;
            for (j, v) in self.row(i) {
                row_sum += v * y[j];
            }
            s += x[i] * row_sum;
        }
        s
    }

    /// Entry lookup by binary search; zero when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&(j as u32)) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    /// Checks A_ij == A_ji bitwise for every stored entry.
    pub fn symmetry_check(&self) -> Result<()> {
        if self.nrows != self.ncols {
            return Err(Error::invalid("symmetry check on a non-square matrix"));
        }
        for (i, j, v) in self.entries() {
            let w = self.get(j, i);
            if v.to_bits() != w.to_bits() {
                return Err(Error::invalid(format!(
                    "matrix is not bitwise symmetric at ({i}, {j}): {v:e} vs {w:e}"
                )));
            }
        }
        Ok(())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Multiply row i by factors[i].
    pub fn scale_rows(&mut self, factors: &[f64]) {
        assert_eq!(factors.len(), self.nrows);
        for i in 0..self.nrows {
            let f = factors[i];
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                self.values[k] *= f;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplet_reduction_sums_duplicates() {
        let m = CsrMatrix::from_triplets(
            2,
            3,
            vec![(0, 1, 1.0), (1, 2, 2.0), (0, 1, 0.5), (1, 0, -1.0)],
        );
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 1), 1.5);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn matvec_and_transpose_agree_with_dense() {
        let m = CsrMatrix::from_triplets(
            3,
            2,
            vec![(0, 0, 2.0), (1, 1, 3.0), (2, 0, -1.0), (2, 1, 4.0)],
        );
        let y = m.matvec(&[1.0, 2.0]);
        assert_eq!(y, vec![2.0, 6.0, 7.0]);
        let z = m.matvec_transpose(&[1.0, 1.0, 1.0]);
        assert_eq!(z, vec![1.0, 7.0]);
        let q = m.quadratic_form(&[1.0, 1.0, 1.0], &[1.0, 2.0]);
        assert_eq!(q, 15.0);
    }
}
