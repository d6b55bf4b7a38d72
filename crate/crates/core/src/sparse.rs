//! Compressed sparse row storage for the reservoir connectivity matrix.

use alloc::vec::Vec;

/// Square-or-rectangular sparse matrix in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row (column, value) entries. Entries within a row must
    /// be in strictly increasing column order; this is asserted.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n_rows = rows.len();
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &rows {
            let mut prev: Option<usize> = None;
            for &(j, v) in row {
                assert!(j < n_cols, "column index out of range");
                if let Some(p) = prev {
                    assert!(j > p, "row entries must be in increasing column order");
                }
                prev = Some(j);
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for i in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    /// Multiplies every stored value by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// Iterates stored entries as (row, col, value).
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(move |k| (i, self.col_idx[k], self.values[k]))
        })
    }

    /// FNV-style fold of the exact stored bits; used to assert immutability.
    pub fn bits_hash(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for (i, j, v) in self.entries() {
            h ^= (i as u64).rotate_left(32) ^ (j as u64) ^ v.to_bits();
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn matvec_matches_dense() {
        // [[1, 0, 2], [0, 0, 0], [0, 3, 4]]
        let a = CsrMatrix::from_rows(
            3,
            vec![vec![(0, 1.0), (2, 2.0)], vec![], vec![(1, 3.0), (2, 4.0)]],
        );
        assert_eq!(a.nnz(), 4);
        let mut y = [0.0; 3];
        a.matvec(&[1.0, 2.0, 3.0], &mut y);
        assert_eq!(y, [7.0, 0.0, 18.0]);
    }

    #[test]
    fn scale_multiplies_values() {
        let mut a = CsrMatrix::from_rows(2, vec![vec![(0, 1.0)], vec![(1, -2.0)]]);
        a.scale(0.5);
        let mut y = [0.0; 2];
        a.matvec(&[1.0, 1.0], &mut y);
        assert_eq!(y, [0.5, -1.0]);
    }

    #[test]
    fn bits_hash_detects_changes() {
        let a = CsrMatrix::from_rows(2, vec![vec![(0, 1.0)], vec![(1, 2.0)]]);
        let mut b = a.clone();
        assert_eq!(a.bits_hash(), b.bits_hash());
        b.scale(1.0000001);
        assert_ne!(a.bits_hash(), b.bits_hash());
    }
}
