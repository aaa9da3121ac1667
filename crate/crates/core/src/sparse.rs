use num_complex::Complex64;

use crate::error::{Error, Result};

/// Square complex matrix in compressed-row form. Columns within a row are
/// sorted and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseChannelMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SparseChannelMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, row_ptr: vec![0; dim + 1], cols: Vec::new(), vals: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_rows(dim, (0..dim).map(|i| vec![(i, Complex64::new(1.0, 0.0))]))
            .expect("identity is well formed")
    }

    /// Builds from per-row `(column, value)` lists. Entries are sorted;
    /// repeated columns in a row are an error.
    pub fn from_rows<I>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<(usize, Complex64)>>,
    {
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (r, mut row) in rows.into_iter().enumerate() {
            if r >= dim {
                return Err(Error::LengthMismatch { expected: dim, actual: r + 1 });
            }
            row.sort_by_key(|&(c, _)| c);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::InvalidChannel(format!("row {r} has column {} twice", w[0].0)));
                }
            }
            for (c, v) in row {
                if c >= dim {
                    return Err(Error::IndexOutOfRange { k: r, l: c, n: dim, m: dim });
                }
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        if row_ptr.len() != dim + 1 {
            return Err(Error::LengthMismatch { expected: dim, actual: row_ptr.len() - 1 });
        }
        Ok(Self { dim, row_ptr, cols, vals })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[Complex64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.cols[span.clone()], &self.vals[span])
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[usize], &[Complex64])> + '_ {
        (0..self.dim).map(move |r| self.row(r))
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(i) => vals[i],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    /// Overwrites an existing nonzero. Returns false if `(r, c)` is not stored.
    pub fn set_existing(&mut self, r: usize, c: usize, value: Complex64) -> bool {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(i) => {
                self.vals[span.start + i] = value;
                true
            }
            Err(_) => false,
        }
    }

    pub fn row_degrees(&self) -> Vec<usize> {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn col_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.dim];
        for &c in &self.cols {
            deg[c] += 1;
        }
        deg
    }

    /// Row indices of the nonzeros in each column, ascending.
    pub fn column_sets(&self) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); self.dim];
        for r in 0..self.dim {
            for &c in self.row(r).0 {
                sets[c].push(r);
            }
        }
        sets
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.dim {
            return Err(Error::LengthMismatch { expected: self.dim, actual: x.len() });
        }
        Ok(self
            .rows()
            .map(|(cols, vals)| cols.iter().zip(vals).map(|(&c, v)| v * x[c]).sum())
            .collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.vals.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim * self.dim];
        for r in 0..self.dim {
            let (cols, vals) = self.row(r);
            for (&c, v) in cols.iter().zip(vals) {
                out[r * self.dim + c] = *v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn builds_sorted_rows() {
        let m = SparseChannelMatrix::from_rows(3, vec![vec![(2, c(1.0)), (0, c(2.0))], vec![], vec![(1, c(3.0))]])
            .unwrap();
        assert_eq!(m.row(0).0, &[0, 2]);
        assert_eq!(m.get(0, 2), c(1.0));
        assert_eq!(m.get(1, 1), c(0.0));
        assert_eq!(m.row_degrees(), vec![2, 0, 1]);
        assert_eq!(m.col_degrees(), vec![1, 1, 1]);
        assert_eq!(m.column_sets(), vec![vec![0], vec![2], vec![0]]);
        assert_eq!(m.mul_vec(&[c(1.0), c(1.0), c(1.0)]).unwrap(), vec![c(3.0), c(0.0), c(3.0)]);
    }

    #[test]
    fn rejects_duplicates_and_bad_shapes() {
        assert!(SparseChannelMatrix::from_rows(2, vec![vec![(0, c(1.0)), (0, c(1.0))], vec![]]).is_err());
        assert!(SparseChannelMatrix::from_rows(2, vec![vec![(5, c(1.0))], vec![]]).is_err());
        assert!(SparseChannelMatrix::from_rows(2, vec![vec![]]).is_err());
        assert!(SparseChannelMatrix::identity(3).mul_vec(&[c(0.0)]).is_err());
    }

    #[test]
    fn set_existing_only_touches_stored_entries() {
        let mut m = SparseChannelMatrix::identity(2);
        assert!(m.set_existing(1, 1, c(5.0)));
        assert!(!m.set_existing(0, 1, c(5.0)));
        assert_eq!(m.to_dense(), vec![c(1.0), c(0.0), c(0.0), c(5.0)]);
    }
}
