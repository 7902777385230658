use crate::error::{Error, Result};
use crate::scalar::Real;

/// Symmetric sparse matrix stored as its coalesced lower triangle.
///
/// Entries are kept sorted by `(col, row)` with `row >= col`. Explicit
/// zeros are retained so that a matrix family with a fixed pattern (a
/// precision that depends on hyperparameters) keeps a stable layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SymSparse<T> {
    dim: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SymSparse<T> {
    /// Builds a matrix from `(row, col, value)` triplets. Upper-triangle
    /// coordinates are mirrored into the lower triangle and duplicates are
    /// summed.
    pub fn from_triplets<I>(dim: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        if dim == 0 {
            return Err(Error::Sparse("dimension must be at least 1".into()));
        }
        let mut items: Vec<(usize, usize, T)> = Vec::new();
        for (r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(Error::Sparse(format!(
                    "entry ({r}, {c}) outside a {dim}x{dim} matrix"
                )));
            }
            let (r, c) = if r >= c { (r, c) } else { (c, r) };
            items.push((c, r, v));
        }
        items.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut rows = Vec::with_capacity(items.len());
        let mut cols = Vec::with_capacity(items.len());
        let mut values: Vec<T> = Vec::with_capacity(items.len());
        for (c, r, v) in items {
            if let (Some(&lr), Some(&lc)) = (rows.last(), cols.last()) {
                if lr == r && lc == c {
                    *values.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(r);
            cols.push(c);
            values.push(v);
        }
        Ok(Self {
            dim,
            rows,
            cols,
            values,
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::from_diagonal(&vec![T::one(); dim])
    }

    pub fn from_diagonal(diag: &[T]) -> Result<Self> {
        Self::from_triplets(diag.len(), diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    /// Dense symmetric input; only the lower triangle is read, exact zeros
    /// off the diagonal are dropped.
    pub fn from_dense(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let mut trip = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate().take(i + 1) {
                if i == j || v != T::zero() {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n, trip)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Lower-triangle entries `(row, col, value)` in storage order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.values)
            .map(|((&r, &c), &v)| (r, c, v))
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        let (r, c) = if row >= col { (row, col) } else { (col, row) };
        let start = self.cols.partition_point(|&x| x < c);
        let end = self.cols.partition_point(|&x| x <= c);
        match self.rows[start..end].binary_search(&r) {
            Ok(k) => self.values[start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut y = vec![T::zero(); self.dim];
        for (r, c, v) in self.entries() {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        Ok(y)
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[T]) -> Result<T> {
        let y = self.mul_vec(x)?;
        Ok(y.iter().zip(x).map(|(&a, &b)| a * b).sum())
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.dim]; self.dim];
        for (r, c, v) in self.entries() {
            out[r][c] = v;
            out[c][r] = v;
        }
        out
    }

    pub fn max_abs_diag(&self) -> T {
        self.entries()
            .filter(|(r, c, _)| r == c)
            .fold(T::zero(), |m, (_, _, v)| m.max(v.abs()))
    }
}
