//! Sparse Cholesky factorization `P Q Pᵀ = L Lᵀ`.
//!
//! The symbolic phase (ordering, elimination tree, pattern of `L`, and the
//! row patterns used by the up-looking numeric phase) is computed once per
//! sparsity pattern and shared between numeric factorizations through an
//! `Arc`. Inner Newton loops refactorize the same pattern many times.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::ordering::minimum_degree;
use super::sparse::SymSparse;

const NONE: usize = usize::MAX;

/// Relative pivot tolerance: a squared pivot at or below
/// `PIVOT_TOL * max|Q_ii|` is reported as not positive definite.
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SymbolicCholesky {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `pinv[old] = new`
    pinv: Vec<usize>,
    /// Upper triangle of `P Q Pᵀ` in compressed columns.
    cp: Vec<usize>,
    ci: Vec<usize>,
    /// Slot in `ci` for each lower-triangle entry of the analyzed pattern.
    entry_slots: Vec<usize>,
    /// Original `(row, col)` (lower triangle) of the analyzed pattern, in
    /// the input's storage order.
    entry_coords: Vec<(usize, usize)>,
    parent: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    /// For each row `k`: the columns `i < k` with `L[k, i] != 0` in
    /// topological order, and where that entry lives in `li`.
    rp: Vec<usize>,
    row_cols: Vec<usize>,
    row_slots: Vec<usize>,
}

impl SymbolicCholesky {
    /// Orders the pattern with minimum degree and computes the symbolic
    /// factor.
    pub fn analyze<T: Real>(pattern: &SymSparse<T>) -> Self {
        let n = pattern.dim();
        let edges = pattern.entries().map(|(r, c, _)| (r, c));
        let perm = minimum_degree(n, edges);
        Self::analyze_with_ordering(pattern, perm).expect("minimum degree yields a permutation")
    }

    /// Symbolic factorization with a caller-supplied ordering
    /// (`perm[new] = old`).
    pub fn analyze_with_ordering<T: Real>(pattern: &SymSparse<T>, perm: Vec<usize>) -> Result<Self> {
        let n = pattern.dim();
        if perm.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: perm.len(),
            });
        }
        let mut pinv = vec![NONE; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || pinv[old] != NONE {
                return Err(Error::Sparse("ordering is not a permutation".into()));
            }
            pinv[old] = new;
        }

        // upper triangle of the permuted matrix, one column per new index
        let entry_coords: Vec<(usize, usize)> = pattern.entries().map(|(r, c, _)| (r, c)).collect();
        let mut counts = vec![0usize; n + 1];
        let upper: Vec<(usize, usize)> = entry_coords
            .iter()
            .map(|&(r, c)| {
                let (i, j) = (pinv[r], pinv[c]);
                if i <= j {
                    (i, j)
                } else {
                    (j, i)
                }
            })
            .collect();
        for &(_, j) in &upper {
            counts[j + 1] += 1;
        }
        let mut cp = counts;
        for j in 0..n {
            cp[j + 1] += cp[j];
        }
        let mut order: Vec<usize> = (0..upper.len()).collect();
        order.sort_by_key(|&k| (upper[k].1, upper[k].0));
        let mut ci = vec![0usize; upper.len()];
        let mut entry_slots = vec![0usize; upper.len()];
        for (slot, &k) in order.iter().enumerate() {
            ci[slot] = upper[k].0;
            entry_slots[k] = slot;
        }

        // elimination tree
        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for &i0 in &ci[cp[k]..cp[k + 1]] {
                let mut i = i0;
                while i != NONE && i < k {
                    let next = ancestor[i];
                    ancestor[i] = k;
                    if next == NONE {
                        parent[i] = k;
                    }
                    i = next;
                }
            }
        }

        // row patterns via elimination-tree reach
        let mut mark = vec![NONE; n];
        let mut stack = vec![0usize; n];
        let mut path = vec![0usize; n];
        let mut rp = vec![0usize; n + 1];
        let mut row_cols = Vec::new();
        let mut colcount = vec![1usize; n];
        for k in 0..n {
            mark[k] = k;
            let mut top = n;
            for &i0 in &ci[cp[k]..cp[k + 1]] {
                let mut i = i0;
                if i > k {
                    continue;
                }
                let mut len = 0;
                while mark[i] != k {
                    path[len] = i;
                    len += 1;
                    mark[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    stack[top] = path[len];
                }
            }
            for &i in &stack[top..n] {
                row_cols.push(i);
                colcount[i] += 1;
            }
            rp[k + 1] = row_cols.len();
        }

        let mut lp = vec![0usize; n + 1];
        for j in 0..n {
            lp[j + 1] = lp[j] + colcount[j];
        }
        let mut li = vec![0usize; lp[n]];
        let mut next = lp[..n].to_vec();
        let mut row_slots = vec![0usize; row_cols.len()];
        for k in 0..n {
            for p in rp[k]..rp[k + 1] {
                let i = row_cols[p];
                let s = next[i];
                next[i] += 1;
                li[s] = k;
                row_slots[p] = s;
            }
            li[next[k]] = k;
            next[k] += 1;
        }

        Ok(Self {
            n,
            perm,
            pinv,
            cp,
            ci,
            entry_slots,
            entry_coords,
            parent,
            lp,
            li,
            rp,
            row_cols,
            row_slots,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn nnz_l(&self) -> usize {
        self.li.len()
    }

    /// Number of value slots of the analyzed pattern.
    pub fn n_slots(&self) -> usize {
        self.ci.len()
    }

    pub fn parent(&self) -> &[usize] {
        &self.parent
    }

    /// Slot of the original coordinate `(row, col)` in the value layout
    /// consumed by [`factorize_slots`](Self::factorize_slots).
    pub fn slot(&self, row: usize, col: usize) -> Option<usize> {
        if row >= self.n || col >= self.n {
            return None;
        }
        let (a, b) = (self.pinv[row], self.pinv[col]);
        let (i, j) = if a <= b { (a, b) } else { (b, a) };
        self.ci[self.cp[j]..self.cp[j + 1]]
            .binary_search(&i)
            .ok()
            .map(|k| self.cp[j] + k)
    }

    /// Slot of the `k`-th stored entry of the analyzed pattern.
    pub fn entry_slot(&self, k: usize) -> usize {
        self.entry_slots[k]
    }

    /// Numeric factorization of a matrix whose pattern is contained in the
    /// analyzed pattern.
    pub fn factorize<T: Real>(self: &Arc<Self>, q: &SymSparse<T>) -> Result<CholFactor<T>> {
        if q.dim() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: q.dim(),
            });
        }
        let mut values = vec![T::zero(); self.n_slots()];
        for (k, (r, c, v)) in q.entries().enumerate() {
            let slot = if self.entry_coords.get(k) == Some(&(r, c)) {
                self.entry_slots[k]
            } else {
                self.slot(r, c)
                    .ok_or_else(|| Error::Sparse(format!("entry ({r}, {c}) not in analyzed pattern")))?
            };
            values[slot] += v;
        }
        self.factorize_slots(&values)
    }

    /// Up-looking numeric factorization from values laid out by slot.
    pub fn factorize_slots<T: Real>(self: &Arc<Self>, values: &[T]) -> Result<CholFactor<T>> {
        let n = self.n;
        if values.len() != self.n_slots() {
            return Err(Error::DimensionMismatch {
                expected: self.n_slots(),
                got: values.len(),
            });
        }
        let mut max_diag = T::zero();
        for k in 0..n {
            let end = self.cp[k + 1];
            if end > self.cp[k] && self.ci[end - 1] == k {
                max_diag = max_diag.max(values[end - 1].abs());
            }
        }
        let tol = T::lit(PIVOT_TOL) * max_diag;

        let mut lx = vec![T::zero(); self.li.len()];
        let mut x = vec![T::zero(); n];
        let mut logdet = T::zero();
        for k in 0..n {
            for p in self.cp[k]..self.cp[k + 1] {
                x[self.ci[p]] = values[p];
            }
            let mut d = x[k];
            x[k] = T::zero();
            for p in self.rp[k]..self.rp[k + 1] {
                let i = self.row_cols[p];
                let s = self.row_slots[p];
                let lki = x[i] / lx[self.lp[i]];
                x[i] = T::zero();
                for q in self.lp[i] + 1..s {
                    x[self.li[q]] -= lx[q] * lki;
                }
                d -= lki * lki;
                lx[s] = lki;
            }
            if !(d > tol) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    column: self.perm[k],
                    pivot: d.as_f64(),
                });
            }
            let dk = d.sqrt();
            lx[self.lp[k]] = dk;
            logdet += dk.ln();
        }
        Ok(CholFactor {
            symbolic: Arc::clone(self),
            lx,
            logdet: logdet + logdet,
        })
    }
}

/// Numeric Cholesky factor sharing its symbolic structure.
#[derive(Debug, Clone)]
pub struct CholFactor<T> {
    symbolic: Arc<SymbolicCholesky>,
    lx: Vec<T>,
    logdet: T,
}

impl<T: Real> CholFactor<T> {
    pub fn dim(&self) -> usize {
        self.symbolic.n
    }

    /// `log det Q`.
    pub fn logdet(&self) -> T {
        self.logdet
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    /// `perm[new] = old`.
    pub fn permutation(&self) -> &[usize] {
        &self.symbolic.perm
    }

    pub(crate) fn col_ptr(&self) -> &[usize] {
        &self.symbolic.lp
    }

    pub(crate) fn row_idx(&self) -> &[usize] {
        &self.symbolic.li
    }

    pub(crate) fn l_values(&self) -> &[T] {
        &self.lx
    }

    /// Entry `L[i, j]` of the factor in permuted coordinates.
    pub fn l_entry(&self, i: usize, j: usize) -> T {
        let (lp, li) = (&self.symbolic.lp, &self.symbolic.li);
        match li[lp[j]..lp[j + 1]].binary_search(&i) {
            Ok(k) => self.lx[lp[j] + k],
            Err(_) => T::zero(),
        }
    }

    /// Solves `Q x = rhs`.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rhs.len(),
            });
        }
        let perm = &self.symbolic.perm;
        let mut y: Vec<T> = perm.iter().map(|&old| rhs[old]).collect();
        self.forward_in_place(&mut y);
        self.backward_in_place(&mut y);
        let mut x = vec![T::zero(); n];
        for (new, &old) in perm.iter().enumerate() {
            x[old] = y[new];
        }
        Ok(x)
    }

    /// Returns `Pᵀ L⁻ᵀ z`; for white noise `z` this is a draw from
    /// `N(0, Q⁻¹)` in the original ordering.
    pub fn sample_from_white(&self, z: &[T]) -> Result<Vec<T>> {
        let n = self.dim();
        if z.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: z.len(),
            });
        }
        let mut y = z.to_vec();
        self.backward_in_place(&mut y);
        let mut x = vec![T::zero(); n];
        for (new, &old) in self.symbolic.perm.iter().enumerate() {
            x[old] = y[new];
        }
        Ok(x)
    }

    /// `L y = b` in permuted coordinates.
    fn forward_in_place(&self, y: &mut [T]) {
        let (lp, li) = (&self.symbolic.lp, &self.symbolic.li);
        for j in 0..self.dim() {
            let yj = y[j] / self.lx[lp[j]];
            y[j] = yj;
            for p in lp[j] + 1..lp[j + 1] {
                y[li[p]] -= self.lx[p] * yj;
            }
        }
    }

    /// `Lᵀ y = b` in permuted coordinates.
    fn backward_in_place(&self, y: &mut [T]) {
        let (lp, li) = (&self.symbolic.lp, &self.symbolic.li);
        for j in (0..self.dim()).rev() {
            let mut acc = y[j];
            for p in lp[j] + 1..lp[j + 1] {
                acc -= self.lx[p] * y[li[p]];
            }
            y[j] = acc / self.lx[lp[j]];
        }
    }

    /// `P Q Pᵀ` rebuilt from the factor, returned in original coordinates
    /// as a dense matrix. Test helper for small systems.
    pub fn reconstruct_dense(&self) -> Vec<Vec<T>> {
        let n = self.dim();
        let mut l = vec![vec![T::zero(); n]; n];
        let (lp, li) = (&self.symbolic.lp, &self.symbolic.li);
        for j in 0..n {
            for p in lp[j]..lp[j + 1] {
                l[li[p]][j] = self.lx[p];
            }
        }
        let perm = &self.symbolic.perm;
        let mut out = vec![vec![T::zero(); n]; n];
        for a in 0..n {
            for b in 0..=a {
                let mut s = T::zero();
                for k in 0..=b {
                    s += l[a][k] * l[b][k];
                }
                out[perm[a]][perm[b]] = s;
                out[perm[b]][perm[a]] = s;
            }
        }
        out
    }
}

/// Orders, analyzes and factorizes `q` in one call.
pub fn factorize<T: Real>(q: &SymSparse<T>) -> Result<CholFactor<T>> {
    let symbolic = Arc::new(SymbolicCholesky::analyze(q));
    symbolic.factorize(q)
}

/// Solves `Q x = rhs` with a factor of `Q`.
pub fn solve_system<T: Real>(factor: &CholFactor<T>, rhs: &[T]) -> Result<Vec<T>> {
    factor.solve(rhs)
}
