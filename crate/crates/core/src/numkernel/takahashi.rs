//! Selected inverse on the pattern of `L` (Takahashi recursions).
//!
//! For `Q = L Lᵀ` (permuted), every entry `Σ_ij` of `Σ = Q⁻¹` with `(i, j)`
//! in the filled pattern satisfies, for `i >= j`,
//!
//! `Σ_ij = δ_ij / L_jj² − (1 / L_jj) Σ_{k > j, L_kj ≠ 0} L_kj Σ_ki`
//!
//! and the filled pattern is closed under these references, so the
//! recursion runs column by column from the last one.

use crate::scalar::Real;

use super::cholesky::CholFactor;

/// `Q⁻¹` restricted to the pattern of the factor, in permuted coordinates
/// and the factor's column layout.
#[derive(Debug, Clone)]
pub struct SelectedInverse<T> {
    values: Vec<T>,
}

impl<T: Real> SelectedInverse<T> {
    pub fn compute(f: &CholFactor<T>) -> Self {
        let n = f.dim();
        let lp = f.col_ptr();
        let li = f.row_idx();
        let lx = f.l_values();
        let mut sx = vec![T::zero(); lx.len()];

        let lookup = |sx: &[T], a: usize, b: usize| -> T {
            let (r, c) = if a >= b { (a, b) } else { (b, a) };
            let col = &li[lp[c]..lp[c + 1]];
            let k = col
                .binary_search(&r)
                .expect("filled pattern is closed under the recursion");
            sx[lp[c] + k]
        };

        for j in (0..n).rev() {
            let ljj = lx[lp[j]];
            let start = lp[j] + 1;
            let end = lp[j + 1];
            for p in (start..end).rev() {
                let i = li[p];
                let mut acc = T::zero();
                for q in start..end {
                    acc += lx[q] * lookup(&sx, li[q], i);
                }
                sx[p] = -acc / ljj;
            }
            let mut acc = T::zero();
            for q in start..end {
                acc += lx[q] * sx[q];
            }
            sx[lp[j]] = (T::one() / ljj - acc) / ljj;
        }
        Self { values: sx }
    }

    /// Diagonal of `Q⁻¹` in original coordinates, given the factor used to
    /// compute it.
    pub fn diagonal(&self, f: &CholFactor<T>) -> Vec<T> {
        let lp = f.col_ptr();
        let mut out = vec![T::zero(); f.dim()];
        for (new, &old) in f.permutation().iter().enumerate() {
            out[old] = self.values[lp[new]];
        }
        out
    }
}

/// Marginal variances `diag(Q⁻¹)` in original coordinates.
pub fn takahashi_marginal_variances<T: Real>(f: &CholFactor<T>) -> Vec<T> {
    SelectedInverse::compute(f).diagonal(f)
}
