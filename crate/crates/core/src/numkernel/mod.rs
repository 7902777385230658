//! Sparse symmetric positive-definite linear algebra: storage, fill-reducing
//! ordering, Cholesky factorization, solves and selected inversion.
//!
//! Everything here is generic over [`Real`](crate::scalar::Real) and never
//! regularizes its input; a failed pivot is reported to the caller.

mod cholesky;
mod ordering;
mod sparse;
mod takahashi;

pub use cholesky::{factorize, solve_system, CholFactor, SymbolicCholesky, PIVOT_TOL};
pub use ordering::minimum_degree;
pub use sparse::SymSparse;
pub use takahashi::{takahashi_marginal_variances, SelectedInverse};
