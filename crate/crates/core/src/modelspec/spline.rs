//! Natural cubic spline basis without intercept.
//!
//! Built the same way as R's `splines::ns`: a cubic B-spline basis on
//! `(b0,b0,b0,b0, interior.., b1,b1,b1,b1)` with the first column dropped,
//! projected onto the null space of the second-derivative constraints at
//! both boundary knots through a Householder QR (LINPACK conventions).
//! Beyond the boundary knots the basis continues linearly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalSpline {
    interior: Vec<f64>,
    boundary: [f64; 2],
    knots: Vec<f64>,
    /// Householder vectors of the QR of the constraint matrix (column major,
    /// `n_free x 2`).
    qr: Vec<Vec<f64>>,
    qraux: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(interior: &[f64], boundary: [f64; 2]) -> Result<Self> {
        if !(boundary[0] < boundary[1]) || !boundary.iter().all(|b| b.is_finite()) {
            return Err(Error::KnotOrder(format!(
                "boundary knots {boundary:?} must be finite and increasing"
            )));
        }
        for w in interior.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::KnotOrder(format!(
                    "interior knots {interior:?} must be strictly increasing"
                )));
            }
        }
        if let (Some(&lo), Some(&hi)) = (interior.first(), interior.last()) {
            if !(lo > boundary[0] && hi < boundary[1]) {
                return Err(Error::KnotOrder(format!(
                    "interior knots {interior:?} must lie inside {boundary:?}"
                )));
            }
        }
        let mut knots = vec![boundary[0]; ORDER];
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat(boundary[1]).take(ORDER));

        let n_free = knots.len() - ORDER - 1;
        // constraint rows: second derivative at each boundary, first column dropped
        let mut cols = Vec::with_capacity(2);
        for &b in &boundary {
            let d2 = bspline_basis(&knots, ORDER, b, 2);
            cols.push(d2[1..].to_vec());
        }
        debug_assert_eq!(cols[0].len(), n_free);
        let qraux = householder_qr(&mut cols);
        Ok(Self {
            interior: interior.to_vec(),
            boundary,
            knots,
            qr: cols,
            qraux,
        })
    }

    /// Number of basis columns (`#interior + 1`).
    pub fn n_basis(&self) -> usize {
        self.interior.len() + 1
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior
    }

    pub fn boundary_knots(&self) -> [f64; 2] {
        self.boundary
    }

    /// Basis row and its first derivative at `t`.
    pub fn eval(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let (raw, draw) = if t < self.boundary[0] || t > self.boundary[1] {
            let pivot = if t < self.boundary[0] {
                self.boundary[0]
            } else {
                self.boundary[1]
            };
            let v = bspline_basis(&self.knots, ORDER, pivot, 0);
            let d = bspline_basis(&self.knots, ORDER, pivot, 1);
            let dt = t - pivot;
            let raw: Vec<f64> = v.iter().zip(&d).map(|(a, b)| a + b * dt).collect();
            (raw, d)
        } else {
            (
                bspline_basis(&self.knots, ORDER, t, 0),
                bspline_basis(&self.knots, ORDER, t, 1),
            )
        };
        (self.project(&raw[1..]), self.project(&draw[1..]))
    }

    fn project(&self, row: &[f64]) -> Vec<f64> {
        let mut y = row.to_vec();
        householder_qty(&self.qr, &self.qraux, &mut y);
        y.split_off(2)
    }
}

/// Values (or `deriv`-th derivatives) of all `knots.len() - order`
/// B-splines of the given order at `x`. The last non-empty knot span is
/// treated as closed on the right.
pub(crate) fn bspline_basis(knots: &[f64], order: usize, x: f64, deriv: usize) -> Vec<f64> {
    if deriv == 0 {
        return bspline_values(knots, order, x);
    }
    let lower = bspline_basis(knots, order - 1, x, deriv - 1);
    let k = (order - 1) as f64;
    let n = knots.len() - order;
    (0..n)
        .map(|i| {
            let left = ratio(lower[i], knots[i + order - 1] - knots[i]);
            let right = ratio(lower[i + 1], knots[i + order] - knots[i + 1]);
            k * (left - right)
        })
        .collect()
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn bspline_values(knots: &[f64], order: usize, x: f64) -> Vec<f64> {
    let m = knots.len();
    let last_span = (0..m - 1).rev().find(|&i| knots[i] < knots[i + 1]);
    let mut b: Vec<f64> = (0..m - 1)
        .map(|i| {
            let inside = knots[i] <= x && x < knots[i + 1];
            let closed_end = Some(i) == last_span && x == knots[i + 1];
            if inside || closed_end {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    for k in 2..=order {
        let n = m - k;
        b = (0..n)
            .map(|i| {
                let left = ratio((x - knots[i]) * b[i], knots[i + k - 1] - knots[i]);
                let right = ratio((knots[i + k] - x) * b[i + 1], knots[i + k] - knots[i + 1]);
                left + right
            })
            .collect();
    }
    b
}

/// In-place Householder QR of the columns in `a` (LINPACK `dqrdc2`
/// conventions, no pivoting). Returns `qraux`.
fn householder_qr(a: &mut [Vec<f64>]) -> Vec<f64> {
    let p = a.len();
    let n = a[0].len();
    let mut qraux = vec![0.0; p];
    for l in 0..p.min(n) {
        if l + 1 == n {
            break;
        }
        let mut nrmxl = a[l][l..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrmxl == 0.0 {
            continue;
        }
        if a[l][l] != 0.0 {
            nrmxl = nrmxl.abs().copysign(a[l][l]);
        }
        for v in &mut a[l][l..] {
            *v /= nrmxl;
        }
        a[l][l] += 1.0;
        for j in l + 1..p {
            let t = -dot(&a[l][l..], &a[j][l..]) / a[l][l];
            let (head, tail) = a.split_at_mut(j);
            for (x, h) in tail[0][l..].iter_mut().zip(&head[l][l..]) {
                *x += t * h;
            }
        }
        qraux[l] = a[l][l];
        a[l][l] = -nrmxl;
    }
    qraux
}

/// `y <- Qᵀ y` for a factorization produced by [`householder_qr`].
fn householder_qty(a: &[Vec<f64>], qraux: &[f64], y: &mut [f64]) {
    let n = y.len();
    for j in 0..a.len().min(n - 1) {
        if qraux[j] == 0.0 {
            continue;
        }
        let mut col = a[j].clone();
        col[j] = qraux[j];
        let t = -dot(&col[j..], &y[j..]) / col[j];
        for (yi, ci) in y[j..].iter_mut().zip(&col[j..]) {
            *yi += t * ci;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Basis row and derivative row of the natural spline at `t`.
pub fn ns_basis(interior_knots: &[f64], boundary_knots: [f64; 2], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok(NaturalSpline::new(interior_knots, boundary_knots)?.eval(t))
}
