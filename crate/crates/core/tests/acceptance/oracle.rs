//! Brute-force posterior for a small joint model: one gaussian marker with
//! a random intercept, one cause whose log hazard is a per-bin constant plus
//! `φ` times the marker's current value.
//!
//! Each random intercept is integrated by adaptive Gauss–Hermite quadrature;
//! the fixed effects and baseline are profiled with a Laplace step per grid
//! point; the hyperparameters `(log τ_ε, φ)` are integrated on a dense grid.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::f64::consts::PI;

/// One bin overlapped by a subject's follow-up.
#[derive(Debug, Clone)]
pub struct Piece {
    pub bin: usize,
    pub exposure: f64,
    pub t_eval: f64,
    pub event: bool,
}

#[derive(Debug, Clone)]
pub struct Subject {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub pieces: Vec<Piece>,
}

/// Prior settings shared with the fitted model.
#[derive(Debug, Clone, Copy)]
pub struct Priors {
    pub re_var: f64,
    pub rw_precision: f64,
    pub rw_ridge: f64,
    pub fixed_sd: f64,
    pub residual_shape: f64,
    pub residual_rate: f64,
    pub phi_sd: f64,
}

#[derive(Debug, Clone)]
pub struct OraclePosterior {
    pub phi: f64,
    pub log_tau: f64,
    pub beta: [f64; 2],
    pub grid_points: usize,
}

/// Splits `(0, T]` on the cuts; full bins are evaluated at their midpoint,
/// the last piece at its own midpoint. The final bin is open to the right.
pub fn pieces(cuts: &[f64], time: f64, event: bool) -> Vec<Piece> {
    let mut out = Vec::new();
    let n = cuts.len() - 1;
    for b in 0..n {
        let lo = cuts[b];
        if lo >= time {
            break;
        }
        let upper = if b + 1 == n { f64::INFINITY } else { cuts[b + 1] };
        let hi = upper.min(time);
        let last = time <= upper;
        out.push(Piece {
            bin: b,
            exposure: hi - lo,
            t_eval: 0.5 * (lo + hi),
            event: last && event,
        });
    }
    out
}

/// Gauss–Hermite rule for weight `exp(-x²)` via the Golub–Welsch eigenproblem.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let j = DMatrix::from_fn(n, n, |r, c| {
        if r + 1 == c || c + 1 == r {
            (r.max(c) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], PI.sqrt() * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

pub struct Oracle<'a> {
    subjects: &'a [Subject],
    n_bins: usize,
    priors: Priors,
    nodes: (Vec<f64>, Vec<f64>),
    rw: DMatrix<f64>,
}

struct Terms {
    value: f64,
    db: f64,
    dbb: f64,
    dv: Vec<f64>,
}

impl<'a> Oracle<'a> {
    pub fn new(subjects: &'a [Subject], n_bins: usize, priors: Priors, n_nodes: usize) -> Self {
        let mut d = DMatrix::<f64>::zeros(n_bins - 2, n_bins);
        for r in 0..n_bins - 2 {
            d[(r, r)] = 1.0;
            d[(r, r + 1)] = -2.0;
            d[(r, r + 2)] = 1.0;
        }
        let rw = (d.transpose() * d + DMatrix::identity(n_bins, n_bins) * priors.rw_ridge) * priors.rw_precision;
        Oracle {
            subjects,
            n_bins,
            priors,
            nodes: gauss_hermite(n_nodes),
            rw,
        }
    }

    fn dim(&self) -> usize {
        2 + self.n_bins
    }

    /// Complete-data log density of one subject and its derivatives.
    fn terms(&self, s: &Subject, v: &[f64], b: f64, tau: f64, phi: f64, want_dv: bool) -> Terms {
        let mut t = Terms {
            value: 0.0,
            db: 0.0,
            dbb: 0.0,
            dv: if want_dv { vec![0.0; self.dim()] } else { Vec::new() },
        };
        for (&time, &y) in s.times.iter().zip(&s.values) {
            let r = y - v[0] - v[1] * time - b;
            t.value += 0.5 * (tau / (2.0 * PI)).ln() - 0.5 * tau * r * r;
            t.db += tau * r;
            t.dbb -= tau;
            if want_dv {
                t.dv[0] += tau * r;
                t.dv[1] += tau * r * time;
            }
        }
        for p in &s.pieces {
            let y = f64::from(u8::from(p.event));
            let eta = v[2 + p.bin] + phi * (v[0] + v[1] * p.t_eval + b);
            let mu = p.exposure * eta.exp();
            t.value += y * eta - mu;
            t.db += phi * (y - mu);
            t.dbb -= phi * phi * mu;
            if want_dv {
                t.dv[0] += phi * (y - mu);
                t.dv[1] += phi * p.t_eval * (y - mu);
                t.dv[2 + p.bin] += y - mu;
            }
        }
        let s2 = self.priors.re_var;
        t.value += -0.5 * b * b / s2 - 0.5 * (2.0 * PI * s2).ln();
        t.db -= b / s2;
        t.dbb -= 1.0 / s2;
        t
    }

    /// `log ∫ p(y_i, b | v) db` and its gradient in `v`.
    fn subject_integral(&self, s: &Subject, v: &[f64], tau: f64, phi: f64) -> (f64, Vec<f64>) {
        let mut b = 0.0;
        for _ in 0..100 {
            let t = self.terms(s, v, b, tau, phi, false);
            let step = -t.db / t.dbb;
            b += step;
            if step.abs() < 1e-12 {
                break;
            }
        }
        let curv = -self.terms(s, v, b, tau, phi, false).dbb;
        let scale = std::f64::consts::SQRT_2 / curv.sqrt();
        let (x, w) = &self.nodes;
        let evals: Vec<(f64, Vec<f64>)> = x
            .iter()
            .zip(w)
            .map(|(&xk, &wk)| {
                let t = self.terms(s, v, b + scale * xk, tau, phi, true);
                (wk.ln() + xk * xk + t.value, t.dv)
            })
            .collect();
        let top = evals.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = evals.iter().map(|e| (e.0 - top).exp()).sum();
        let mut grad = vec![0.0; self.dim()];
        for (l, dv) in &evals {
            let p = (l - top).exp() / total;
            for (g, d) in grad.iter_mut().zip(dv) {
                *g += p * d;
            }
        }
        (scale.ln() + top + total.ln(), grad)
    }

    /// Log density of `(y, v)` with the random intercepts integrated out.
    fn objective(&self, v: &[f64], tau: f64, phi: f64) -> (f64, Vec<f64>) {
        let sd2 = self.priors.fixed_sd.powi(2);
        let alpha = DVector::from_column_slice(&v[2..]);
        let qa = &self.rw * &alpha;
        let mut f = -0.5 * (v[0] * v[0] + v[1] * v[1]) / sd2 - 0.5 * alpha.dot(&qa);
        let mut g = vec![0.0; self.dim()];
        g[0] = -v[0] / sd2;
        g[1] = -v[1] / sd2;
        for k in 0..self.n_bins {
            g[2 + k] = -qa[k];
        }
        for s in self.subjects {
            let (li, gi) = self.subject_integral(s, v, tau, phi);
            f += li;
            for (a, b) in g.iter_mut().zip(gi) {
                *a += b;
            }
        }
        (f, g)
    }

    fn hessian(&self, v: &[f64], tau: f64, phi: f64) -> DMatrix<f64> {
        let n = self.dim();
        let h = 1e-5;
        let mut hm = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut up = v.to_vec();
            let mut dn = v.to_vec();
            up[j] += h;
            dn[j] -= h;
            let (_, gu) = self.objective(&up, tau, phi);
            let (_, gd) = self.objective(&dn, tau, phi);
            for i in 0..n {
                hm[(i, j)] = (gu[i] - gd[i]) / (2.0 * h);
            }
        }
        0.5 * (&hm + hm.transpose())
    }

    /// Laplace step over `v` at fixed hyperparameters: returns the mode, the
    /// log of the approximate integral and whether Newton converged.
    fn profile(&self, start: &[f64], tau: f64, phi: f64) -> Option<(Vec<f64>, f64)> {
        let mut v = start.to_vec();
        let (mut f, mut g) = self.objective(&v, tau, phi);
        for _ in 0..100 {
            let neg_h = -self.hessian(&v, tau, phi);
            let chol = neg_h.clone().cholesky()?;
            let step = chol.solve(&DVector::from_vec(g.clone()));
            let mut scale = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = v.iter().zip(step.iter()).map(|(a, s)| a + scale * s).collect();
                let (ft, gt) = self.objective(&trial, tau, phi);
                if ft.is_finite() && ft >= f - 1e-10 {
                    accepted = Some((trial, ft, gt));
                    break;
                }
                scale *= 0.5;
            }
            let (trial, ft, gt) = accepted?;
            let moved = step.iter().map(|s| (scale * s).abs()).fold(0.0, f64::max);
            v = trial;
            f = ft;
            g = gt;
            if moved < 1e-9 {
                let neg_h = -self.hessian(&v, tau, phi);
                let logdet: f64 = neg_h.cholesky()?.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
                let d = self.dim() as f64;
                return Some((v, f + 0.5 * d * (2.0 * PI).ln() - 0.5 * logdet));
            }
        }
        None
    }

    /// Log prior of `(log τ_ε, φ)` in those coordinates.
    fn log_prior(&self, log_tau: f64, phi: f64) -> f64 {
        let p = self.priors;
        let tau = log_tau.exp();
        let gamma = p.residual_shape * p.residual_rate.ln() - statrs::function::gamma::ln_gamma(p.residual_shape)
            + (p.residual_shape - 1.0) * tau.ln()
            - p.residual_rate * tau;
        let normal = -0.5 * (phi / p.phi_sd).powi(2) - (p.phi_sd * (2.0 * PI).sqrt()).ln();
        gamma + log_tau + normal
    }

    fn evaluate_grid(&self, lt: &[f64], ph: &[f64], warm: &mut Vec<f64>) -> Vec<(f64, f64, f64, Vec<f64>)> {
        let mut out = Vec::with_capacity(lt.len() * ph.len());
        for (r, &a) in lt.iter().enumerate() {
            // serpentine order keeps the warm start close
            let row: Vec<f64> = if r % 2 == 0 { ph.to_vec() } else { ph.iter().rev().copied().collect() };
            for b in row {
                if let Some((v, lap)) = self.profile(warm, a.exp(), b) {
                    *warm = v.clone();
                    out.push((a, b, self.log_prior(a, b) + lap, v));
                }
            }
        }
        out
    }

    /// Grid posterior moments: a coarse scan locates the mode, a local grid
    /// estimates the spread, and a final grid spanning ±6 sd gives the means.
    pub fn posterior(&self) -> OraclePosterior {
        let mut warm = vec![0.0; self.dim()];
        let span = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
        };
        let coarse = self.evaluate_grid(&span(-1.0, 4.0, 26), &span(-1.5, 2.5, 41), &mut warm);
        let best = coarse.iter().max_by(|a, b| a.2.total_cmp(&b.2)).expect("non-empty grid");
        let (c_lt, c_ph) = (best.0, best.1);
        warm = best.3.clone();
        let local = self.evaluate_grid(&span(c_lt - 0.6, c_lt + 0.6, 21), &span(c_ph - 0.3, c_ph + 0.3, 21), &mut warm);
        let m = moments(&local);
        let (sd_lt, sd_ph) = (m.var_lt.sqrt(), m.var_ph.sqrt());
        let fine = self.evaluate_grid(
            &span(m.lt - 6.0 * sd_lt, m.lt + 6.0 * sd_lt, 41),
            &span(m.ph - 6.0 * sd_ph, m.ph + 6.0 * sd_ph, 41),
            &mut warm,
        );
        let f = moments(&fine);
        OraclePosterior {
            phi: f.ph,
            log_tau: f.lt,
            beta: f.beta,
            grid_points: coarse.len() + local.len() + fine.len(),
        }
    }
}

struct Moments {
    lt: f64,
    ph: f64,
    var_lt: f64,
    var_ph: f64,
    beta: [f64; 2],
}

fn moments(grid: &[(f64, f64, f64, Vec<f64>)]) -> Moments {
    let top = grid.iter().map(|g| g.2).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = grid.iter().map(|g| (g.2 - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let mean = |f: &dyn Fn(&(f64, f64, f64, Vec<f64>)) -> f64| -> f64 {
        grid.iter().zip(&w).map(|(g, wi)| wi * f(g)).sum::<f64>() / total
    };
    let lt = mean(&|g| g.0);
    let ph = mean(&|g| g.1);
    Moments {
        lt,
        ph,
        var_lt: mean(&|g| (g.0 - lt).powi(2)),
        var_ph: mean(&|g| (g.1 - ph).powi(2)),
        beta: [mean(&|g| g.3[0]), mean(&|g| g.3[1])],
    }
}
