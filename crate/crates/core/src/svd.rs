//! Singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! The rotations act on the columns of whichever orientation of the input
//! has fewer columns, so the implicit Gram matrix is `min(m, n)` square.
//! Both the tensor-train compressor and the whole-table baseline use this
//! routine.

use crate::error::{Error, Result};
use crate::matrix::{frobenius, Matrix};

/// Sweep cap for the Jacobi iteration.
pub const MAX_SWEEPS: usize = 60;

/// Rotation threshold on the normalized column inner product.
pub const CONVERGENCE_TOL: f64 = 1e-12;

/// Thin SVD `A = U diag(s) V^T` with `min(m, n)` singular triplets.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

/// Rank-truncated SVD together with the rank that was kept.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
    pub rank: usize,
    /// Frobenius norm of the discarded singular values.
    pub discarded: f64,
}

impl Svd {
    pub fn rank_count(&self) -> usize {
        self.s.len()
    }
}

pub fn svd(a: &Matrix) -> Result<Svd> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::InvalidShape(format!(
            "cannot decompose an empty {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    if a.rows() >= a.cols() {
        jacobi_tall(a.clone())
    } else {
        let t = jacobi_tall(a.transpose())?;
        Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.rows();
    for i in 0..rows {
        let x = m.get(i, p);
        let y = m.get(i, q);
        m.set(i, p, c * x - s * y);
        m.set(i, q, s * x + c * y);
    }
}

// Requires rows >= cols.
fn jacobi_tall(mut work: Matrix) -> Result<Svd> {
    let (m, n) = (work.rows(), work.cols());
    let mut v = Matrix::identity(n);

    // Columns below this squared norm are rounding debris; rotating them
    // against each other never settles.
    let total = frobenius(work.as_slice());
    let debris = (f64::EPSILON * total).powi(2);

    let mut converged = n < 2;
    let mut residual = 0.0_f64;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        residual = 0.0;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(work.column(p), work.column(p));
                let beta = dot(work.column(q), work.column(q));
                if alpha <= debris || beta <= debris {
                    continue;
                }
                let gamma = dot(work.column(p), work.column(q));
                let off = gamma.abs() / (alpha * beta).sqrt();
                residual = residual.max(off);
                if off <= CONVERGENCE_TOL {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut work, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::NumericalFailure {
            sweeps: MAX_SWEEPS,
            residual,
        });
    }

    let norms: Vec<f64> = (0..n).map(|j| frobenius(work.column(j))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps ties in column order, which keeps results deterministic.
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let sigma_max = norms[order[0]];
    let negligible = noise_floor(sigma_max, m, n);

    let mut u = Matrix::zeros(m, n);
    let mut vs = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        // Values at rounding level are exact zeros of the input.
        s.push(if sigma > negligible { sigma } else { 0.0 });
        vs.column_mut(dst).copy_from_slice(v.column(src));
        if sigma > negligible && sigma > 0.0 {
            for (o, &w) in u.column_mut(dst).iter_mut().zip(work.column(src)) {
                *o = w / sigma;
            }
        } else {
            pending.push(dst);
        }
    }
    for j in pending {
        complete_column(&mut u, j);
    }
    Ok(Svd { u, s, v: vs })
}

/// Singular values at or below this level are rounding noise.
fn noise_floor(sigma_max: f64, rows: usize, cols: usize) -> f64 {
    sigma_max * f64::EPSILON * rows.max(cols) as f64
}

/// Fills column `j` with a unit vector orthogonal to every other nonzero
/// column of `u`.
fn complete_column(u: &mut Matrix, j: usize) {
    let m = u.rows();
    let filled: Vec<usize> = (0..u.cols())
        .filter(|&c| c != j && u.column(c).iter().any(|&x| x != 0.0))
        .collect();
    for e in 0..m {
        let mut cand = vec![0.0; m];
        cand[e] = 1.0;
        for _ in 0..2 {
            for &c in &filled {
                let proj = dot(&cand, u.column(c));
                for (x, &y) in cand.iter_mut().zip(u.column(c)) {
                    *x -= proj * y;
                }
            }
        }
        let norm = frobenius(&cand);
        if norm > 0.5 {
            for (o, x) in u.column_mut(j).iter_mut().zip(&cand) {
                *o = x / norm;
            }
            return;
        }
    }
}

/// `tails[r]` is the Frobenius norm of `s[r..]`.
pub fn tail_norms(s: &[f64]) -> Vec<f64> {
    let mut tails = vec![0.0; s.len() + 1];
    for r in (0..s.len()).rev() {
        tails[r] = frobenius(&s[r..]);
    }
    tails
}

/// Smallest rank `r <= max_rank` whose discarded tail fits in `delta`,
/// or `max_rank` (clipped to the spectrum length) when none does.
///
/// A singular value sitting exactly on the boundary is kept.
pub fn select_rank(s: &[f64], delta: f64, max_rank: usize) -> usize {
    let cap = max_rank.min(s.len()).max(1);
    let tails = tail_norms(s);
    (1..=cap).find(|&r| tails[r] <= delta).unwrap_or(cap)
}

pub fn truncated_svd(m: &Matrix, delta: f64, max_rank: usize) -> Result<TruncatedSvd> {
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::InvalidSpec(format!(
            "error budget must be >= 0, got {delta}"
        )));
    }
    if max_rank == 0 {
        return Err(Error::InvalidSpec("max_rank must be >= 1".into()));
    }
    let full = svd(m)?;
    let rank = select_rank(&full.s, delta, max_rank);
    let discarded = frobenius(&full.s[rank..]);
    let mut s = full.s;
    s.truncate(rank);
    Ok(TruncatedSvd {
        u: full.u.truncate_cols(rank),
        s,
        v: full.v.truncate_cols(rank),
        rank,
        discarded,
    })
}

impl TruncatedSvd {
    /// `U diag(s) V^T`.
    pub fn recompose(&self) -> Matrix {
        let us = self.scaled_u();
        us.matmul(&self.v.transpose())
            .expect("factor shapes agree by construction")
    }

    /// `diag(s) V^T`, the part carried forward by the TT sweep.
    pub fn s_vt(&self) -> Matrix {
        Matrix::from_fn(self.rank, self.v.rows(), |i, j| {
            self.s[i] * self.v.get(j, i)
        })
    }

    fn scaled_u(&self) -> Matrix {
        Matrix::from_fn(self.u.rows(), self.rank, |i, j| {
            self.u.get(i, j) * self.s[j]
        })
    }
}
