//! Dense symmetric positive-definite solves with jitter escalation, plus the
//! handful of matrix helpers the estimators share.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Relative jitters tried after a plain factorization fails. Each is scaled
/// by the mean diagonal of the system.
pub const JITTER_LADDER: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// A factorization whose smallest squared pivot falls below this fraction of
/// the largest diagonal entry is treated as failed.
const MIN_PIVOT_RATIO: f64 = 1e-13;

fn accept(llt: &Llt<f64>, max_diag: f64) -> bool {
    let l = llt.L();
    (0..l.nrows()).all(|i| l[(i, i)] * l[(i, i)] >= MIN_PIVOT_RATIO * max_diag)
}

/// Cached Cholesky factor of a symmetric positive-definite system.
#[derive(Debug)]
pub struct SpdSolver {
    llt: Llt<f64>,
    jitter: f64,
    dim: usize,
}

impl SpdSolver {
    /// Factors `system` (only the lower triangle is read). `context` names
    /// the solve in error messages.
    pub fn factor(system: MatRef<'_, f64>, context: &str) -> Result<Self> {
        let n = system.nrows();
        assert_eq!(n, system.ncols(), "system must be square");
        let max_diag = (0..n).map(|i| system[(i, i)].abs()).fold(0.0, f64::max);
        if let Ok(llt) = system.llt(Side::Lower) {
            if accept(&llt, max_diag) {
                return Ok(Self {
                    llt,
                    jitter: 0.0,
                    dim: n,
                });
            }
        }
        let scale = (0..n).map(|i| system[(i, i)].abs()).sum::<f64>() / n.max(1) as f64;
        let scale = if scale > 0.0 { scale } else { 1.0 };
        for rel in JITTER_LADDER {
            let jitter = rel * scale;
            let mut m = system.to_owned();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            let accepted = m.llt(Side::Lower).ok().filter(|l| accept(l, max_diag + jitter));
            if let Some(llt) = accepted {
                log::debug!("{context}: factorization needed jitter {jitter:e}");
                return Ok(Self { llt, jitter, dim: n });
            }
        }
        Err(Error::IllConditioned {
            context: context.to_string(),
        })
    }

    /// Factors `gram + shift·I`.
    pub fn factor_shifted(gram: &Mat<f64>, shift: f64, context: &str) -> Result<Self> {
        let mut m = gram.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
        Self::factor(m.as_ref(), context)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Diagonal jitter that was added, zero if none was needed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        self.llt.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &[f64]) -> Vec<f64> {
        let b = column(rhs);
        let x = self.llt.solve(b.as_ref());
        to_vec(x.as_ref())
    }
}

/// A vector as an `n × 1` matrix.
pub fn column(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

/// First column of a matrix as a vector.
pub fn to_vec(m: MatRef<'_, f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

/// `m · v`.
pub fn mat_vec(m: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    assert_eq!(m.ncols(), v.len());
    let mut out = vec![0.0; m.nrows()];
    for (j, &vj) in v.iter().enumerate() {
        if vj == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += m[(i, j)] * vj;
        }
    }
    out
}

/// `mᵀ · v`.
pub fn mat_t_vec(m: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    assert_eq!(m.nrows(), v.len());
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)] * v[i]).sum())
        .collect()
}

/// Row sums.
pub fn row_sums(m: MatRef<'_, f64>) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    for j in 0..m.ncols() {
        for (i, o) in out.iter_mut().enumerate() {
            *o += m[(i, j)];
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `‖A x − b‖ / ‖b‖` for a square system given explicitly.
pub fn relative_residual(a: MatRef<'_, f64>, x: &[f64], b: &[f64]) -> f64 {
    let ax = mat_vec(a, x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
    let nb = norm(b);
    if nb == 0.0 {
        norm(&r)
    } else {
        norm(&r) / nb
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: MatRef<'_, f64>) -> f64 {
    let ev = m
        .self_adjoint_eigenvalues(Side::Lower)
        .expect("eigenvalue iteration converges for symmetric input");
    ev.first().copied().unwrap_or(0.0)
}
