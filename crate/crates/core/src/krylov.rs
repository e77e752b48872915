//! Restarted GMRES for matrix-free operators, and a dense LU oracle.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::grid::{dot, norm2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KrylovError {
    #[error("dimension mismatch: operator has dim {op}, vector has length {vec}")]
    DimensionMismatch { op: usize, vec: usize },
    #[error("invalid GMRES option: {0}")]
    InvalidOption(&'static str),
    #[error("dense solve refused: dim {dim} exceeds cap {cap}")]
    TooLarge { dim: usize, cap: usize },
    #[error("matrix is singular to working precision")]
    Singular,
}

/// A square linear map applied without assembling a matrix.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// `y = A x`; `y` is overwritten.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Wraps a closure as a [`LinearOperator`].
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnOperator { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

/// The identity map; the only preconditioner shipped.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresOptions {
    /// Stop once `||b - A x|| <= tol_rel ||b||`.
    pub tol_rel: f64,
    /// Krylov subspace dimension before restarting.
    pub restart: usize,
    /// Cap on total operator applications inside Arnoldi.
    pub max_iters: usize,
}

impl GmresOptions {
    fn validate(&self) -> Result<(), KrylovError> {
        if !(self.tol_rel >= 0.0 && self.tol_rel < 1.0) {
            return Err(KrylovError::InvalidOption("tol_rel must lie in [0, 1)"));
        }
        if self.restart == 0 {
            return Err(KrylovError::InvalidOption("restart must be positive"));
        }
        if self.max_iters == 0 {
            return Err(KrylovError::InvalidOption("max_iters must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovOutcome {
    pub solution: Vec<f64>,
    /// True relative residual `||b - A x|| / ||b||` of `solution`.
    pub relative_residual: f64,
    /// Operator applications spent in Arnoldi.
    pub iterations: usize,
    pub converged: bool,
    /// Least-squares residual estimate after every inner iteration,
    /// relative to `||b||`.
    pub residual_history: Vec<f64>,
    /// Bytes allocated for the Krylov basis: one restart cycle of
    /// `min(restart, dim, max_iters) + 1` vectors.
    pub peak_basis_bytes: usize,
}

/// Restarted GMRES without preconditioning.
pub fn gmres<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    x0: &[f64],
    opts: &GmresOptions,
) -> Result<KrylovOutcome, KrylovError> {
    gmres_preconditioned(op, &Identity(op.dim()), b, x0, opts)
}

/// Restarted GMRES with right preconditioning: solves `A M⁻¹ u = b`, `x = M⁻¹ u`,
/// where `precond` applies `M⁻¹`. The minimized quantity stays the true residual.
pub fn gmres_preconditioned<A, M>(
    op: &A,
    precond: &M,
    b: &[f64],
    x0: &[f64],
    opts: &GmresOptions,
) -> Result<KrylovOutcome, KrylovError>
where
    A: LinearOperator + ?Sized,
    M: LinearOperator + ?Sized,
{
    let n = op.dim();
    for len in [b.len(), x0.len(), precond.dim()] {
        if len != n {
            return Err(KrylovError::DimensionMismatch { op: n, vec: len });
        }
    }
    opts.validate()?;

    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(KrylovOutcome {
            solution: vec![0.0; n],
            relative_residual: 0.0,
            iterations: 0,
            converged: true,
            residual_history: Vec::new(),
            peak_basis_bytes: 0,
        });
    }
    let target = opts.tol_rel * bnorm;
    let restart = opts.restart.min(n);

    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    let true_residual = |x: &[f64], r: &mut [f64]| {
        op.apply(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        norm2(r)
    };

    let mut beta = true_residual(&x, &mut r);
    let mut total = 0usize;
    let mut history = Vec::new();

    // One cycle's basis, stored flat and reused across restarts.
    let cycle = restart.min(opts.max_iters);
    let mut basis = vec![0.0; (cycle + 1) * n];
    let span = |i: usize| i * n..(i + 1) * n;

    // Hessenberg columns, each of length restart + 1.
    let mut hess: Vec<Vec<f64>> = Vec::with_capacity(restart);
    let mut cs = vec![0.0; restart];
    let mut sn = vec![0.0; restart];
    let mut g = vec![0.0; restart + 1];

    while beta > target && total < opts.max_iters {
        for (v, ri) in basis[..n].iter_mut().zip(&r) {
            *v = ri / beta;
        }
        hess.clear();
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;

        let mut cols = 0;
        while cols < restart && total < opts.max_iters {
            let j = cols;
            precond.apply(&basis[span(j)], &mut tmp);
            op.apply(&tmp, &mut w);
            total += 1;

            // Modified Gram-Schmidt; each update is fused with the next inner product.
            let mut col = vec![0.0; restart + 1];
            let w_norm0 = norm2(&w);
            let mut hij = dot(&w, &basis[..n]);
            for i in 0..=j {
                col[i] = hij;
                let next = (i < j).then(|| &basis[span(i + 1)]);
                hij = subtract_then_dot(&mut w, hij, &basis[span(i)], next);
            }
            let h_next = hij.sqrt();
            col[j + 1] = h_next;

            for i in 0..j {
                let (a, c) = (col[i], col[i + 1]);
                col[i] = cs[i] * a + sn[i] * c;
                col[i + 1] = -sn[i] * a + cs[i] * c;
            }
            let (a, c) = (col[j], col[j + 1]);
            let rho = a.hypot(c);
            let (cj, sj) = if rho == 0.0 { (1.0, 0.0) } else { (a / rho, c / rho) };
            cs[j] = cj;
            sn[j] = sj;
            col[j] = rho;
            col[j + 1] = 0.0;
            g[j + 1] = -sj * g[j];
            g[j] *= cj;
            hess.push(col);
            cols += 1;

            let estimate = g[j + 1].abs();
            history.push(estimate / bnorm);

            let breakdown = h_next <= f64::EPSILON * w_norm0;
            if breakdown || estimate <= target || cols == cycle {
                break;
            }
            let range = span(j + 1);
            for (v, wi) in basis[range].iter_mut().zip(&w) {
                *v = wi / h_next;
            }
        }

        // Back substitution on the triangularized Hessenberg matrix.
        let mut coef = vec![0.0; cols];
        for i in (0..cols).rev() {
            let mut s = g[i];
            for k in i + 1..cols {
                s -= hess[k][i] * coef[k];
            }
            coef[i] = if hess[i][i] != 0.0 { s / hess[i][i] } else { 0.0 };
        }
        tmp.iter_mut().for_each(|v| *v = 0.0);
        for (c, v) in coef.iter().zip(basis.chunks_exact(n)) {
            for (t, vk) in tmp.iter_mut().zip(v) {
                *t += c * vk;
            }
        }
        precond.apply(&tmp, &mut w);
        for (xi, wi) in x.iter_mut().zip(&w) {
            *xi += wi;
        }
        beta = true_residual(&x, &mut r);
    }

    Ok(KrylovOutcome {
        solution: x,
        relative_residual: beta / bnorm,
        iterations: total,
        converged: beta <= target,
        residual_history: history,
        peak_basis_bytes: basis.len() * std::mem::size_of::<f64>(),
    })
}

/// `w -= h v`, then `<w, next>` (or `<w, w>` when `next` is `None`) in the
/// same pass. Same lane order as [`dot`].
fn subtract_then_dot(w: &mut [f64], h: f64, v: &[f64], next: Option<&[f64]>) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut tail = 0.0;
    let mut wc = w.chunks_exact_mut(4);
    let mut vc = v.chunks_exact(4);
    match next {
        Some(u) => {
            let mut uc = u.chunks_exact(4);
            for ((wk, vk), uk) in (&mut wc).zip(&mut vc).zip(&mut uc) {
                for l in 0..4 {
                    wk[l] -= h * vk[l];
                    acc[l] += wk[l] * uk[l];
                }
            }
            for ((wk, vk), uk) in wc.into_remainder().iter_mut().zip(vc.remainder()).zip(uc.remainder()) {
                *wk -= h * vk;
                tail += *wk * uk;
            }
        }
        None => {
            for (wk, vk) in (&mut wc).zip(&mut vc) {
                for l in 0..4 {
                    wk[l] -= h * vk[l];
                    acc[l] += wk[l] * wk[l];
                }
            }
            for (wk, vk) in wc.into_remainder().iter_mut().zip(vc.remainder()) {
                *wk -= h * vk;
                tail += *wk * *wk;
            }
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Default dimension cap for [`dense_solve`].
pub const DENSE_SOLVE_CAP: usize = 2048;

/// Assembles the operator column by column from unit vectors.
pub fn materialize<A: LinearOperator + ?Sized>(op: &A) -> DMatrix<f64> {
    let n = op.dim();
    let mut mat = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        e[j] = 0.0;
        mat.column_mut(j).copy_from_slice(&col);
    }
    mat
}

/// Direct solve by dense LU with partial pivoting. Oracle for small systems only.
pub fn dense_solve<A: LinearOperator + ?Sized>(op: &A, b: &[f64]) -> Result<Vec<f64>, KrylovError> {
    dense_solve_with_cap(op, b, DENSE_SOLVE_CAP)
}

pub fn dense_solve_with_cap<A: LinearOperator + ?Sized>(
    op: &A,
    b: &[f64],
    cap: usize,
) -> Result<Vec<f64>, KrylovError> {
    let n = op.dim();
    if n > cap {
        return Err(KrylovError::TooLarge { dim: n, cap });
    }
    if b.len() != n {
        return Err(KrylovError::DimensionMismatch { op: n, vec: b.len() });
    }
    let lu = materialize(op).lu();
    let u = lu.u();
    let diag = u.diagonal();
    let dmax = diag.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let dmin = diag.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if n > 0 && (dmax == 0.0 || dmin <= f64::EPSILON * n as f64 * dmax) {
        return Err(KrylovError::Singular);
    }
    let x = lu
        .solve(&DVector::from_column_slice(b))
        .ok_or(KrylovError::Singular)?;
    Ok(x.as_slice().to_vec())
}
