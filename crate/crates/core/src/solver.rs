//! Jacobi-preconditioned conjugate gradients for symmetric positive
//! definite operators.

use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, norm2, CsrMatrix};

pub const DEFAULT_TOL: f64 = 1e-12;

/// A symmetric linear map applied matrix-free.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// `y = A x`.
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()>;

    /// Positive diagonal used as the Jacobi preconditioner.
    fn preconditioner(&self) -> Vec<f64> {
        vec![1.0; self.dim()]
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.mul_vec_into(x, y);
        Ok(())
    }

    fn preconditioner(&self) -> Vec<f64> {
        self.diagonal()
    }
}

/// Identity on `R^n`.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        y.copy_from_slice(x);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relres: f64,
}

/// Solves `A x = rhs` to relative residual `tol`, starting from zero.
pub fn solve_spd<A: LinearOperator + ?Sized>(
    op: &A,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = op.dim();
    assert_eq!(rhs.len(), n, "rhs length does not match operator");
    let rhs_norm = norm2(rhs);
    let mut x = vec![0.0; n];
    if rhs_norm == 0.0 {
        log::debug!("solve iters=0 relres=0");
        return Ok(CgOutcome {
            x,
            iterations: 0,
            relres: 0.0,
        });
    }
    let inv_diag: Vec<f64> = op
        .preconditioner()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut relres = 1.0;

    for it in 1..=max_iter {
        op.apply(&p, &mut ap)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            // Loss of positive definiteness (or an exactly solved system).
            relres = norm2(&r) / rhs_norm;
            if relres <= tol {
                log::debug!("solve iters={} relres={relres:e}", it - 1);
                return Ok(CgOutcome {
                    x,
                    iterations: it - 1,
                    relres,
                });
            }
            return Err(Error::SolverDiverged {
                iterations: it,
                relres,
                context: Some("operator not positive definite".into()),
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        relres = norm2(&r) / rhs_norm;
        if relres <= tol {
            log::debug!("solve iters={it} relres={relres:e}");
            return Ok(CgOutcome {
                x,
                iterations: it,
                relres,
            });
        }
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&inv_diag) {
            *zi = ri * di;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    log::debug!("solve iters={max_iter} relres={relres:e} diverged");
    Err(Error::SolverDiverged {
        iterations: max_iter,
        relres,
        context: None,
    })
}
