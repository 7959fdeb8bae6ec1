//! Smallest eigenpairs of the pencil `Ãu = λMu`.
//!
//! With lumped (diagonal) `D` the problem is reduced exactly to the
//! symmetric operator `D^{-1/2} Ã D^{-1/2}`. When Ã is cached densely that
//! matrix is diagonalized directly; otherwise a Lanczos iteration with full
//! reorthogonalization finds one eigenpair per run and locks it, so that
//! degenerate eigenvalues are recovered one copy at a time.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::measure::MassMatrix;
use crate::operator::SchurOperator;
use crate::sparse::{dot, norm2};

pub const DEFAULT_EIG_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassKind {
    Lumped,
    Consistent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Unit M-norm, largest-magnitude entry positive.
    pub vector: Vec<f64>,
    /// `‖Ãu − λMu‖ / ‖Ãu‖`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSettings {
    pub tol: f64,
    pub seed: u64,
}

impl Default for EigenSettings {
    fn default() -> Self {
        Self {
            tol: DEFAULT_EIG_TOL,
            seed: 0,
        }
    }
}

pub fn eigen_smallest(
    op: &SchurOperator,
    mass: &MassMatrix,
    k: usize,
    which: MassKind,
    settings: &EigenSettings,
) -> Result<Vec<EigenPair>> {
    let n = op.dim();
    if k > n {
        return Err(Error::TooManyRequested {
            requested: k,
            available: n,
        });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let raw = match which {
        MassKind::Lumped => lumped_pairs(op, mass, k, settings)?,
        MassKind::Consistent => consistent_pairs(op, mass, k)?,
    };

    let mut pairs = Vec::with_capacity(k);
    for (value, mut vector) in raw {
        normalize_sign(&mut vector);
        let au = op.apply_form(&vector)?;
        let mu = match which {
            MassKind::Lumped => vector.iter().zip(mass.lumped()).map(|(u, m)| u * m).collect(),
            MassKind::Consistent => mass.consistent().mul_vec(&vector),
        };
        let r: Vec<f64> = au.iter().zip(&mu).map(|(a, m)| a - value * m).collect();
        let residual = norm2(&r) / norm2(&au).max(f64::MIN_POSITIVE);
        pairs.push(EigenPair {
            value,
            vector,
            residual,
        });
    }
    Ok(pairs)
}

fn normalize_sign(v: &mut [f64]) {
    let pivot = v
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0f64), |best, (i, x)| if x.abs() > best.1.abs() { (i, x) } else { best });
    if pivot.1 < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn smallest_from_dense(b: DMatrix<f64>, k: usize) -> Vec<(f64, DVector<f64>)> {
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    order
        .into_iter()
        .take(k)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).into_owned()))
        .collect()
}

fn lumped_pairs(
    op: &SchurOperator,
    mass: &MassMatrix,
    k: usize,
    settings: &EigenSettings,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let inv_sqrt: Vec<f64> = mass.lumped().iter().map(|m| 1.0 / m.sqrt()).collect();
    let back = |w: &[f64]| -> Vec<f64> { w.iter().zip(&inv_sqrt).map(|(a, s)| a * s).collect() };

    if let Some(dense) = op.dense() {
        let n = op.dim();
        let b = DMatrix::from_fn(n, n, |r, c| inv_sqrt[r] * dense.matrix[(r, c)] * inv_sqrt[c]);
        return Ok(smallest_from_dense(b, k)
            .into_iter()
            .map(|(l, w)| (l, back(w.as_slice())))
            .collect());
    }

    let apply = |w: &[f64]| -> Result<Vec<f64>> {
        let u = back(w);
        let au = op.apply_form(&u)?;
        Ok(au.iter().zip(&inv_sqrt).map(|(a, s)| a * s).collect())
    };
    let pairs = lanczos_smallest(op.dim(), k, apply, settings.tol * 1e-2, settings.seed)?;
    Ok(pairs.into_iter().map(|(l, w)| (l, back(&w))).collect())
}

fn consistent_pairs(
    op: &SchurOperator,
    mass: &MassMatrix,
    k: usize,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let a = match op.dense() {
        Some(d) => d.matrix.clone(),
        None => op.assemble_dense_schur()?.matrix,
    };
    let m = mass.consistent().to_dense();
    let chol = m.cholesky().ok_or_else(|| {
        Error::EigenFailure("consistent mass matrix is not positive definite".into())
    })?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::EigenFailure("singular Cholesky factor".into()))?;
    let c = &l_inv * a * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let lt = l.transpose();
    smallest_from_dense(c, k)
        .into_iter()
        .map(|(lambda, w)| {
            let u = lt
                .solve_upper_triangular(&w)
                .ok_or_else(|| Error::EigenFailure("triangular solve failed".into()))?;
            Ok((lambda, u.as_slice().to_vec()))
        })
        .collect()
}

/// Smallest `k` eigenpairs of a symmetric positive definite operator on
/// `R^n`, by repeated Lanczos runs with locking.
pub fn lanczos_smallest<F>(n: usize, k: usize, apply: F, tol: f64, seed: u64) -> Result<Vec<(f64, Vec<f64>)>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut locked: Vec<(f64, Vec<f64>)> = Vec::with_capacity(k);
    while locked.len() < k {
        let mut found = None;
        for attempt in 0..3 {
            if let Some(pair) = lanczos_run(n, &locked, &apply, tol, &mut rng)? {
                found = Some(pair);
                break;
            }
            log::warn!("lanczos breakdown, restarting (attempt {})", attempt + 1);
        }
        // `iterations` counts the restarts here.
        let pair = found.ok_or_else(|| Error::SolverDiverged {
            iterations: 3,
            relres: f64::INFINITY,
            context: Some(format!(
                "Lanczos broke down on every restart after locking {} eigenpairs",
                locked.len()
            )),
        })?;
        locked.push(pair);
    }
    locked.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(locked)
}

fn orthogonalize(w: &mut [f64], basis: impl Iterator<Item = impl AsRef<[f64]>> + Clone) {
    for _ in 0..2 {
        for q in basis.clone() {
            let q = q.as_ref();
            let c = dot(w, q);
            for (wi, qi) in w.iter_mut().zip(q) {
                *wi -= c * qi;
            }
        }
    }
}

/// One Lanczos run on the complement of the locked vectors. Returns the
/// converged smallest Ritz pair, or `None` on premature breakdown.
fn lanczos_run<F>(
    n: usize,
    locked: &[(f64, Vec<f64>)],
    apply: &F,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Option<(f64, Vec<f64>)>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let remaining = n - locked.len();
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    orthogonalize(&mut v, locked.iter().map(|p| &p.1));
    let nv = norm2(&v);
    if nv < 1e-300 {
        return Ok(None);
    }
    v.iter_mut().for_each(|x| *x /= nv);

    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut scale: f64 = 0.0;

    for j in 0..remaining {
        let mut w = apply(&basis[j])?;
        let alpha = dot(&w, &basis[j]);
        for (wi, qi) in w.iter_mut().zip(&basis[j]) {
            *wi -= alpha * qi;
        }
        if j > 0 {
            let b = betas[j - 1];
            for (wi, qi) in w.iter_mut().zip(&basis[j - 1]) {
                *wi -= b * qi;
            }
        }
        orthogonalize(&mut w, locked.iter().map(|p| &p.1).chain(basis.iter()));
        let beta = norm2(&w);
        alphas.push(alpha);
        scale = scale.max(alpha.abs() + beta);

        let m = j + 1;
        let exhausted = m == remaining;
        let breakdown = beta <= 1e-13 * scale;
        if exhausted || breakdown || m % 10 == 0 {
            let t = DMatrix::from_fn(m, m, |r, c| {
                if r == c {
                    alphas[r]
                } else if r + 1 == c {
                    betas[r]
                } else if c + 1 == r {
                    betas[c]
                } else {
                    0.0
                }
            });
            let (theta, y) = smallest_from_dense(t, 1).remove(0);
            let estimate = beta * y[m - 1].abs();
            let converged = estimate <= tol * theta.abs().max(1e-300);
            if converged || exhausted || breakdown {
                if breakdown && !exhausted && !converged {
                    return Ok(None);
                }
                let mut ritz = vec![0.0; n];
                for (q, &c) in basis.iter().zip(y.iter()) {
                    for (r, qi) in ritz.iter_mut().zip(q) {
                        *r += c * qi;
                    }
                }
                orthogonalize(&mut ritz, locked.iter().map(|p| &p.1));
                let nr = norm2(&ritz);
                ritz.iter_mut().for_each(|x| *x /= nr);
                log::debug!("lanczos locked theta={theta:e} steps={m} estimate={estimate:e}");
                return Ok(Some((theta, ritz)));
            }
        }
        betas.push(beta);
        basis.push(w.into_iter().map(|x| x / beta).collect());
    }
    Ok(None)
}
