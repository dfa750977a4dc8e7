//! Preconditioned conjugate gradients on complex coefficient vectors with the
//! real inner product `Re Σ conj(a)·b`.

use num_complex::Complex64;

use crate::{Error, Result};

pub type Vector = Vec<Complex64>;

pub fn dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

fn axpy(alpha: f64, x: &[Complex64], y: &mut [Complex64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += xi * alpha);
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vector,
    /// `√(rᵀPr / bᵀPb)` at exit.
    pub residual: f64,
    pub iterations: usize,
}

/// Solves `K x = b` for a self-adjoint positive definite `K`.
///
/// The stopping test uses the preconditioned residual norm relative to the
/// right-hand side's. `b = 0` returns the zero vector without iterating.
pub fn pcg(
    b: &[Complex64],
    tol: f64,
    max_iter: usize,
    mut apply: impl FnMut(&[Complex64], &mut [Complex64]),
    mut precondition: impl FnMut(&[Complex64], &mut [Complex64]),
) -> Result<CgOutcome> {
    let n = b.len();
    let mut x = vec![Complex64::default(); n];
    let mut r = b.to_vec();
    let mut z = vec![Complex64::default(); n];
    precondition(&r, &mut z);
    let norm_b = dot(&r, &z);
    if norm_b == 0.0 {
        return Ok(CgOutcome {
            x,
            residual: 0.0,
            iterations: 0,
        });
    }
    let mut rz = norm_b;
    let mut p = z.clone();
    let mut kp = vec![Complex64::default(); n];
    let mut residual = 1.0;
    for it in 1..=max_iter {
        apply(&p, &mut kp);
        let pkp = dot(&p, &kp);
        if !(pkp > 0.0) {
            return Err(Error::NotConverged {
                residual,
                iterations: it,
            });
        }
        let alpha = rz / pkp;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &kp, &mut r);
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        residual = (rz_new.max(0.0) / norm_b).sqrt();
        if residual <= tol {
            return Ok(CgOutcome {
                x,
                residual,
                iterations: it,
            });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + *pi * beta);
    }
    Err(Error::NotConverged {
        residual,
        iterations: max_iter,
    })
}
