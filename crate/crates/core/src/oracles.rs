//! Independent reference computations: closed forms and dense solvers.
//!
//! Nothing here shares assembly code with the spectral solvers. The dense
//! oracles build the Galerkin matrix from a real cosine/sine basis by plain
//! quadrature loops and factor it directly.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::Serialize;

use crate::material::{MaterialField, ReducedField};
use crate::quadform::{QuadForm2, QuadraticForm, Sym2, Sym3};
use crate::quadrature::gauss_legendre;
use crate::{Error, Result};

/// Largest dense plate cell system (`N = 4` fits).
pub const DENSE_DIM_CAP: usize = 300;

/// Largest dense γ cell system.
pub const GAMMA_DENSE_DIM_CAP: usize = 800;

/// One oracle-versus-solver comparison. Gaps are recorded, never judged here.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub name: String,
    pub inputs: String,
    pub oracle: f64,
    pub solver: f64,
    pub abs_gap: f64,
    pub rel_gap: f64,
}

impl OracleReport {
    pub fn new(name: impl Into<String>, inputs: impl Into<String>, oracle: f64, solver: f64) -> Self {
        let abs_gap = (oracle - solver).abs();
        let rel_gap = if oracle != 0.0 {
            abs_gap / oracle.abs()
        } else {
            abs_gap
        };
        OracleReport {
            name: name.into(),
            inputs: inputs.into(),
            oracle,
            solver,
            abs_gap,
            rel_gap,
        }
    }
}

fn check_moduli(mu: f64, lambda: f64) -> Result<()> {
    if !(mu > 0.0) {
        return Err(Error::InvalidModuli(format!("non-positive shear modulus mu = {mu}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidModuli(format!("negative lambda = {lambda}")));
    }
    Ok(())
}

/// Plane-stress λ̃ from the one-variable minimization over `d₃₃`:
/// `λ̃/2 = min_d μd² + (λ/2)(1 + d)²`, attained at `d = -λ/(2μ + λ)`.
pub fn plane_stress_lambda(mu: f64, lambda: f64) -> Result<f64> {
    check_moduli(mu, lambda)?;
    let d = -lambda / (2.0 * mu + lambda);
    Ok(2.0 * (mu * d * d + 0.5 * lambda * (1.0 + d) * (1.0 + d)))
}

/// Plate reduction of the isotropic density in closed form,
/// `Q₂(A) = μ|A|² + (λ̃/2)(tr A)²`.
pub fn plane_stress(mu: f64, lambda: f64) -> Result<QuadForm2> {
    let lt = plane_stress_lambda(mu, lambda)?;
    let t = Vector3::new(1.0, 1.0, 0.0);
    QuadForm2::new(Matrix3::identity() * mu + t * t.transpose() * (0.5 * lt))
}

/// Derived versus printed plane-stress constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaTildeAudit {
    pub mu: f64,
    pub lambda: f64,
    /// `2μλ/(2μ+λ)`, from the minimization.
    pub derived: f64,
    /// `μλ/(2μ+λ)`.
    pub printed: f64,
    /// `derived / printed` (2 whenever λ > 0).
    pub ratio: f64,
}

pub fn plane_stress_audit(mu: f64, lambda: f64) -> Result<LambdaTildeAudit> {
    let derived = plane_stress_lambda(mu, lambda)?;
    let printed = mu * lambda / (2.0 * mu + lambda);
    Ok(LambdaTildeAudit {
        mu,
        lambda,
        derived,
        printed,
        ratio: if printed != 0.0 { derived / printed } else { f64::NAN },
    })
}

/// Which constants to use in the laminate closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LayeredConstants {
    /// Constants re-derived from the 1D Lagrange-multiplier solution.
    Verified,
    /// `c₂ = ⟨λ̃/2⟩_H + ⟨μ̃⟩` and the long `c₃` expression, as printed.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayeredCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub mean_mu: f64,
}

fn mean(w: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    w.iter().enumerate().map(|(i, wi)| wi * f(i)).sum()
}

/// Harmonic mean; zero if any sample vanishes.
fn harmonic(w: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    if (0..w.len()).any(|i| f(i) == 0.0) {
        return 0.0;
    }
    1.0 / mean(w, |i| 1.0 / f(i))
}

/// Laminate coefficients from samples of the 3D moduli `μ(y₁)`, `λ(y₁)` at
/// quadrature points with weights `w` (summing to one).
pub fn layered_coefficients(
    mu: &[f64],
    lambda: &[f64],
    w: &[f64],
    constants: LayeredConstants,
) -> Result<LayeredCoefficients> {
    if mu.len() != w.len() || lambda.len() != w.len() || w.is_empty() {
        return Err(Error::InvalidProblem("sample arrays differ in length".into()));
    }
    let lt = mu
        .iter()
        .zip(lambda)
        .map(|(&m, &l)| plane_stress_lambda(m, l))
        .collect::<Result<Vec<_>>>()?;
    let a = |i: usize| mu[i] + 0.5 * lt[i];
    let b = |i: usize| 0.5 * lt[i];
    let mean_mu = mean(w, |i| mu[i]);
    let c1 = harmonic(w, a);
    let (c2, c3) = match constants {
        LayeredConstants::Verified => {
            let b_over_a = mean(w, |i| b(i) / a(i));
            let c2 = mean_mu + mean(w, b) - mean(w, |i| b(i) * b(i) / a(i)) + c1 * b_over_a * b_over_a;
            (c2, 2.0 * c1 * b_over_a)
        }
        LayeredConstants::Printed => {
            let bh = harmonic(w, b);
            let mu_over_a = mean(w, |i| mu[i] / a(i));
            let c3 = c1 + bh + mean(w, |i| mu[i] * mu[i] / a(i)) - mu_over_a * mu_over_a * c1 - mean_mu;
            (bh + mean_mu, c3)
        }
    };
    Ok(LayeredCoefficients { c1, c2, c3, mean_mu })
}

/// `(1/12)(c₁A₁₁² + c₂A₂₂² + 2⟨μ̃⟩A₁₂² + c₃A₁₁A₂₂)` for an isotropic laminate.
pub fn layered_closed_form(
    mu: &[f64],
    lambda: &[f64],
    w: &[f64],
    a: &Sym2,
    constants: LayeredConstants,
) -> Result<f64> {
    let c = layered_coefficients(mu, lambda, w, constants)?;
    let (a11, a22, a12) = (a.a11(), a.a22(), a.a12());
    Ok((c.c1 * a11 * a11 + c.c2 * a22 * a22 + 2.0 * c.mean_mu * a12 * a12 + c.c3 * a11 * a22) / 12.0)
}

/// Minimizes `(1/12)∫₀¹ Q₂(t)(A + φ(t) e₁⊗e₁) dt` over mean-zero `φ`.
///
/// Stationarity gives `φ = (ν - β)/α` pointwise with `α = Q₂(e₁⊗e₁)`,
/// `β = Q₂(A, e₁⊗e₁)`, and the multiplier `ν` fixed by `⟨φ⟩ = 0`.
pub fn layered_1d_oracle(q2: &[QuadForm2], w: &[f64], a: &Sym2) -> Result<f64> {
    if q2.len() != w.len() || w.is_empty() {
        return Err(Error::InvalidProblem("sample arrays differ in length".into()));
    }
    let e11 = Sym2::basis(0);
    let alpha: Vec<f64> = q2.iter().map(|q| q.eval(&e11)).collect();
    if alpha.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::SingularBlock);
    }
    let beta: Vec<f64> = q2.iter().map(|q| q.bilinear(a, &e11)).collect();
    let nu = mean(w, |i| beta[i] / alpha[i]) / mean(w, |i| 1.0 / alpha[i]);
    let value = mean(w, |i| {
        let phi = (nu - beta[i]) / alpha[i];
        q2[i].eval(&(*a + phi * e11))
    });
    Ok(value / 12.0)
}

/// Real trigonometric basis on the torus: `cos(2πξ·y)`, `sin(2πξ·y)` for `ξ`
/// in a half plane of `{-N..N}² \ {0}`.
fn half_plane(n: usize) -> Vec<[f64; 2]> {
    let n = n as i64;
    let mut out = Vec::new();
    for a in -n..=n {
        for b in -n..=n {
            if a > 0 || (a == 0 && b > 0) {
                out.push([a as f64, b as f64]);
            }
        }
    }
    out
}

/// Value, gradient and Hessian of one real basis function at `y`.
fn trig_basis(xi: [f64; 2], sine: bool, y: [f64; 2]) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let th = 2.0 * PI * (xi[0] * y[0] + xi[1] * y[1]);
    let (v, dv) = if sine { (th.sin(), th.cos()) } else { (th.cos(), -th.sin()) };
    let g = [2.0 * PI * xi[0] * dv, 2.0 * PI * xi[1] * dv];
    let k = -4.0 * PI * PI;
    let h = [
        [k * xi[0] * xi[0] * v, k * xi[0] * xi[1] * v],
        [k * xi[1] * xi[0] * v, k * xi[1] * xi[1] * v],
    ];
    (v, g, h)
}

fn solve_dense(k: DMatrix<f64>, r: DVector<f64>, c: f64) -> Result<(f64, DVector<f64>)> {
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::InvalidProblem("dense system is not positive definite".into()))?;
    let x = -chol.solve(&r);
    Ok((c + r.dot(&x), x))
}

/// Dense Galerkin reference for the plate cell problem at truncation `N`.
pub fn dense_oracle(field: &ReducedField, a: &Sym2, max_mode: usize) -> Result<f64> {
    let freqs = half_plane(max_mode);
    let dim = 3 + 6 * freqs.len();
    if dim > DENSE_DIM_CAP {
        return Err(Error::DimensionCap { dim, cap: DENSE_DIM_CAP });
    }
    let grid = field.grid();
    let rule = field.x3_rule();
    let np = (grid[0] * grid[1]) as f64;
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    let mut r = DVector::<f64>::zeros(dim);
    let mut c = 0.0;
    // Strain of basis function i: membrane part e and bending part κ.
    let mut e = vec![Vector3::zeros(); dim];
    let mut kap = vec![Vector3::zeros(); dim];
    let mut qe = vec![Vector3::zeros(); dim];
    for j1 in 0..grid[0] {
        for j2 in 0..grid[1] {
            let y = [j1 as f64 / grid[0] as f64, j2 as f64 / grid[1] as f64];
            for i in 0..3 {
                e[i] = Sym2::basis(i).0;
                kap[i] = Vector3::zeros();
            }
            let mut idx = 3;
            for &xi in &freqs {
                for sine in [false, true] {
                    let (v, g, h) = trig_basis(xi, sine, y);
                    // ζ = e₁ v and ζ = e₂ v.
                    e[idx] = Sym2::from_matrix(&nalgebra::Matrix2::new(g[0], 0.5 * g[1], 0.5 * g[1], 0.0)).0;
                    kap[idx] = Vector3::zeros();
                    e[idx + 1] = Sym2::from_matrix(&nalgebra::Matrix2::new(0.0, 0.5 * g[0], 0.5 * g[0], g[1])).0;
                    kap[idx + 1] = Vector3::zeros();
                    e[idx + 2] = Vector3::zeros();
                    kap[idx + 2] = Sym2::from_matrix(&nalgebra::Matrix2::new(h[0][0], h[0][1], h[1][0], h[1][1])).0;
                    let _ = v;
                    idx += 3;
                }
            }
            for (kk, (x3, w)) in rule.iter().enumerate() {
                let q = field.sample(kk, [j1, j2])?;
                let m = q.matrix();
                let wt = w / np;
                let strain = |i: usize| e[i] + kap[i] * x3;
                for i in 0..dim {
                    qe[i] = m * strain(i);
                }
                let qa = m * (a.0 * x3);
                c += wt * (a.0 * x3).dot(&qa);
                for i in 0..dim {
                    let si = strain(i);
                    r[i] += wt * si.dot(&qa);
                    for j in i..dim {
                        k[(i, j)] += wt * si.dot(&qe[j]);
                    }
                }
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            k[(i, j)] = k[(j, i)];
        }
    }
    Ok(solve_dense(k, r, c)?.0)
}

/// Continuous piecewise-quadratic Lagrange basis on `elems` uniform elements
/// of `I`: values and derivatives of the three local shape functions at the
/// reference point `t ∈ [0, 1]`.
fn p2_shape(t: f64, width: f64) -> ([f64; 3], [f64; 3]) {
    let v = [2.0 * (t - 0.5) * (t - 1.0), -4.0 * t * (t - 1.0), 2.0 * t * (t - 0.5)];
    let d = [(4.0 * t - 3.0) / width, (-8.0 * t + 4.0) / width, (4.0 * t - 1.0) / width];
    (v, d)
}

/// Dense Galerkin reference for the γ cell problem, with the same discrete
/// space as the spectral γ solver: Fourier modes `≤ N` in `y` times
/// continuous piecewise quadratics on `elems` elements in `x₃`.
pub fn dense_gamma_oracle(
    field: &MaterialField,
    a: &Sym2,
    gamma: f64,
    max_mode: usize,
    elems: usize,
) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidProblem(format!("gamma must be positive, got {gamma}")));
    }
    let freqs = half_plane(max_mode);
    let nodes = 2 * elems + 1;
    // Basis: B (3), then for the zero mode three components times nodes 1..,
    // then per half-plane frequency, cos/sin, component and node.
    let zero_dim = 3 * (nodes - 1);
    let dim = 3 + zero_dim + freqs.len() * 2 * 3 * nodes;
    if dim > GAMMA_DENSE_DIM_CAP {
        return Err(Error::DimensionCap { dim, cap: GAMMA_DENSE_DIM_CAP });
    }
    let grid = field.grid();
    let np = (grid[0] * grid[1]) as f64;
    let width = 1.0 / elems as f64;
    let local = gauss_legendre(3, 0.0, 1.0);
    let mut k = DMatrix::<f64>::zeros(dim, dim);
    let mut r = DVector::<f64>::zeros(dim);
    let mut c = 0.0;
    let mut strains = vec![Sym3::zero(); dim];
    let mut qs = vec![Sym3::zero(); dim];
    let mut values: Vec<(f64, [f64; 2])> = Vec::new();
    for j1 in 0..grid[0] {
        for j2 in 0..grid[1] {
            let y = [j1 as f64 / grid[0] as f64, j2 as f64 / grid[1] as f64];
            values.clear();
            for &xi in &freqs {
                for sine in [false, true] {
                    let (v, g, _) = trig_basis(xi, sine, y);
                    values.push((v, g));
                }
            }
            for el in 0..elems {
                let left = -0.5 + width * el as f64;
                for (t, wt) in local.iter() {
                    let x3 = left + width * t;
                    let (nv, nd) = p2_shape(t, width);
                    let q = field.eval(x3, y);
                    let wt = wt * width / np;
                    strains.iter_mut().for_each(|s| *s = Sym3::zero());
                    for i in 0..3 {
                        strains[i] = crate::quadform::iota(&Sym2::basis(i));
                    }
                    let column = |comp: usize, grad: [f64; 2], val: f64, dval: f64| {
                        let mut g = nalgebra::Matrix3::zeros();
                        g[(comp, 0)] = grad[0] * val;
                        g[(comp, 1)] = grad[1] * val;
                        g[(comp, 2)] = dval / gamma;
                        Sym3::from_matrix(&g)
                    };
                    for loc in 0..3 {
                        let node = 2 * el + loc;
                        if node > 0 {
                            for comp in 0..3 {
                                strains[3 + comp * (nodes - 1) + node - 1] =
                                    column(comp, [0.0, 0.0], nv[loc], nd[loc]);
                            }
                        }
                        for (f, &(v, g)) in values.iter().enumerate() {
                            for comp in 0..3 {
                                let idx = 3 + zero_dim + (f * 3 + comp) * nodes + node;
                                strains[idx] = column(comp, g, nv[loc], v * nd[loc]);
                            }
                        }
                    }
                    let g0 = crate::quadform::iota(&(x3 * *a));
                    let qg0 = Sym3(q.matrix() * g0.0);
                    c += wt * g0.0.dot(&qg0.0);
                    let active: Vec<usize> = (0..dim).filter(|&i| strains[i].0.amax() != 0.0).collect();
                    for &i in &active {
                        qs[i] = Sym3(q.matrix() * strains[i].0);
                        r[i] += wt * strains[i].0.dot(&qg0.0);
                    }
                    for &i in &active {
                        for &j in &active {
                            if j >= i {
                                k[(i, j)] += wt * strains[i].0.dot(&qs[j].0);
                            }
                        }
                    }
                }
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            k[(i, j)] = k[(j, i)];
        }
    }
    Ok(solve_dense(k, r, c)?.0)
}
