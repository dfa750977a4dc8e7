//! Spectral Galerkin solver of the plate cell problem.
//!
//! Minimizes
//!
//! ```text
//! F(B, ζ, φ) = ∬_{I×Y} Q₂(x₃, y, x₃A + B + sym∇ζ + x₃∇²φ) dy dx₃
//! ```
//!
//! over `B ∈ Sym(2)` and mean-zero trigonometric polynomials `ζ`, `φ` with
//! frequencies in `{-N..N}²`. Writing the strain as `e + x₃κ` with membrane
//! part `e = B + sym∇ζ` and bending part `κ = A + ∇²φ`, the thickness
//! integral collapses to the moments `Mₙ(y) = Σ_k w_k x₃ₖⁿ Q₂(x₃ₖ, y)`.
//! The y-integral is the grid trapezoid rule, applied through FFTs.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::cg::{self, pcg, CgOutcome};
use crate::material::ReducedField;
use crate::quadform::{QuadForm2, QuadraticForm, Sym2};
use crate::spectral::{freq_slot, Fft2, ModeSet};
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Fourier truncation `N`.
    pub modes: usize,
    /// Relative preconditioned residual at which CG stops.
    pub tol: f64,
    /// Iteration cap; `None` uses `10·√dim + 200`.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            modes: DEFAULT_MODES,
            tol: DEFAULT_TOL,
            max_iter: None,
        }
    }
}

impl SolverOptions {
    pub fn with_modes(modes: usize) -> Self {
        SolverOptions {
            modes,
            ..Default::default()
        }
    }

    pub(crate) fn validate(&self, grid: [usize; 2]) -> Result<()> {
        if self.modes == 0 {
            return Err(Error::InvalidProblem("modes must be positive".into()));
        }
        let need = 2 * (2 * self.modes + 1);
        if grid.iter().any(|&n| n < need) {
            return Err(Error::InvalidProblem(format!(
                "grid {}x{} too coarse for {} modes (need at least {need} per direction)",
                grid[0], grid[1], self.modes
            )));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidProblem(format!(
                "tolerance {} outside (0, 1)",
                self.tol
            )));
        }
        Ok(())
    }

    pub(crate) fn iteration_cap(&self, dim: usize) -> usize {
        self.max_iter
            .unwrap_or_else(|| (10.0 * (dim as f64).sqrt()) as usize + 200)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CellProblem<'a> {
    pub field: &'a ReducedField,
    pub a: Sym2,
    pub options: SolverOptions,
}

#[derive(Debug, Clone)]
pub struct CellSolution {
    pub b: Sym2,
    pub modes: ModeSet,
    /// `ζ̂(ξ)` for every entry of `modes`.
    pub zeta_hat: Vec<[Complex64; 2]>,
    /// `φ̂(ξ)` for every entry of `modes`.
    pub phi_hat: Vec<Complex64>,
    /// Minimum value, by direct quadrature of the minimizer.
    pub energy: f64,
    /// Minimum value from the quadratic identity `F(x*) = c + ⟨b, x*⟩`.
    pub energy_quadratic: f64,
    pub residual: f64,
    pub iterations: usize,
}

impl CellSolution {
    /// `‖ζ‖_{H¹}` with `‖ζ‖² + ‖∇ζ‖²`.
    pub fn zeta_h1(&self) -> f64 {
        self.modes
            .modes
            .iter()
            .zip(&self.zeta_hat)
            .map(|(xi, z)| (1.0 + 4.0 * PI * PI * norm2(xi)) * (z[0].norm_sqr() + z[1].norm_sqr()))
            .sum::<f64>()
            .sqrt()
    }

    /// `‖φ‖_{H²}` with `‖φ‖² + ‖∇φ‖² + ‖∇²φ‖²`.
    pub fn phi_h2(&self) -> f64 {
        self.modes
            .modes
            .iter()
            .zip(&self.phi_hat)
            .map(|(xi, p)| {
                let k2 = 4.0 * PI * PI * norm2(xi);
                (1.0 + k2 + k2 * k2) * p.norm_sqr()
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Largest deviation from conjugate symmetry of the coefficients.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, &m) in self.modes.mirror.iter().enumerate() {
            worst = worst
                .max((self.phi_hat[i] - self.phi_hat[m].conj()).norm())
                .max((self.zeta_hat[i][0] - self.zeta_hat[m][0].conj()).norm())
                .max((self.zeta_hat[i][1] - self.zeta_hat[m][1].conj()).norm());
        }
        worst
    }
}

/// Explicit constant `C` in `‖B‖ + ‖ζ‖_{H¹} + ‖φ‖_{H²} ≤ (c₂/c₁)·C·‖A‖`.
///
/// Follows from `F(x*) ≤ F(0) ≤ c₂|A|²/12`, `F ≥ c₁(‖e‖² + ‖κ‖²/12)`, the
/// torus Korn bound `‖sym∇ζ‖² ≥ ½‖∇ζ‖²` and `|ξ| ≥ 1` on mean-zero modes.
pub fn stability_constant() -> f64 {
    let k = 4.0 * PI * PI;
    let zeta = (2.0 * (1.0 + 1.0 / k)).sqrt();
    let phi = (12.0 * (1.0 + 1.0 / k + 1.0 / (k * k))).sqrt();
    (1.0 + zeta + phi) / 12f64.sqrt()
}

fn norm2(xi: &[i64; 2]) -> f64 {
    (xi[0] * xi[0] + xi[1] * xi[1]) as f64
}

/// Membrane symbol: `sym∇ζ` of one Fourier mode, rows in Voigt order.
fn membrane_symbol(xi: [i64; 2]) -> [[Complex64; 2]; 3] {
    let i2pi = Complex64::new(0.0, 2.0 * PI);
    let (x1, x2) = (xi[0] as f64, xi[1] as f64);
    let s = std::f64::consts::SQRT_2 * 0.5;
    [
        [i2pi * x1, Complex64::default()],
        [Complex64::default(), i2pi * x2],
        [i2pi * (s * x2), i2pi * (s * x1)],
    ]
}

/// Bending symbol: `∇²φ` of one Fourier mode, Voigt order.
fn bending_symbol(xi: [i64; 2]) -> Vector3<f64> {
    let k = -4.0 * PI * PI;
    let (x1, x2) = (xi[0] as f64, xi[1] as f64);
    Vector3::new(k * x1 * x1, k * x2 * x2, k * std::f64::consts::SQRT_2 * x1 * x2)
}

/// Thickness moments `M₀, M₁, M₂` at every grid point.
pub(crate) fn thickness_moments(field: &ReducedField) -> [Vec<Matrix3<f64>>; 3] {
    let plane = field.plane_len();
    let rule = field.x3_rule();
    let mut out = [
        vec![Matrix3::zeros(); plane],
        vec![Matrix3::zeros(); plane],
        vec![Matrix3::zeros(); plane],
    ];
    for (k, (x3, w)) in rule.iter().enumerate() {
        let forms = &field.samples()[k * plane..(k + 1) * plane];
        for (p, q) in forms.iter().enumerate() {
            let m = q.matrix();
            out[0][p] += m * w;
            out[1][p] += m * (w * x3);
            out[2][p] += m * (w * x3 * x3);
        }
    }
    out
}

/// Immutable discrete operator shared by the solves on one field.
pub(crate) struct CellOperator {
    grid: [usize; 2],
    modes: ModeSet,
    slots: Vec<usize>,
    membrane: Vec<[[Complex64; 2]; 3]>,
    bending: Vec<Vector3<f64>>,
    moments: [Vec<Matrix3<f64>>; 3],
    pre_blocks: Vec<Matrix3<Complex64>>,
    pre_b: Matrix3<f64>,
}

/// Per-solve FFT state.
struct Workspace {
    fft: Fft2,
    buf: [Vec<Complex64>; 3],
}

impl CellOperator {
    pub(crate) fn new(field: &ReducedField, max_mode: usize) -> Result<Self> {
        let grid = field.grid();
        let modes = ModeSet::new(max_mode, false);
        let slots = modes.modes.iter().map(|&xi| freq_slot(xi, grid)).collect();
        let membrane: Vec<_> = modes.modes.iter().map(|&xi| membrane_symbol(xi)).collect();
        let bending: Vec<_> = modes.modes.iter().map(|&xi| bending_symbol(xi)).collect();
        let moments = thickness_moments(field);
        let plane = field.plane_len() as f64;
        let mean = |m: &Vec<Matrix3<f64>>| m.iter().sum::<Matrix3<f64>>() / plane;
        let (m0, m1, m2) = (mean(&moments[0]), mean(&moments[1]), mean(&moments[2]));
        let c = |m: Matrix3<f64>| m.map(|v| Complex64::new(v, 0.0));
        let (m0c, m1c, m2c) = (c(m0), c(m1), c(m2));
        let mut pre_blocks = Vec::with_capacity(modes.len());
        for (ds, db) in membrane.iter().zip(&bending) {
            // Columns (ζ₁, ζ₂, φ) of the 6×3 strain symbol, split in e/κ rows.
            let de = Matrix3::from_fn(|r, col| if col < 2 { ds[r][col] } else { Complex64::default() });
            let dk = Matrix3::from_fn(|r, col| if col == 2 { Complex64::new(db[r], 0.0) } else { Complex64::default() });
            let block = de.adjoint() * (m0c * de + m1c * dk) + dk.adjoint() * (m1c * de + m2c * dk);
            let block = (block + block.adjoint()) * Complex64::new(0.5, 0.0);
            let inv = block
                .try_inverse()
                .ok_or_else(|| Error::InvalidProblem("singular preconditioner block".into()))?;
            pre_blocks.push(inv);
        }
        let pre_b = m0
            .try_inverse()
            .ok_or_else(|| Error::InvalidProblem("singular averaged membrane stiffness".into()))?;
        Ok(CellOperator {
            grid,
            modes,
            slots,
            membrane,
            bending,
            moments,
            pre_blocks,
            pre_b,
        })
    }

    pub(crate) fn dim(&self) -> usize {
        3 + 3 * self.modes.len()
    }

    fn workspace(&self) -> Workspace {
        let n = self.grid[0] * self.grid[1];
        Workspace {
            fft: Fft2::new(self.grid),
            buf: [
                vec![Complex64::default(); n],
                vec![Complex64::default(); n],
                vec![Complex64::default(); n],
            ],
        }
    }

    /// Grid values of `e = B + sym∇ζ` and `κ = ∇²φ` (plus `A` if given),
    /// packed as `buf[c] = e_c + i·κ_c`.
    fn strain_fields(&self, x: &[Complex64], a: Option<&Sym2>, ws: &mut Workspace) {
        let i = Complex64::new(0.0, 1.0);
        for c in 0..3 {
            let buf = &mut ws.buf[c];
            buf.iter_mut().for_each(|v| *v = Complex64::default());
            let kappa0 = a.map_or(0.0, |a| a.0[c]);
            buf[0] = Complex64::new(x[c].re, kappa0);
            for (m, &slot) in self.slots.iter().enumerate() {
                let u = &x[3 + 3 * m..6 + 3 * m];
                let e = self.membrane[m][c][0] * u[0] + self.membrane[m][c][1] * u[1];
                let k = u[2] * self.bending[m][c];
                buf[slot] = e + i * k;
            }
        }
        for buf in ws.buf.iter_mut() {
            ws.fft.inverse(buf);
        }
    }

    /// Applies `K` (or `K x + b` when `a` is given, since the affine part of
    /// the gradient is the operator applied to the constant curvature `A`).
    fn apply_affine(&self, x: &[Complex64], a: Option<&Sym2>, out: &mut [Complex64], ws: &mut Workspace) {
        self.strain_fields(x, a, ws);
        let [m0, m1, m2] = &self.moments;
        let n = self.grid[0] * self.grid[1];
        for p in 0..n {
            let e = Vector3::new(ws.buf[0][p].re, ws.buf[1][p].re, ws.buf[2][p].re);
            let k = Vector3::new(ws.buf[0][p].im, ws.buf[1][p].im, ws.buf[2][p].im);
            let se = m0[p] * e + m1[p] * k;
            let sk = m1[p] * e + m2[p] * k;
            for c in 0..3 {
                ws.buf[c][p] = Complex64::new(se[c], sk[c]);
            }
        }
        for buf in ws.buf.iter_mut() {
            ws.fft.forward(buf);
        }
        // Unpack the two real fields carried by each transform.
        let unpack = |z: &[Complex64], slot: usize, mirror: usize| {
            let zp = z[slot];
            let zm = z[mirror].conj();
            ((zp + zm) * 0.5, (zp - zm) * Complex64::new(0.0, -0.5))
        };
        let zero = 0;
        for c in 0..3 {
            out[c] = Complex64::new(ws.buf[c][zero].re, 0.0);
        }
        for (m, &slot) in self.slots.iter().enumerate() {
            let mirror = self.slots[self.modes.mirror[m]];
            let mut z1 = Complex64::default();
            let mut z2 = Complex64::default();
            let mut ph = Complex64::default();
            for c in 0..3 {
                let (se, sk) = unpack(&ws.buf[c], slot, mirror);
                z1 += self.membrane[m][c][0].conj() * se;
                z2 += self.membrane[m][c][1].conj() * se;
                ph += sk * self.bending[m][c];
            }
            out[3 + 3 * m] = z1;
            out[4 + 3 * m] = z2;
            out[5 + 3 * m] = ph;
        }
    }

    fn precondition(&self, r: &[Complex64], z: &mut [Complex64]) {
        let rb = Vector3::new(r[0].re, r[1].re, r[2].re);
        let zb = self.pre_b * rb;
        for c in 0..3 {
            z[c] = Complex64::new(zb[c], 0.0);
        }
        for (m, inv) in self.pre_blocks.iter().enumerate() {
            let rv = Vector3::new(r[3 + 3 * m], r[4 + 3 * m], r[5 + 3 * m]);
            let zv = inv * rv;
            z[3 + 3 * m..6 + 3 * m].copy_from_slice(zv.as_slice());
        }
    }

    pub(crate) fn solve(
        &self,
        field: &ReducedField,
        a: &Sym2,
        options: &SolverOptions,
    ) -> Result<CellSolution> {
        let dim = self.dim();
        let mut ws = self.workspace();
        let zero = vec![Complex64::default(); dim];
        let mut rhs = vec![Complex64::default(); dim];
        self.apply_affine(&zero, Some(a), &mut rhs, &mut ws);
        rhs.iter_mut().for_each(|v| *v = -*v);
        let m2 = &self.moments[2];
        let c0 = m2.iter().map(|m| a.0.dot(&(m * a.0))).sum::<f64>() / m2.len() as f64;

        let CgOutcome {
            x,
            residual,
            iterations,
        } = pcg(
            &rhs,
            options.tol,
            options.iteration_cap(dim),
            |p, out| self.apply_affine(p, None, out, &mut ws),
            |r, z| self.precondition(r, z),
        )?;
        // rhs = -b, so F(x*) = c - ⟨rhs, x*⟩.
        let energy_quadratic = c0 - cg::dot(&rhs, &x);
        let energy = self.direct_energy(field, &x, a, &mut ws);

        let b = Sym2(Vector3::new(x[0].re, x[1].re, x[2].re));
        let zeta_hat = (0..self.modes.len())
            .map(|m| [x[3 + 3 * m], x[4 + 3 * m]])
            .collect();
        let phi_hat = (0..self.modes.len()).map(|m| x[5 + 3 * m]).collect();
        Ok(CellSolution {
            b,
            modes: self.modes.clone(),
            zeta_hat,
            phi_hat,
            energy,
            energy_quadratic,
            residual,
            iterations,
        })
    }

    /// Quadrature of `Q₂(x₃, y, e + x₃κ)` over the Gauss nodes and the grid,
    /// straight from the samples.
    fn direct_energy(&self, field: &ReducedField, x: &[Complex64], a: &Sym2, ws: &mut Workspace) -> f64 {
        self.strain_fields(x, Some(a), ws);
        let plane = field.plane_len();
        let mut total = 0.0;
        for (k, (x3, w)) in field.x3_rule().iter().enumerate() {
            let forms = &field.samples()[k * plane..(k + 1) * plane];
            let mut sum = 0.0;
            for (p, q) in forms.iter().enumerate() {
                let g = Sym2(Vector3::new(
                    ws.buf[0][p].re + x3 * ws.buf[0][p].im,
                    ws.buf[1][p].re + x3 * ws.buf[1][p].im,
                    ws.buf[2][p].re + x3 * ws.buf[2][p].im,
                ));
                sum += q.eval(&g);
            }
            total += w * sum / plane as f64;
        }
        total
    }
}

/// Solves the cell problem for one macroscopic curvature.
pub fn solve_cell(problem: &CellProblem<'_>) -> Result<CellSolution> {
    problem.options.validate(problem.field.grid())?;
    let op = CellOperator::new(problem.field, problem.options.modes)?;
    op.solve(problem.field, &problem.a, &problem.options)
}

/// Value of the relaxed density `Q₂ʳᵉˡ(A)` at the given truncation.
pub fn homogenize(field: &ReducedField, a: &Sym2, options: &SolverOptions) -> Result<f64> {
    Ok(solve_cell(&CellProblem {
        field,
        a: *a,
        options: *options,
    })?
    .energy)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorMeta {
    pub modes: usize,
    pub x3_nodes: usize,
    pub tol: f64,
    pub material_digest: Option<String>,
}

#[derive(Debug, Clone)]
pub struct EffectiveTensor {
    pub form: QuadForm2,
    pub meta: TensorMeta,
    /// Max CG residual over the polarization solves.
    pub residual: f64,
}

impl EffectiveTensor {
    pub fn matrix(&self) -> &Matrix3<f64> {
        self.form.matrix()
    }

    pub fn eigenvalues(&self) -> Vector3<f64> {
        let mut ev = self.form.eigenvalues();
        ev.as_mut_slice().sort_by(|a, b| a.total_cmp(b));
        ev
    }
}

/// Reconstructs the 3×3 Voigt matrix of `Q₂ʳᵉˡ` by polarization: three
/// diagonal solves `H(Aᵢ)` and three mixed solves `H(Aᵢ + Aⱼ)`.
pub fn effective_tensor(field: &ReducedField, options: &SolverOptions) -> Result<EffectiveTensor> {
    options.validate(field.grid())?;
    let op = CellOperator::new(field, options.modes)?;
    let directions: Vec<Sym2> = (0..3)
        .map(Sym2::basis)
        .chain([(0, 1), (0, 2), (1, 2)].iter().map(|&(i, j)| Sym2::basis(i) + Sym2::basis(j)))
        .collect();
    let sols = directions
        .par_iter()
        .map(|a| op.solve(field, a, options))
        .collect::<Result<Vec<_>>>()?;
    let h: Vec<f64> = sols.iter().map(|s| s.energy).collect();
    let mut m = Matrix3::zeros();
    for i in 0..3 {
        m[(i, i)] = h[i];
    }
    for (slot, &(i, j)) in [(0, 1), (0, 2), (1, 2)].iter().enumerate() {
        let v = 0.5 * (h[3 + slot] - h[i] - h[j]);
        m[(i, j)] = v;
        m[(j, i)] = v;
    }
    let form = QuadForm2::new(m).map_err(|e| match e {
        Error::NotPositiveDefinite(v) => Error::TensorNotSpd(v),
        other => other,
    })?;
    Ok(EffectiveTensor {
        form,
        meta: TensorMeta {
            modes: options.modes,
            x3_nodes: field.x3_rule().len(),
            tol: options.tol,
            material_digest: None,
        },
        residual: sols.iter().map(|s| s.residual).fold(0.0, f64::max),
    })
}

/// Minimizer and value of `min_B ∫_I Q₂(x₃, x₃A + B) dx₃` for a field that
/// does not depend on `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThicknessRelaxation {
    pub value: f64,
    pub b: Sym2,
}

pub fn dimred_bar(field: &ReducedField, a: &Sym2) -> Result<ThicknessRelaxation> {
    if !field.is_y_independent() {
        return Err(Error::InvalidProblem(
            "thickness-only relaxation needs a field independent of y".into(),
        ));
    }
    let mut m = [Matrix3::zeros(); 3];
    let plane = field.plane_len();
    for (k, (x3, w)) in field.x3_rule().iter().enumerate() {
        let q = field.samples()[k * plane].matrix();
        m[0] += q * w;
        m[1] += q * (w * x3);
        m[2] += q * (w * x3 * x3);
    }
    let chol = m[0].cholesky().ok_or(Error::SingularBlock)?;
    let b = -chol.solve(&(m[1] * a.0));
    let value = a.0.dot(&(m[2] * a.0)) + a.0.dot(&(m[1] * b));
    Ok(ThicknessRelaxation { value, b: Sym2(b) })
}
