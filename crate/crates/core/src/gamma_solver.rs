//! Spectral solver of the 3D cell problem with thickness scaling `γ`:
//!
//! ```text
//! Q₂,γ(A) = min ∬_{I×Y} Q(x₃, y, ι(x₃A + B) + (∇_y φ, γ⁻¹∂₃φ)) dy dx₃
//! ```
//!
//! over `B ∈ Sym(2)` and `φ: I×Y → ℝ³`. In `y` the corrector is a
//! trigonometric polynomial with frequencies in `{-N..N}²`; in `x₃` it is
//! continuous piecewise quadratic on `M` uniform elements with free ends.
//! The additive constant of the zero mode is removed by pinning its first
//! node. The x₃ integral uses three Gauss points per element, the y integral
//! the grid trapezoid rule applied through FFTs.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector, Matrix6, Vector3, Vector6};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::cell_solver::{homogenize, SolverOptions};
use crate::cg::{self, pcg, CgOutcome};
use crate::material::MaterialField;
use crate::quadform::{iota, Sym2};
use crate::quadrature::gauss_legendre;
use crate::spectral::{freq_slot, Fft2, ModeSet};
use crate::{Error, Result};

const GAUSS_PER_ELEM: usize = 3;

#[derive(Debug, Clone, Copy)]
pub struct GammaProblem<'a> {
    pub field: &'a MaterialField,
    pub a: Sym2,
    pub gamma: f64,
    /// Number of uniform elements `M` on `I`.
    pub x3_elems: usize,
    pub options: SolverOptions,
}

#[derive(Debug, Clone)]
pub struct GammaSolution {
    pub b: Sym2,
    /// Minimum value, by direct quadrature of the minimizer.
    pub energy: f64,
    /// Minimum value from the quadratic identity.
    pub energy_quadratic: f64,
    /// Energy of the zero corrector, an upper bound for `energy`.
    pub zero_corrector_energy: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Default x₃ mesh for a given `γ`: `max(4, ⌈2/γ⌉)` elements.
pub fn default_x3_elems(gamma: f64) -> usize {
    ((2.0 / gamma).ceil() as usize).max(4)
}

/// Shape values and derivatives of the quadratic element on `[0, 1]`
/// scaled to an element of width `h`.
fn shape(t: f64, h: f64) -> ([f64; 3], [f64; 3]) {
    (
        [2.0 * (t - 0.5) * (t - 1.0), -4.0 * t * (t - 1.0), 2.0 * t * (t - 0.5)],
        [(4.0 * t - 3.0) / h, (4.0 - 8.0 * t) / h, (4.0 * t - 1.0) / h],
    )
}

struct QuadPoint {
    x3: f64,
    weight: f64,
    elem: usize,
    value: [f64; 3],
    deriv: [f64; 3],
}

/// In-plane symbol `P(ξ)`: the `∇_y φ` part of the strain, 6×3 in Voigt rows.
fn plane_symbol(xi: [i64; 2]) -> [[Complex64; 3]; 6] {
    let z = Complex64::default();
    let i1 = Complex64::new(0.0, 2.0 * PI * xi[0] as f64);
    let i2 = Complex64::new(0.0, 2.0 * PI * xi[1] as f64);
    let s = 0.5 * SQRT_2;
    [
        [i1, z, z],
        [z, i2, z],
        [z, z, z],
        [z, z, i2 * s],
        [z, z, i1 * s],
        [i2 * s, i1 * s, z],
    ]
}

/// Transverse symbol `R`: the `∂₃φ` part of the strain.
fn transverse_symbol() -> [[f64; 3]; 6] {
    let s = 0.5 * SQRT_2;
    [
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, s, 0.0],
        [s, 0.0, 0.0],
        [0.0, 0.0, 0.0],
    ]
}

struct GammaOperator {
    grid: [usize; 2],
    gamma: f64,
    nodes: usize,
    modes: ModeSet,
    zero: usize,
    slots: Vec<usize>,
    symbols: Vec<[[Complex64; 3]; 6]>,
    quad: Vec<QuadPoint>,
    /// Material matrices per quadrature point and grid point, or a single
    /// plane when the field does not depend on `x₃`.
    forms: Vec<Matrix6<f64>>,
    x3_independent: bool,
    pre_blocks: Vec<nalgebra::linalg::Cholesky<Complex64, nalgebra::Dyn>>,
    pre_zero: nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>,
}

struct Workspace {
    fft: Fft2,
    buf: [Vec<Complex64>; 3],
}

impl GammaOperator {
    fn new(field: &MaterialField, gamma: f64, elems: usize, max_mode: usize) -> Result<Self> {
        let grid = field.grid();
        let modes = ModeSet::new(max_mode, true);
        let zero = modes.modes.iter().position(|&m| m == [0, 0]).expect("zero mode");
        let slots = modes.modes.iter().map(|&xi| freq_slot(xi, grid)).collect();
        let symbols: Vec<_> = modes.modes.iter().map(|&xi| plane_symbol(xi)).collect();
        let h = 1.0 / elems as f64;
        let local = gauss_legendre(GAUSS_PER_ELEM, 0.0, 1.0);
        let mut quad = Vec::with_capacity(elems * GAUSS_PER_ELEM);
        for elem in 0..elems {
            for (t, w) in local.iter() {
                let (value, deriv) = shape(t, h);
                quad.push(QuadPoint {
                    x3: -0.5 + h * (elem as f64 + t),
                    weight: w * h,
                    elem,
                    value,
                    deriv,
                });
            }
        }
        let x3_independent = field.flags().x3_independent;
        let planes = if x3_independent { 1 } else { quad.len() };
        let plane = grid[0] * grid[1];
        let mut forms = Vec::with_capacity(planes * plane);
        for q in quad.iter().take(planes) {
            for j1 in 0..grid[0] {
                for j2 in 0..grid[1] {
                    let y = [j1 as f64 / grid[0] as f64, j2 as f64 / grid[1] as f64];
                    forms.push(*field.eval(q.x3, y).matrix());
                }
            }
        }
        let mut op = GammaOperator {
            grid,
            gamma,
            nodes: 2 * elems + 1,
            modes,
            zero,
            slots,
            symbols,
            quad,
            forms,
            x3_independent,
            pre_blocks: Vec::new(),
            pre_zero: DMatrix::<f64>::identity(1, 1).cholesky().expect("identity"),
        };
        op.build_preconditioner()?;
        Ok(op)
    }

    fn dim(&self) -> usize {
        3 + 3 * self.nodes * self.modes.len()
    }

    fn offset(&self, m: usize, node: usize) -> usize {
        3 + 3 * (m * self.nodes + node)
    }

    fn forms_at(&self, q: usize) -> &[Matrix6<f64>] {
        let plane = self.grid[0] * self.grid[1];
        let k = if self.x3_independent { 0 } else { q };
        &self.forms[k * plane..(k + 1) * plane]
    }

    /// Strain matrix (6 × 3) of one node's shape function at a quadrature
    /// point, for mode `m`.
    fn node_strain(&self, m: usize, value: f64, deriv: f64) -> [[Complex64; 3]; 6] {
        let r = transverse_symbol();
        let mut out = self.symbols[m];
        for (row, rr) in out.iter_mut().zip(r.iter()) {
            for c in 0..3 {
                row[c] = row[c] * value + rr[c] * (deriv / self.gamma);
            }
        }
        out
    }

    /// Exact inverse of the operator with the material replaced by its
    /// y-average at each quadrature point: one dense Hermitian block per
    /// frequency, the zero mode bordered by `B`.
    fn build_preconditioner(&mut self) -> Result<()> {
        let means: Vec<Matrix6<f64>> = (0..self.quad.len())
            .map(|q| {
                let f = self.forms_at(q);
                f.iter().sum::<Matrix6<f64>>() / f.len() as f64
            })
            .collect();
        let n = 3 * self.nodes;
        let mut blocks = Vec::with_capacity(self.modes.len());
        for m in 0..self.modes.len() {
            let mut k = DMatrix::<Complex64>::zeros(n, n);
            for (q, qp) in self.quad.iter().enumerate() {
                let qm = means[q].map(|v| Complex64::new(v, 0.0));
                let cols: Vec<_> = (0..3)
                    .map(|loc| self.node_strain(m, qp.value[loc], qp.deriv[loc]))
                    .collect();
                for li in 0..3 {
                    for ci in 0..3 {
                        let gi = Vector6::from_fn(|r, _| cols[li][r][ci]);
                        let si = qm * gi;
                        let row = 3 * (2 * qp.elem + li) + ci;
                        for lj in 0..3 {
                            for cj in 0..3 {
                                let gj = Vector6::from_fn(|r, _| cols[lj][r][cj]);
                                let col = 3 * (2 * qp.elem + lj) + cj;
                                k[(col, row)] += gj.dotc(&si) * qp.weight;
                            }
                        }
                    }
                }
            }
            if m == self.zero {
                blocks.push(DMatrix::<Complex64>::identity(1, 1).cholesky().expect("identity"));
                self.pre_zero = self.zero_block(&means)?;
            } else {
                let k = (&k + k.adjoint()) * Complex64::new(0.5, 0.0);
                blocks.push(
                    k.cholesky()
                        .ok_or_else(|| Error::InvalidProblem("singular preconditioner block".into()))?,
                );
            }
        }
        self.pre_blocks = blocks;
        Ok(())
    }

    /// Real system of the zero mode: `B` followed by nodes `1..` of `φ̂(0)`.
    fn zero_block(&self, means: &[Matrix6<f64>]) -> Result<nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>> {
        let n = 3 + 3 * (self.nodes - 1);
        let r = transverse_symbol();
        let mut k = DMatrix::<f64>::zeros(n, n);
        for (q, qp) in self.quad.iter().enumerate() {
            let mut cols: Vec<(usize, Vector6<f64>)> = (0..3).map(|i| (i, iota(&Sym2::basis(i)).0)).collect();
            for loc in 0..3 {
                let node = 2 * qp.elem + loc;
                if node == 0 {
                    continue;
                }
                for c in 0..3 {
                    let g = Vector6::from_fn(|row, _| r[row][c] * qp.deriv[loc] / self.gamma);
                    cols.push((3 + 3 * (node - 1) + c, g));
                }
            }
            for &(i, gi) in &cols {
                let si = means[q] * gi;
                for &(j, gj) in &cols {
                    k[(i, j)] += qp.weight * gj.dot(&si);
                }
            }
        }
        let k = (&k + k.transpose()) * 0.5;
        k.cholesky()
            .ok_or_else(|| Error::InvalidProblem("singular zero-mode preconditioner".into()))
    }

    fn workspace(&self) -> Workspace {
        let n = self.grid[0] * self.grid[1];
        Workspace {
            fft: Fft2::new(self.grid),
            buf: [vec![Complex64::default(); n], vec![Complex64::default(); n], vec![Complex64::default(); n]],
        }
    }

    /// Strain coefficients of mode `m` at quadrature point `qp`.
    fn mode_strain(&self, x: &[Complex64], m: usize, qp: &QuadPoint) -> [Complex64; 6] {
        let mut phi = [Complex64::default(); 3];
        let mut dphi = [Complex64::default(); 3];
        for loc in 0..3 {
            let o = self.offset(m, 2 * qp.elem + loc);
            for c in 0..3 {
                phi[c] += x[o + c] * qp.value[loc];
                dphi[c] += x[o + c] * qp.deriv[loc];
            }
        }
        let p = &self.symbols[m];
        let r = transverse_symbol();
        let mut g = [Complex64::default(); 6];
        for row in 0..6 {
            for c in 0..3 {
                g[row] += p[row][c] * phi[c] + dphi[c] * (r[row][c] / self.gamma);
            }
        }
        g
    }

    /// Grid values of the strain at one quadrature point, packed as
    /// `buf[c] = G_{2c} + i·G_{2c+1}`.
    fn strain_grid(&self, x: &[Complex64], a: Option<&Sym2>, qp: &QuadPoint, ws: &mut Workspace) {
        for buf in ws.buf.iter_mut() {
            buf.iter_mut().for_each(|v| *v = Complex64::default());
        }
        let i = Complex64::new(0.0, 1.0);
        for m in 0..self.modes.len() {
            let mut g = self.mode_strain(x, m, qp);
            if m == self.zero {
                let mut e = Sym2(Vector3::new(x[0].re, x[1].re, x[2].re));
                if let Some(a) = a {
                    e = e + qp.x3 * *a;
                }
                let ie = iota(&e);
                for (gr, v) in g.iter_mut().zip(ie.0.iter()) {
                    *gr += *v;
                }
            }
            let slot = self.slots[m];
            for c in 0..3 {
                ws.buf[c][slot] = g[2 * c] + i * g[2 * c + 1];
            }
        }
        for buf in ws.buf.iter_mut() {
            ws.fft.inverse(buf);
        }
    }

    fn grid_strain(ws: &Workspace, p: usize) -> Vector6<f64> {
        Vector6::new(
            ws.buf[0][p].re,
            ws.buf[0][p].im,
            ws.buf[1][p].re,
            ws.buf[1][p].im,
            ws.buf[2][p].re,
            ws.buf[2][p].im,
        )
    }

    /// `K x`, or `K x + b` when `a` is given.
    fn apply_affine(&self, x: &[Complex64], a: Option<&Sym2>, out: &mut [Complex64], ws: &mut Workspace) {
        out.iter_mut().for_each(|v| *v = Complex64::default());
        let r = transverse_symbol();
        for (q, qp) in self.quad.iter().enumerate() {
            self.strain_grid(x, a, qp, ws);
            for (p, form) in self.forms_at(q).iter().enumerate() {
                let s = form * Self::grid_strain(ws, p);
                for c in 0..3 {
                    ws.buf[c][p] = Complex64::new(s[2 * c], s[2 * c + 1]);
                }
            }
            for buf in ws.buf.iter_mut() {
                ws.fft.forward(buf);
            }
            for m in 0..self.modes.len() {
                let slot = self.slots[m];
                let mirror = self.slots[self.modes.mirror[m]];
                let mut s = [Complex64::default(); 6];
                for c in 0..3 {
                    let zp = ws.buf[c][slot];
                    let zm = ws.buf[c][mirror].conj();
                    s[2 * c] = (zp + zm) * 0.5;
                    s[2 * c + 1] = (zp - zm) * Complex64::new(0.0, -0.5);
                }
                if m == self.zero {
                    for (k, &v) in crate::quadform::IN_PLANE.iter().enumerate() {
                        out[k] += Complex64::new(qp.weight * s[v].re, 0.0);
                    }
                }
                let sym = &self.symbols[m];
                for c in 0..3 {
                    let mut tp = Complex64::default();
                    let mut tr = Complex64::default();
                    for row in 0..6 {
                        tp += sym[row][c].conj() * s[row];
                        tr += s[row] * r[row][c];
                    }
                    tr /= self.gamma;
                    for loc in 0..3 {
                        let o = self.offset(m, 2 * qp.elem + loc);
                        out[o + c] += (tp * qp.value[loc] + tr * qp.deriv[loc]) * qp.weight;
                    }
                }
            }
        }
        let o = self.offset(self.zero, 0);
        out[o..o + 3].iter_mut().for_each(|v| *v = Complex64::default());
    }

    fn precondition(&self, r: &[Complex64], z: &mut [Complex64]) {
        let n = 3 * self.nodes;
        for m in 0..self.modes.len() {
            let o = self.offset(m, 0);
            if m == self.zero {
                let mut rv = DVector::<f64>::zeros(3 + n - 3);
                for i in 0..3 {
                    rv[i] = r[i].re;
                }
                for i in 3..n {
                    rv[i] = r[o + i].re;
                }
                let zv = self.pre_zero.solve(&rv);
                for i in 0..3 {
                    z[i] = Complex64::new(zv[i], 0.0);
                    z[o + i] = Complex64::default();
                }
                for i in 3..n {
                    z[o + i] = Complex64::new(zv[i], 0.0);
                }
            } else {
                let rv = DVector::from_column_slice(&r[o..o + n]);
                let zv = self.pre_blocks[m].solve(&rv);
                z[o..o + n].copy_from_slice(zv.as_slice());
            }
        }
    }

    /// `∬ Q(ι(x₃A + B) + (∇φ, γ⁻¹∂₃φ))` by quadrature of grid values.
    fn direct_energy(&self, x: &[Complex64], a: &Sym2, ws: &mut Workspace) -> f64 {
        let mut total = 0.0;
        for (q, qp) in self.quad.iter().enumerate() {
            self.strain_grid(x, Some(a), qp, ws);
            let forms = self.forms_at(q);
            let sum: f64 = forms
                .iter()
                .enumerate()
                .map(|(p, f)| {
                    let g = Self::grid_strain(ws, p);
                    g.dot(&(f * g))
                })
                .sum();
            total += qp.weight * sum / forms.len() as f64;
        }
        total
    }

    fn solve(&self, a: &Sym2, options: &SolverOptions) -> Result<GammaSolution> {
        let dim = self.dim();
        let mut ws = self.workspace();
        let zero = vec![Complex64::default(); dim];
        let mut rhs = vec![Complex64::default(); dim];
        self.apply_affine(&zero, Some(a), &mut rhs, &mut ws);
        rhs.iter_mut().for_each(|v| *v = -*v);
        let c0 = self.direct_energy(&zero, a, &mut ws);
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
        let energy_quadratic = c0 - cg::dot(&rhs, &x);
        let mut ws = self.workspace();
        let energy = self.direct_energy(&x, a, &mut ws);
        Ok(GammaSolution {
            b: Sym2(Vector3::new(x[0].re, x[1].re, x[2].re)),
            energy,
            energy_quadratic,
            zero_corrector_energy: c0,
            residual,
            iterations,
        })
    }
}

fn check(problem: &GammaProblem<'_>) -> Result<()> {
    if !(problem.gamma > 0.0) || !problem.gamma.is_finite() {
        return Err(Error::InvalidProblem(format!(
            "gamma must be positive, got {}",
            problem.gamma
        )));
    }
    if problem.x3_elems < 2 {
        return Err(Error::InvalidProblem(format!(
            "need at least 2 elements in x3, got {}",
            problem.x3_elems
        )));
    }
    problem.options.validate(problem.field.grid())
}

/// Solves the γ cell problem.
pub fn solve_gamma(problem: &GammaProblem<'_>) -> Result<GammaSolution> {
    check(problem)?;
    let op = GammaOperator::new(problem.field, problem.gamma, problem.x3_elems, problem.options.modes)?;
    op.solve(&problem.a, &problem.options)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaRow {
    pub gamma: f64,
    pub x3_elems: usize,
    pub value: f64,
    /// `|Q₂,γ(A) - Q₂ʳᵉˡ(A)|`.
    pub gap: f64,
    pub residual: f64,
    pub iterations: usize,
    /// Set when the gap grew by more than the slack relative to the
    /// previous row.
    pub non_shrinking: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaReport {
    /// `Q₂ʳᵉˡ(A)` from the plate cell solver at the same Fourier truncation.
    pub relaxed: f64,
    pub rows: Vec<GammaRow>,
}

impl GammaReport {
    pub fn final_gap(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.gap)
    }

    /// Whether every consecutive gap is at most `(1 + slack)` times the
    /// previous one.
    pub fn gaps_shrink(&self, slack: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].gap <= w[0].gap * (1.0 + slack))
    }
}

/// Relative slack used to flag growing gaps.
pub const GAP_SLACK: f64 = 0.01;

/// Solves the γ problem along a decreasing sweep and compares with `Q₂ʳᵉˡ`.
///
/// `x3_elems = None` picks `M(γ) = max(4, ⌈2/γ⌉)` for each point.
pub fn gamma_limit_study(
    field: &MaterialField,
    a: &Sym2,
    gammas: &[f64],
    options: &SolverOptions,
    x3_elems: Option<usize>,
) -> Result<GammaReport> {
    if gammas.is_empty() {
        return Err(Error::InvalidProblem("empty sweep".into()));
    }
    if gammas.iter().any(|&g| !(g > 0.0)) {
        return Err(Error::InvalidProblem("gammas must be positive".into()));
    }
    if gammas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidProblem("gammas must be strictly decreasing".into()));
    }
    let reduced = field.reduce()?;
    let relaxed = homogenize(&reduced, a, options)?;
    let sols = gammas
        .par_iter()
        .map(|&gamma| {
            let elems = x3_elems.unwrap_or_else(|| default_x3_elems(gamma));
            let sol = solve_gamma(&GammaProblem {
                field,
                a: *a,
                gamma,
                x3_elems: elems,
                options: *options,
            })?;
            Ok((gamma, elems, sol))
        })
        .collect::<Result<Vec<_>>>()?;
    // Gaps at the level of the solver tolerance are noise, not growth.
    let floor = options.tol * relaxed.abs();
    let mut rows: Vec<GammaRow> = Vec::with_capacity(sols.len());
    for (gamma, elems, sol) in sols {
        let gap = (sol.energy - relaxed).abs();
        let non_shrinking = rows
            .last()
            .is_some_and(|prev| gap > prev.gap * (1.0 + GAP_SLACK) && gap > floor);
        rows.push(GammaRow {
            gamma,
            x3_elems: elems,
            value: sol.energy,
            gap,
            residual: sol.residual,
            iterations: sol.iterations,
            non_shrinking,
        });
    }
    Ok(GammaReport { relaxed, rows })
}
