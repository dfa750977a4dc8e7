//! Recovery sequences for thin periodic plates with `ε(h) = h^{2/3}`.
//!
//! The 3D energy density is `W(x₃, y, F) = Q(x₃, y, (FᵀF − I)/2)`, which is
//! frame indifferent and expands to `Q(sym G)` at `F = I + G`.

mod ansatz;
mod isometry;

pub use ansatz::{
    build_recovery, limit_strain, AnsatzConfig, Envelope, Recovery, RecoveryAnsatz, Term,
};
pub use isometry::{build_isometry, Isometry, IsometryKind, SurfacePoint};

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::material::MaterialField;
use crate::quadform::{QuadForm3, QuadraticForm, Sym3};
use crate::quadrature::{composite_gauss, gauss_legendre, Rule};
use crate::{Error, Result};

/// Minimum Gauss points per oscillation period in each in-plane direction.
pub const MIN_POINTS_PER_PERIOD: usize = 8;

/// Anything that can be sampled like a plate deformation.
pub trait Sampler: Sync {
    fn scaled_gradient(&self, x: [f64; 3]) -> Matrix3<f64>;
    fn thickness(&self) -> f64;
    /// Oscillation period `ε`, the reciprocal of an integer.
    fn period(&self) -> f64;
    /// Highest cell frequency per direction carried by the sampler.
    fn max_frequency(&self) -> usize;
}

impl Sampler for Recovery {
    fn scaled_gradient(&self, x: [f64; 3]) -> Matrix3<f64> {
        Recovery::scaled_gradient(self, x)
    }
    fn thickness(&self) -> f64 {
        self.h
    }
    fn period(&self) -> f64 {
        self.eps
    }
    fn max_frequency(&self) -> usize {
        self.ansatz.max_frequency()
    }
}

pub fn energy_density(q: &QuadForm3, f: &Matrix3<f64>) -> f64 {
    let e = (f.transpose() * f - Matrix3::identity()) * 0.5;
    q.eval(&Sym3::from_matrix(&e))
}

/// Distance from `F` to `SO(3)`, `|√(FᵀF) − I|` for `det F > 0`.
pub fn dist_so3(f: &Matrix3<f64>) -> f64 {
    (sqrt_spd(&(f.transpose() * f)).expect("FᵀF is positive semidefinite") - Matrix3::identity()).norm()
}

fn sqrt_spd(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let eig = SymmetricEigen::new(*m);
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::NotPositiveDefinite(eig.eigenvalues.min()));
    }
    let d = Matrix3::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(eig.eigenvectors * d * eig.eigenvectors.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyOptions {
    /// Gauss points per oscillation period (of `ε` and of the correctors).
    pub points_per_period: usize,
    /// Gauss points across the thickness.
    pub x3_points: usize,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        EnergyOptions {
            points_per_period: MIN_POINTS_PER_PERIOD,
            x3_points: 6,
        }
    }
}

/// Tensor-product Gauss rule on `S × I` resolving the sampler's
/// oscillations.
struct PlateRule {
    plane: Rule,
    thick: Rule,
    period: f64,
}

fn period_count(eps: f64) -> Result<usize> {
    let k = (1.0 / eps).round();
    if !(k >= 1.0) || (k * eps - 1.0).abs() > 1e-12 {
        return Err(Error::Resolution(format!(
            "period {eps} is not the reciprocal of an integer"
        )));
    }
    Ok(k as usize)
}

impl PlateRule {
    fn new(eps: f64, max_frequency: usize, field_nodes: usize, options: &EnergyOptions) -> Result<Self> {
        if options.points_per_period < MIN_POINTS_PER_PERIOD {
            return Err(Error::Resolution(format!(
                "{} points per period, need at least {MIN_POINTS_PER_PERIOD}",
                options.points_per_period
            )));
        }
        if options.x3_points < field_nodes {
            return Err(Error::Resolution(format!(
                "{} thickness points for a material with {field_nodes} nodes",
                options.x3_points
            )));
        }
        let cells = period_count(eps)? * max_frequency.max(1);
        Ok(PlateRule {
            plane: composite_gauss(cells, options.points_per_period, 0.0, 1.0),
            thick: gauss_legendre(options.x3_points, -0.5, 0.5),
            period: eps,
        })
    }

    /// `∫_Ω f`, parallel over rows of the in-plane rule with a fixed-order
    /// reduction, so the result does not depend on the thread count.
    fn integrate(&self, f: impl Fn([f64; 3], [f64; 2]) -> f64 + Sync) -> f64 {
        let rows: Vec<f64> = (0..self.plane.len())
            .into_par_iter()
            .map(|i| {
                let (x1, w1) = (self.plane.nodes[i], self.plane.weights[i]);
                let mut acc = 0.0;
                for (x2, w2) in self.plane.iter() {
                    let y = [x1 / self.period, x2 / self.period];
                    for (x3, w3) in self.thick.iter() {
                        acc += w2 * w3 * f([x1, x2, x3], y);
                    }
                }
                w1 * acc
            })
            .collect();
        rows.iter().sum()
    }
}

/// `h⁻² ∫_Ω W(x₃, x′/ε, ∇_h u^h) dx`.
pub fn energy3d(sampler: &dyn Sampler, field: &MaterialField, options: &EnergyOptions) -> Result<f64> {
    let rule = PlateRule::new(sampler.period(), sampler.max_frequency(), field.x3_rule().len(), options)?;
    let h = sampler.thickness();
    let total = rule.integrate(|x, y| energy_density(&field.eval(x[2], y), &sampler.scaled_gradient(x)));
    Ok(total / (h * h))
}

/// `E^h = (√((∇_h u^h)ᵀ∇_h u^h) − I)/h` at the given points.
pub fn strain(sampler: &dyn Sampler, points: &[[f64; 3]]) -> Result<Vec<Matrix3<f64>>> {
    let h = sampler.thickness();
    points
        .iter()
        .map(|&x| {
            let f = sampler.scaled_gradient(x);
            Ok((sqrt_spd(&(f.transpose() * f))? - Matrix3::identity()) / h)
        })
        .collect()
}

/// Mean-zero trigonometric polynomial `Σ amp cos(2πξ·y + phase)`.
fn trig_eval(terms: &[Term], y: [f64; 2]) -> f64 {
    terms
        .iter()
        .map(|t| {
            let th = 2.0 * std::f64::consts::PI * (t.xi[0] as f64 * y[0] + t.xi[1] as f64 * y[1]) + t.phase;
            t.amp * th.cos()
        })
        .sum()
}

/// Cell rule: trapezoid on an `n × n` grid.
fn cell_grid(n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .flat_map(|i| (0..n).map(move |j| [i as f64 / n as f64, j as f64 / n as f64]))
        .collect()
}

/// Two-scale pairing of `f^h` against `χ(x) g(x′/ε)`, and the candidate
/// limit `∬ f(x, y) χ(x) g(y)`.
pub fn two_scale_test(
    f_h: &(dyn Fn([f64; 3]) -> f64 + Sync),
    chi: &(dyn Fn([f64; 3]) -> f64 + Sync),
    g: &[Term],
    eps: f64,
    candidate: &(dyn Fn([f64; 3], [f64; 2]) -> f64 + Sync),
) -> Result<(f64, f64)> {
    if g.iter().any(|t| t.xi == [0, 0] || t.x3_power != 0) {
        return Err(Error::InvalidProblem("test function must be mean-zero in y".into()));
    }
    let freq = g
        .iter()
        .map(|t| t.xi[0].unsigned_abs().max(t.xi[1].unsigned_abs()) as usize)
        .max()
        .unwrap_or(1);
    // f^h oscillates like g, so the product carries twice its frequency.
    let rule = PlateRule::new(eps, 2 * freq, 1, &EnergyOptions::default())?;
    let lhs = rule.integrate(|x, y| f_h(x) * chi(x) * trig_eval(g, y));
    let macro_rule = PlateRule {
        plane: composite_gauss(4, 8, 0.0, 1.0),
        thick: gauss_legendre(6, -0.5, 0.5),
        period: 1.0,
    };
    let cells = cell_grid((8 * freq).max(32).next_power_of_two());
    let per_cell = 1.0 / cells.len() as f64;
    let rhs = macro_rule.integrate(|x, _| {
        let c = chi(x);
        cells.iter().map(|&y| candidate(x, y) * c * trig_eval(g, y)).sum::<f64>() * per_cell
    });
    Ok((lhs, rhs))
}

/// `∬ Q(x₃, y, E(x, y)) dy dx` with `E` the limit strain, by tensor
/// quadrature in `x` and the trapezoid rule on an `n × n` cell grid.
pub fn limit_energy(ansatz: &RecoveryAnsatz, field: &MaterialField, cell_points: usize) -> Result<f64> {
    if cell_points < 2 * ansatz.max_frequency() + 2 {
        return Err(Error::Resolution(format!(
            "{cell_points} cell points cannot resolve frequency {}",
            ansatz.max_frequency()
        )));
    }
    let thick = gauss_legendre(field.x3_rule().len().max(6), -0.5, 0.5);
    let cells = cell_grid(cell_points);
    let forms: Vec<Vec<QuadForm3>> = thick
        .nodes
        .iter()
        .map(|&x3| cells.iter().map(|&y| field.eval(x3, y)).collect())
        .collect();
    let plane = composite_gauss(4, 8, 0.0, 1.0);
    let per_cell = 1.0 / cells.len() as f64;
    let rows: Vec<f64> = (0..plane.len())
        .into_par_iter()
        .map(|i| {
            let x1 = plane.nodes[i];
            let mut acc = 0.0;
            for (x2, w2) in plane.iter() {
                for (k, (x3, w3)) in thick.iter().enumerate() {
                    let s: f64 = cells
                        .iter()
                        .zip(&forms[k])
                        .map(|(&y, q)| q.eval(&Sym3::from_matrix(&limit_strain(ansatz, [x1, x2, x3], y))))
                        .sum();
                    acc += w2 * w3 * s * per_cell;
                }
            }
            plane.weights[i] * acc
        })
        .collect();
    Ok(rows.iter().sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub h: f64,
    pub eps: f64,
    pub in_plane_points: usize,
    pub x3_points: usize,
    pub energy: f64,
    pub target: f64,
    pub gap: f64,
    /// `sup |Rᵀ∇_h u^h − I − εA_φ − hM|` over the sample points.
    pub gradient_residual: f64,
    /// `gradient_residual / (ε² + hε + h²/ε)`.
    pub gradient_constant: f64,
    /// `sup |(∇_h u^h)ᵀ∇_h u^h − I − 2hE| / h`.
    pub metric_residual: f64,
    /// `‖E^h − E‖_{L²(Ω)}` with `E` evaluated at `y = x′/ε`.
    pub strain_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub target: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log gap` against `log h`.
    pub gap_order: Option<f64>,
    /// Least-squares slope of `log metric_residual` against `log h`.
    pub metric_order: Option<f64>,
}

impl ConvergenceReport {
    pub fn gaps_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].gap < w[0].gap)
    }
}

/// Least-squares slope of `log y` against `log x`; `None` if any value is
/// not positive or fewer than two points are given.
pub fn fitted_order(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Some(sxy / sxx)
}

/// Sample points for the sup-norm residuals: four per period and
/// direction, five across the thickness.
fn residual_points(rec: &Recovery) -> Vec<[f64; 3]> {
    let n = 4 * rec.k * rec.ansatz.max_frequency().max(1);
    let mut out = Vec::with_capacity(n * n * 5);
    for i in 0..n {
        for j in 0..n {
            for &x3 in &[-0.5, -0.25, 0.0, 0.25, 0.5] {
                out.push([(i as f64 + 0.37) / n as f64, (j as f64 + 0.61) / n as f64, x3]);
            }
        }
    }
    out
}

fn sup_norm(points: &[[f64; 3]], f: impl Fn([f64; 3]) -> Matrix3<f64> + Sync) -> f64 {
    points.par_iter().map(|&x| f(x).amax()).reduce(|| 0.0, f64::max)
}

/// Energies of the recovery sequence for `ε = 1/k`, `h = k^{-3/2}` against
/// the limit energy, with the expansion residuals at each step.
pub fn convergence_study(
    ansatz: &RecoveryAnsatz,
    field: &MaterialField,
    ks: &[usize],
    options: &EnergyOptions,
) -> Result<ConvergenceReport> {
    if ks.is_empty() {
        return Err(Error::InvalidProblem("empty k list".into()));
    }
    if ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidProblem("k list must be strictly increasing".into()));
    }
    let target = limit_energy(ansatz, field, (8 * ansatz.max_frequency()).max(32))?;
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let rec = Recovery::with_period(ansatz, k)?;
        let rule = PlateRule::new(rec.eps, ansatz.max_frequency(), field.x3_rule().len(), options)?;
        let energy = energy3d(&rec, field, options)?;
        let pts = residual_points(&rec);
        let gradient_residual = sup_norm(&pts, |x| rec.gradient_expansion_residual(x));
        let metric_residual = sup_norm(&pts, |x| rec.metric_expansion_residual(x)) / rec.h;
        let scale = rec.eps * rec.eps + rec.h * rec.eps + rec.h * rec.h / rec.eps;
        let strain_sq = rule.integrate(|x, y| {
            let f = rec.scaled_gradient(x);
            let eh = (sqrt_spd(&(f.transpose() * f)).unwrap_or(Matrix3::from_element(f64::NAN))
                - Matrix3::identity())
                / rec.h;
            (eh - rec.limit_strain(x, y)).norm_squared()
        });
        if !strain_sq.is_finite() {
            return Err(Error::NotPositiveDefinite(f64::NAN));
        }
        rows.push(ConvergenceRow {
            k,
            h: rec.h,
            eps: rec.eps,
            in_plane_points: rule.plane.len(),
            x3_points: rule.thick.len(),
            energy,
            target,
            gap: (energy - target).abs(),
            gradient_residual,
            gradient_constant: gradient_residual / scale,
            metric_residual,
            strain_gap: strain_sq.sqrt(),
        });
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let metric: Vec<f64> = rows.iter().map(|r| r.metric_residual).collect();
    Ok(ConvergenceReport {
        target,
        gap_order: fitted_order(&hs, &gaps),
        metric_order: fitted_order(&hs, &metric),
        rows,
    })
}
