//! Periodic material fields `Q(x₃, y, ·)` sampled on `I × Y`.
//!
//! A field is sampled at the Gauss–Legendre nodes of `I = [-1/2, 1/2]` and a
//! uniform `n₁ × n₂` collocation grid `y_j = (j₁/n₁, j₂/n₂)` of the torus.
//! Besides the samples each field keeps how it was defined, so that it can
//! also be evaluated off the grid (the recovery and γ solvers need that).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::expr::{Expr, Point, Var};
use crate::quadform::{isotropic, reduce2d, QuadForm2, QuadForm3};
use crate::quadrature::{thickness_rule, Rule};
use crate::{Error, Result};

pub const DEFAULT_X3_NODES: usize = 4;

/// Relative tolerance of the structural-flag verification.
const FLAG_TOL: f64 = 1e-14;

fn default_x3_nodes() -> usize {
    DEFAULT_X3_NODES
}

/// On-disk material description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaterialConfig {
    IsotropicAnalytic(AnalyticConfig),
    IsotropicLayers(LayersConfig),
    VoigtGrid(VoigtGridConfig),
}

/// `μ(y)`, `λ(y)` given as expressions in `y1`, `y2`; an optional positive
/// factor in `x3` multiplies both moduli.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticConfig {
    pub grid: [usize; 2],
    #[serde(default = "default_x3_nodes")]
    pub x3_nodes: usize,
    pub mu: String,
    pub lambda: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x3_modulation: Option<String>,
}

/// Piecewise-constant laminate in `y₁`; widths sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayersConfig {
    pub grid: [usize; 2],
    #[serde(default = "default_x3_nodes")]
    pub x3_nodes: usize,
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub width: f64,
    pub mu: f64,
    pub lambda: f64,
}

/// Explicit 6×6 Voigt matrices, one per `(x₃ node, grid cell)`: node-major,
/// then `j₁`, then `j₂`; each matrix as 36 numbers in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoigtGridConfig {
    pub grid: [usize; 2],
    #[serde(default = "default_x3_nodes")]
    pub x3_nodes: usize,
    pub matrices: Vec<Vec<f64>>,
}

impl MaterialConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("material config serializes")
    }

    pub fn grid(&self) -> [usize; 2] {
        match self {
            MaterialConfig::IsotropicAnalytic(c) => c.grid,
            MaterialConfig::IsotropicLayers(c) => c.grid,
            MaterialConfig::VoigtGrid(c) => c.grid,
        }
    }

    pub fn x3_nodes(&self) -> usize {
        match self {
            MaterialConfig::IsotropicAnalytic(c) => c.x3_nodes,
            MaterialConfig::IsotropicLayers(c) => c.x3_nodes,
            MaterialConfig::VoigtGrid(c) => c.x3_nodes,
        }
    }
}

/// Structural properties, detected from the samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Flags {
    pub x3_independent: bool,
    /// Depends on `y₁` only.
    pub layered: bool,
    pub isotropic: bool,
}

type FormFn = dyn Fn(f64, [f64; 2]) -> QuadForm3 + Send + Sync;

#[derive(Clone)]
enum Source {
    Analytic {
        mu: Expr,
        lambda: Expr,
        modulation: Option<Expr>,
    },
    Layers(Vec<Layer>),
    Grid,
    Function(Arc<FormFn>),
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Analytic { .. } => f.write_str("Analytic"),
            Source::Layers(l) => write!(f, "Layers({})", l.len()),
            Source::Grid => f.write_str("Grid"),
            Source::Function(_) => f.write_str("Function"),
        }
    }
}

/// Isotropic moduli samples, same indexing as the forms.
#[derive(Debug, Clone, PartialEq)]
pub struct Moduli {
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MaterialField {
    samples: Vec<QuadForm3>,
    x3_rule: Rule,
    grid: [usize; 2],
    flags: Flags,
    bounds: (f64, f64),
    moduli: Option<Moduli>,
    source: Source,
}

/// Plate-reduced field `Q₂(x₃, y, ·)`, obtained from [`MaterialField::reduce`].
#[derive(Debug, Clone)]
pub struct ReducedField {
    samples: Vec<QuadForm2>,
    x3_rule: Rule,
    grid: [usize; 2],
    flags: Flags,
    bounds: (f64, f64),
}

fn check_grid(grid: [usize; 2]) -> Result<()> {
    for n in grid {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "grid size {n} is not a power of two"
            )));
        }
    }
    Ok(())
}

fn check_x3_nodes(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Config("x3_nodes must be positive".into()));
    }
    Ok(())
}

fn grid_point(grid: [usize; 2], j1: usize, j2: usize) -> [f64; 2] {
    [j1 as f64 / grid[0] as f64, j2 as f64 / grid[1] as f64]
}

fn layer_at(layers: &[Layer], y1: f64) -> &Layer {
    let t = y1.rem_euclid(1.0);
    let mut acc = 0.0;
    for layer in layers {
        acc += layer.width;
        if t < acc {
            return layer;
        }
    }
    layers.last().expect("at least one layer")
}

fn check_periodic(name: &str, e: &Expr) -> Result<()> {
    const PROBES: [(f64, f64, f64); 4] = [
        (0.137, 0.291, 0.0),
        (0.613, 0.042, 0.25),
        (0.871, 0.555, -0.4),
        (0.0, 0.0, 0.1),
    ];
    for &(y1, y2, x3) in &PROBES {
        let v = e.eval(Point { x3, y1, y2 });
        let s1 = e.eval(Point { x3, y1: y1 + 1.0, y2 });
        let s2 = e.eval(Point { x3, y1, y2: y2 + 1.0 });
        let tol = 1e-9 * (1.0 + v.abs());
        if !v.is_finite() || (s1 - v).abs() > tol || (s2 - v).abs() > tol {
            return Err(Error::Config(format!(
                "expression `{name}` is not 1-periodic in y"
            )));
        }
    }
    Ok(())
}

fn forms_close<const D: usize>(
    a: &nalgebra::SMatrix<f64, D, D>,
    b: &nalgebra::SMatrix<f64, D, D>,
    scale: f64,
) -> bool {
    (a - b).amax() <= FLAG_TOL * scale
}

impl MaterialField {
    /// Loads and validates a field from its config.
    pub fn load(config: &MaterialConfig) -> Result<Self> {
        let grid = config.grid();
        check_grid(grid)?;
        check_x3_nodes(config.x3_nodes())?;
        let rule = thickness_rule(config.x3_nodes());
        match config {
            MaterialConfig::IsotropicAnalytic(c) => {
                let mu = Expr::parse(&c.mu)?;
                let lambda = Expr::parse(&c.lambda)?;
                check_periodic("mu", &mu)?;
                check_periodic("lambda", &lambda)?;
                let modulation = c.x3_modulation.as_deref().map(Expr::parse).transpose()?;
                if let Some(m) = &modulation {
                    if m.uses(Var::Y1) || m.uses(Var::Y2) {
                        return Err(Error::Config(
                            "x3_modulation may only depend on x3".into(),
                        ));
                    }
                }
                let source = Source::Analytic {
                    mu,
                    lambda,
                    modulation,
                };
                Self::from_isotropic_source(grid, rule, source)
            }
            MaterialConfig::IsotropicLayers(c) => {
                if c.layers.is_empty() {
                    return Err(Error::Config("no layers given".into()));
                }
                if c.layers.iter().any(|l| !(l.width > 0.0)) {
                    return Err(Error::Config("layer widths must be positive".into()));
                }
                let total: f64 = c.layers.iter().map(|l| l.width).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "layer widths sum to {total}, expected 1"
                    )));
                }
                Self::from_isotropic_source(grid, rule, Source::Layers(c.layers.clone()))
            }
            MaterialConfig::VoigtGrid(c) => {
                let expected = c.x3_nodes * grid[0] * grid[1];
                if c.matrices.len() != expected {
                    return Err(Error::Config(format!(
                        "expected {expected} matrices, found {}",
                        c.matrices.len()
                    )));
                }
                let samples = c
                    .matrices
                    .iter()
                    .map(|m| {
                        if m.len() != 36 {
                            return Err(Error::Config(format!(
                                "Voigt matrix has {} entries, expected 36",
                                m.len()
                            )));
                        }
                        QuadForm3::new(nalgebra::Matrix6::from_row_slice(m))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::assemble(samples, rule, grid, None, Source::Grid)
            }
        }
    }

    /// Samples an arbitrary form-valued function; `f(x₃, y)` must be
    /// 1-periodic in `y`.
    pub fn from_fn<F>(grid: [usize; 2], x3_nodes: usize, f: F) -> Result<Self>
    where
        F: Fn(f64, [f64; 2]) -> QuadForm3 + Send + Sync + 'static,
    {
        check_grid(grid)?;
        check_x3_nodes(x3_nodes)?;
        let rule = thickness_rule(x3_nodes);
        let mut samples = Vec::with_capacity(x3_nodes * grid[0] * grid[1]);
        for &x3 in &rule.nodes {
            for j1 in 0..grid[0] {
                for j2 in 0..grid[1] {
                    samples.push(f(x3, grid_point(grid, j1, j2)));
                }
            }
        }
        Self::assemble(samples, rule, grid, None, Source::Function(Arc::new(f)))
    }

    /// Samples isotropic moduli `(μ, λ)(x₃, y)`.
    pub fn from_isotropic_fn<F>(grid: [usize; 2], x3_nodes: usize, f: F) -> Result<Self>
    where
        F: Fn(f64, [f64; 2]) -> (f64, f64) + Send + Sync + 'static,
    {
        check_grid(grid)?;
        check_x3_nodes(x3_nodes)?;
        let rule = thickness_rule(x3_nodes);
        let f = Arc::new(f);
        let g = f.clone();
        let source = Source::Function(Arc::new(move |x3, y| {
            let (mu, lambda) = g(x3, y);
            isotropic(mu, lambda).expect("moduli validated at sampling")
        }));
        let mut mus = Vec::new();
        let mut lambdas = Vec::new();
        for &x3 in &rule.nodes {
            for j1 in 0..grid[0] {
                for j2 in 0..grid[1] {
                    let (mu, lambda) = f(x3, grid_point(grid, j1, j2));
                    mus.push(mu);
                    lambdas.push(lambda);
                }
            }
        }
        Self::from_moduli(grid, rule, Moduli { mu: mus, lambda: lambdas }, source)
    }

    /// y- and x₃-independent field.
    pub fn homogeneous(q: QuadForm3, grid: [usize; 2], x3_nodes: usize) -> Result<Self> {
        Self::from_fn(grid, x3_nodes, move |_, _| q)
    }

    fn from_isotropic_source(grid: [usize; 2], rule: Rule, source: Source) -> Result<Self> {
        let mut mus = Vec::new();
        let mut lambdas = Vec::new();
        for &x3 in &rule.nodes {
            for j1 in 0..grid[0] {
                for j2 in 0..grid[1] {
                    let y = grid_point(grid, j1, j2);
                    let y = match source {
                        // Layers are sampled at cell midpoints.
                        Source::Layers(_) => [y[0] + 0.5 / grid[0] as f64, y[1]],
                        _ => y,
                    };
                    let (mu, lambda) = Self::source_moduli(&source, x3, y)
                        .expect("isotropic sources have moduli");
                    mus.push(mu);
                    lambdas.push(lambda);
                }
            }
        }
        Self::from_moduli(grid, rule, Moduli { mu: mus, lambda: lambdas }, source)
    }

    fn from_moduli(grid: [usize; 2], rule: Rule, moduli: Moduli, source: Source) -> Result<Self> {
        let samples = moduli
            .mu
            .iter()
            .zip(&moduli.lambda)
            .map(|(&mu, &lambda)| isotropic(mu, lambda))
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(samples, rule, grid, Some(moduli), source)
    }

    fn source_moduli(source: &Source, x3: f64, y: [f64; 2]) -> Option<(f64, f64)> {
        match source {
            Source::Analytic {
                mu,
                lambda,
                modulation,
            } => {
                let p = Point { x3, y1: y[0], y2: y[1] };
                let m = modulation.as_ref().map_or(1.0, |m| m.eval(p));
                Some((m * mu.eval(p), m * lambda.eval(p)))
            }
            Source::Layers(layers) => {
                let l = layer_at(layers, y[0]);
                Some((l.mu, l.lambda))
            }
            _ => None,
        }
    }

    fn assemble(
        samples: Vec<QuadForm3>,
        x3_rule: Rule,
        grid: [usize; 2],
        moduli: Option<Moduli>,
        source: Source,
    ) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for q in &samples {
            let ev = q.eigenvalues();
            lo = lo.min(ev.min());
            hi = hi.max(ev.max());
        }
        if !(lo > 0.0) {
            return Err(Error::NotPositiveDefinite(lo));
        }
        let mut field = MaterialField {
            samples,
            x3_rule,
            grid,
            flags: Flags::default(),
            bounds: (lo, hi),
            moduli,
            source,
        };
        field.flags = field.detect_flags();
        Ok(field)
    }

    fn detect_flags(&self) -> Flags {
        let scale = self.bounds.1;
        let m = |i: usize| self.samples[i].matrix();
        let isotropic = match &self.moduli {
            Some(md) => self.samples.iter().enumerate().all(|(i, q)| {
                let iso = isotropic(md.mu[i], md.lambda[i]).expect("validated moduli");
                forms_close(q.matrix(), iso.matrix(), scale)
            }),
            None => false,
        };
        let (x3_independent, layered) = structure_flags(
            self.x3_rule.len(),
            self.grid,
            |a, b| forms_close(m(a), m(b), scale),
        );
        Flags {
            x3_independent,
            layered,
            isotropic,
        }
    }

    fn index(&self, k: usize, j: [usize; 2]) -> usize {
        (k * self.grid[0] + j[0] % self.grid[0]) * self.grid[1] + j[1] % self.grid[1]
    }

    /// Stored form at x₃ node `k` and grid point `j` (wrapped on the torus).
    pub fn sample(&self, k: usize, j: [usize; 2]) -> Result<&QuadForm3> {
        if k >= self.x3_rule.len() {
            return Err(Error::IndexOutOfRange(format!(
                "x3 node {k} of {}",
                self.x3_rule.len()
            )));
        }
        Ok(&self.samples[self.index(k, j)])
    }

    /// Evaluates the material off the grid. Analytic and layered sources are
    /// exact; sampled sources are piecewise constant around grid points in
    /// `y` and interpolated over the Gauss nodes in `x₃`.
    pub fn eval(&self, x3: f64, y: [f64; 2]) -> QuadForm3 {
        match &self.source {
            Source::Function(f) => f(x3, [y[0].rem_euclid(1.0), y[1].rem_euclid(1.0)]),
            Source::Analytic { .. } | Source::Layers(_) => {
                let (mu, lambda) = Self::source_moduli(&self.source, x3, y).expect("isotropic");
                isotropic(mu, lambda).expect("moduli validated at load")
            }
            Source::Grid => {
                let j = [
                    (y[0] * self.grid[0] as f64).round().rem_euclid(self.grid[0] as f64) as usize,
                    (y[1] * self.grid[1] as f64).round().rem_euclid(self.grid[1] as f64) as usize,
                ];
                if self.flags.x3_independent {
                    return self.samples[self.index(0, j)];
                }
                let weights = lagrange_weights(&self.x3_rule.nodes, x3);
                let mut m = nalgebra::Matrix6::zeros();
                for (k, w) in weights.iter().enumerate() {
                    m += self.samples[self.index(k, j)].matrix() * *w;
                }
                QuadForm3::new(m).expect("interpolated form stays positive definite")
            }
        }
    }

    /// Pointwise plate reduction of every sample.
    pub fn reduce(&self) -> Result<ReducedField> {
        let samples = self
            .samples
            .iter()
            .map(reduce2d)
            .collect::<Result<Vec<_>>>()?;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for q in &samples {
            let ev = q.eigenvalues();
            lo = lo.min(ev.min());
            hi = hi.max(ev.max());
        }
        Ok(ReducedField {
            samples,
            x3_rule: self.x3_rule.clone(),
            grid: self.grid,
            flags: self.flags,
            bounds: (lo, hi),
        })
    }

    pub fn grid(&self) -> [usize; 2] {
        self.grid
    }
    pub fn x3_rule(&self) -> &Rule {
        &self.x3_rule
    }
    pub fn flags(&self) -> Flags {
        self.flags
    }
    /// Global `(c₁, c₂)`: extreme eigenvalues over all samples.
    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }
    pub fn moduli(&self) -> Option<&Moduli> {
        self.moduli.as_ref()
    }
    pub fn samples(&self) -> &[QuadForm3] {
        &self.samples
    }
}

/// Shorthand for the pointwise reduction of a whole field.
pub fn reduce_field(field: &MaterialField) -> Result<ReducedField> {
    field.reduce()
}

/// Checks the two structural flags given a sample-equality predicate on flat
/// indices laid out as `(k, j₁, j₂)`.
fn structure_flags(
    nodes: usize,
    grid: [usize; 2],
    same: impl Fn(usize, usize) -> bool,
) -> (bool, bool) {
    let plane = grid[0] * grid[1];
    let x3_independent = (1..nodes).all(|k| (0..plane).all(|p| same(k * plane + p, p)));
    let layered = (0..nodes).all(|k| {
        (0..grid[0]).all(|j1| {
            let base = k * plane + j1 * grid[1];
            (1..grid[1]).all(|j2| same(base + j2, base))
        })
    });
    (x3_independent, layered)
}

/// Lagrange basis weights of the interpolant through `nodes`, at `x`.
pub(crate) fn lagrange_weights(nodes: &[f64], x: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|i| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &xj)| (x - xj) / (nodes[i] - xj))
                .product()
        })
        .collect()
}

impl ReducedField {
    fn index(&self, k: usize, j: [usize; 2]) -> usize {
        (k * self.grid[0] + j[0] % self.grid[0]) * self.grid[1] + j[1] % self.grid[1]
    }

    pub fn sample(&self, k: usize, j: [usize; 2]) -> Result<&QuadForm2> {
        if k >= self.x3_rule.len() {
            return Err(Error::IndexOutOfRange(format!(
                "x3 node {k} of {}",
                self.x3_rule.len()
            )));
        }
        Ok(&self.samples[self.index(k, j)])
    }

    pub fn grid(&self) -> [usize; 2] {
        self.grid
    }
    pub fn x3_rule(&self) -> &Rule {
        &self.x3_rule
    }
    pub fn flags(&self) -> Flags {
        self.flags
    }
    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }
    pub fn samples(&self) -> &[QuadForm2] {
        &self.samples
    }

    /// True when every sample is the same (up to the flag tolerance).
    pub fn is_y_independent(&self) -> bool {
        let plane = self.grid[0] * self.grid[1];
        let scale = self.bounds.1;
        (0..self.x3_rule.len()).all(|k| {
            (1..plane).all(|p| {
                forms_close(
                    self.samples[k * plane + p].matrix(),
                    self.samples[k * plane].matrix(),
                    scale,
                )
            })
        })
    }

    pub(crate) fn plane_len(&self) -> usize {
        self.grid[0] * self.grid[1]
    }

    /// Test hook: stiffens one sample so that downstream solvers disagree
    /// with the oracles.
    #[doc(hidden)]
    pub fn inject_fault(&mut self) {
        let q = self.samples[0].scaled(3.0);
        self.samples[0] = q;
    }
}
