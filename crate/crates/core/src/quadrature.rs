//! Gauss–Legendre rules.

use std::f64::consts::PI;

/// Nodes and weights of a 1D quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// `n`-point Gauss–Legendre rule on `[a, b]`, exact for polynomials of
/// degree `2n - 1`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Rule {
    assert!(n > 0, "empty quadrature rule");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = mid - half * x;
        nodes[n - 1 - i] = mid + half * x;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    Rule { nodes, weights }
}

/// Gauss–Legendre rule on the thickness interval `I = [-1/2, 1/2]`.
pub fn thickness_rule(n: usize) -> Rule {
    gauss_legendre(n, -0.5, 0.5)
}

/// `cells` equal subintervals of `[a, b]`, each with an `n`-point rule.
pub fn composite_gauss(cells: usize, n: usize, a: f64, b: f64) -> Rule {
    let base = gauss_legendre(n, 0.0, 1.0);
    let width = (b - a) / cells as f64;
    let mut nodes = Vec::with_capacity(cells * n);
    let mut weights = Vec::with_capacity(cells * n);
    for c in 0..cells {
        let left = a + width * c as f64;
        for (x, w) in base.iter() {
            nodes.push(left + width * x);
            weights.push(width * w);
        }
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
