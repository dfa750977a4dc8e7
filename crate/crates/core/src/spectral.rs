//! 2D FFTs on the collocation grid and truncated Fourier mode sets.
//!
//! Grids are stored row-major with `j₁` as the slow index. `forward`
//! returns the Fourier coefficients `f̂(ξ) = mean_y f(y) e^{-2πiξ·y}` and
//! `inverse` the trigonometric sum `f(y) = Σ f̂(ξ) e^{2πiξ·y}`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft2 {
    n: [usize; 2],
    rows_fwd: Arc<dyn Fft<f64>>,
    rows_inv: Arc<dyn Fft<f64>>,
    cols_fwd: Arc<dyn Fft<f64>>,
    cols_inv: Arc<dyn Fft<f64>>,
    transposed: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(n: [usize; 2]) -> Self {
        let mut planner = FftPlanner::new();
        let rows_fwd = planner.plan_fft_forward(n[1]);
        let rows_inv = planner.plan_fft_inverse(n[1]);
        let cols_fwd = planner.plan_fft_forward(n[0]);
        let cols_inv = planner.plan_fft_inverse(n[0]);
        let scratch_len = [&rows_fwd, &rows_inv, &cols_fwd, &cols_inv]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Fft2 {
            n,
            rows_fwd,
            rows_inv,
            cols_fwd,
            cols_inv,
            transposed: vec![Complex64::default(); n[0] * n[1]],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> [usize; 2] {
        self.n
    }

    /// Grid values to normalized Fourier coefficients, in place.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.transform(data, true);
        let s = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    /// Fourier coefficients to grid values, in place.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    fn transform(&mut self, data: &mut [Complex64], forward: bool) {
        let [n1, n2] = self.n;
        assert_eq!(data.len(), n1 * n2);
        let (rows, cols) = if forward {
            (&self.rows_fwd, &self.cols_fwd)
        } else {
            (&self.rows_inv, &self.cols_inv)
        };
        if n2 > 1 {
            rows.process_with_scratch(data, &mut self.scratch);
        }
        if n1 > 1 {
            for j1 in 0..n1 {
                for j2 in 0..n2 {
                    self.transposed[j2 * n1 + j1] = data[j1 * n2 + j2];
                }
            }
            cols.process_with_scratch(&mut self.transposed, &mut self.scratch);
            for j1 in 0..n1 {
                for j2 in 0..n2 {
                    data[j1 * n2 + j2] = self.transposed[j2 * n1 + j1];
                }
            }
        }
    }
}

/// Flat grid index of the frequency `ξ`.
pub fn freq_slot(xi: [i64; 2], n: [usize; 2]) -> usize {
    let a = xi[0].rem_euclid(n[0] as i64) as usize;
    let b = xi[1].rem_euclid(n[1] as i64) as usize;
    a * n[1] + b
}

/// Frequencies `{-N..N}² \ {0}` in a fixed order; the position of `-ξ` is
/// stored alongside each entry.
#[derive(Debug, Clone)]
pub struct ModeSet {
    pub max_mode: usize,
    pub modes: Vec<[i64; 2]>,
    pub mirror: Vec<usize>,
}

impl ModeSet {
    pub fn new(max_mode: usize, include_zero: bool) -> Self {
        let n = max_mode as i64;
        let mut modes = Vec::new();
        for a in -n..=n {
            for b in -n..=n {
                if include_zero || (a, b) != (0, 0) {
                    modes.push([a, b]);
                }
            }
        }
        let pos = |xi: [i64; 2]| {
            modes
                .iter()
                .position(|&m| m == xi)
                .expect("mode set is symmetric")
        };
        let mirror = modes.iter().map(|&[a, b]| pos([-a, -b])).collect();
        ModeSet {
            max_mode,
            modes,
            mirror,
        }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

/// Smallest power-of-two grid size free of aliasing for `N` modes.
pub fn min_grid(max_mode: usize) -> usize {
    (2 * (2 * max_mode + 1)).next_power_of_two()
}
