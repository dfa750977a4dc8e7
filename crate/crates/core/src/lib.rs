//! Effective bending stiffness of periodic composite Kirchhoff plates.
//!
//! The crate computes the relaxed plate density `Q₂ʳᵉˡ` of a periodic
//! material by spectral cell-problem solvers, checks it against closed forms
//! and dense reference solvers, and simulates the recovery-sequence energies
//! of thin plates whose period scales between `h` and `√h`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cell_solver;
pub mod cg;
pub mod expr;
pub mod gamma_solver;
pub mod material;
pub mod oracles;
pub mod quadform;
pub mod quadrature;
pub mod recovery;
pub mod spectral;

pub use cell_solver::{
    dimred_bar, effective_tensor, homogenize, solve_cell, CellProblem, CellSolution,
    EffectiveTensor, SolverOptions,
};
pub use gamma_solver::{
    gamma_limit_study, solve_gamma, GammaProblem, GammaReport, GammaRow, GammaSolution,
};
pub use material::{MaterialConfig, MaterialField, ReducedField};
pub use quadform::{
    check_bounds, iota, isotropic, reduce2d, QuadForm2, QuadForm3, QuadraticForm, Sym2, Sym3,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid moduli: {0}")]
    InvalidModuli(String),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("form is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("out-of-plane block is singular")]
    SingularBlock,
    #[error("material config: {0}")]
    Config(String),
    #[error("expression: {0}")]
    Expression(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("conjugate gradient did not converge: residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },
    #[error("effective tensor is not positive definite (smallest eigenvalue {0:e})")]
    TensorNotSpd(f64),
    #[error("dense system dimension {dim} exceeds the cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("quadrature under-resolved: {0}")]
    Resolution(String),
}

pub type Result<T> = std::result::Result<T, Error>;
