//! Quadratic forms on symmetric matrices in an orthonormal Voigt basis.
//!
//! Symmetric 2×2 matrices are stored as `(A₁₁, A₂₂, √2·A₁₂)` and symmetric
//! 3×3 matrices as `(G₁₁, G₂₂, G₃₃, √2·G₂₃, √2·G₁₃, √2·G₁₂)`. With the √2
//! scaling the Frobenius inner product is the Euclidean one, so a quadratic
//! energy density is just an SPD matrix and its elasticity bounds are its
//! extreme eigenvalues.

use nalgebra::{Matrix2, Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};
use std::ops::{Add, Mul, Neg, Sub};

use crate::{Error, Result};

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Relative symmetry tolerance accepted when building a form from a raw matrix.
const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric 2×2 matrix in Voigt coordinates `(A₁₁, A₂₂, √2·A₁₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym2(pub Vector3<f64>);

/// Symmetric 3×3 matrix in Voigt coordinates
/// `(G₁₁, G₂₂, G₃₃, √2·G₂₃, √2·G₁₃, √2·G₁₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym3(pub Vector6<f64>);

impl Sym2 {
    pub fn zero() -> Self {
        Sym2(Vector3::zeros())
    }

    /// Builds from matrix entries.
    pub fn new(a11: f64, a22: f64, a12: f64) -> Self {
        Sym2(Vector3::new(a11, a22, SQRT_2 * a12))
    }

    /// The i-th element of the orthonormal Voigt basis.
    pub fn basis(i: usize) -> Self {
        let mut v = Vector3::zeros();
        v[i] = 1.0;
        Sym2(v)
    }

    /// Symmetric part of an arbitrary 2×2 matrix.
    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        Self::new(m[(0, 0)], m[(1, 1)], 0.5 * (m[(0, 1)] + m[(1, 0)]))
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        let o = self.0[2] / SQRT_2;
        Matrix2::new(self.0[0], o, o, self.0[1])
    }

    pub fn a11(&self) -> f64 {
        self.0[0]
    }
    pub fn a22(&self) -> f64 {
        self.0[1]
    }
    pub fn a12(&self) -> f64 {
        self.0[2] / SQRT_2
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[1]
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn coords(&self) -> &Vector3<f64> {
        &self.0
    }
}

impl Sym3 {
    pub fn zero() -> Self {
        Sym3(Vector6::zeros())
    }

    pub fn identity() -> Self {
        Sym3(Vector6::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0))
    }

    pub fn basis(i: usize) -> Self {
        let mut v = Vector6::zeros();
        v[i] = 1.0;
        Sym3(v)
    }

    /// Symmetric part of an arbitrary 3×3 matrix.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Sym3(Vector6::new(
            m[(0, 0)],
            m[(1, 1)],
            m[(2, 2)],
            SQRT_2 * 0.5 * (m[(1, 2)] + m[(2, 1)]),
            SQRT_2 * 0.5 * (m[(0, 2)] + m[(2, 0)]),
            SQRT_2 * 0.5 * (m[(0, 1)] + m[(1, 0)]),
        ))
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let c = &self.0;
        let (g23, g13, g12) = (c[3] / SQRT_2, c[4] / SQRT_2, c[5] / SQRT_2);
        Matrix3::new(c[0], g12, g13, g12, c[1], g23, g13, g23, c[2])
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn coords(&self) -> &Vector6<f64> {
        &self.0
    }
}

macro_rules! impl_vector_ops {
    ($t:ident) => {
        impl Add for $t {
            type Output = $t;
            fn add(self, rhs: $t) -> $t {
                $t(self.0 + rhs.0)
            }
        }
        impl Sub for $t {
            type Output = $t;
            fn sub(self, rhs: $t) -> $t {
                $t(self.0 - rhs.0)
            }
        }
        impl Neg for $t {
            type Output = $t;
            fn neg(self) -> $t {
                $t(-self.0)
            }
        }
        impl Mul<$t> for f64 {
            type Output = $t;
            fn mul(self, rhs: $t) -> $t {
                $t(rhs.0 * self)
            }
        }
    };
}
impl_vector_ops!(Sym2);
impl_vector_ops!(Sym3);

/// The natural injection of symmetric 2×2 matrices into symmetric 3×3
/// matrices (zero third row and column).
pub fn iota(a: &Sym2) -> Sym3 {
    Sym3(Vector6::new(a.0[0], a.0[1], 0.0, 0.0, 0.0, a.0[2]))
}

/// Voigt positions of the in-plane coordinates of `Sym3`, in `Sym2` order.
pub(crate) const IN_PLANE: [usize; 3] = [0, 1, 5];
/// Voigt positions of the coordinates coupled to `e₃` (`G₃₃, √2·G₂₃, √2·G₁₃`).
pub(crate) const OUT_OF_PLANE: [usize; 3] = [2, 3, 4];

/// Common evaluation interface of the two quadratic form types.
pub trait QuadraticForm {
    type Arg;

    fn eval(&self, g: &Self::Arg) -> f64;

    /// Symmetric bilinear form with `bilinear(g, g) == eval(g)`.
    fn bilinear(&self, g: &Self::Arg, h: &Self::Arg) -> f64;
}

/// Quadratic form on `Sym3`, stored as a 6×6 SPD matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadForm3 {
    matrix: Matrix6<f64>,
}

/// Quadratic form on `Sym2`, stored as a 3×3 SPD matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadForm2 {
    matrix: Matrix3<f64>,
}

fn is_symmetric<const D: usize>(m: &nalgebra::SMatrix<f64, D, D>) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() <= SYMMETRY_TOL * scale
}

impl QuadForm3 {
    /// Validates symmetry and positive definiteness.
    pub fn new(matrix: Matrix6<f64>) -> Result<Self> {
        if !matrix.iter().all(|x| x.is_finite()) || !is_symmetric(&matrix) {
            return Err(Error::NotSymmetric);
        }
        let matrix = 0.5 * (matrix + matrix.transpose());
        let form = QuadForm3 { matrix };
        let min = form.eigenvalues().min();
        if min <= 0.0 {
            return Err(Error::NotPositiveDefinite(min));
        }
        Ok(form)
    }

    pub fn identity() -> Self {
        QuadForm3 {
            matrix: Matrix6::identity(),
        }
    }

    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> Vector6<f64> {
        SymmetricEigen::new(self.matrix).eigenvalues
    }

    /// `s · Q` for `s > 0`.
    pub fn scaled(&self, s: f64) -> Self {
        debug_assert!(s > 0.0);
        QuadForm3 {
            matrix: self.matrix * s,
        }
    }

    /// Assembles a form from the isotropic moduli without validation.
    fn isotropic_unchecked(mu: f64, lambda: f64) -> Self {
        let t = Sym3::identity().0;
        QuadForm3 {
            matrix: Matrix6::identity() * mu + t * t.transpose() * (0.5 * lambda),
        }
    }
}

impl QuadForm2 {
    pub fn new(matrix: Matrix3<f64>) -> Result<Self> {
        if !matrix.iter().all(|x| x.is_finite()) || !is_symmetric(&matrix) {
            return Err(Error::NotSymmetric);
        }
        let matrix = 0.5 * (matrix + matrix.transpose());
        let form = QuadForm2 { matrix };
        let min = form.eigenvalues().min();
        if min <= 0.0 {
            return Err(Error::NotPositiveDefinite(min));
        }
        Ok(form)
    }

    pub fn identity() -> Self {
        QuadForm2 {
            matrix: Matrix3::identity(),
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> Vector3<f64> {
        SymmetricEigen::new(self.matrix).eigenvalues
    }

    pub fn scaled(&self, s: f64) -> Self {
        debug_assert!(s > 0.0);
        QuadForm2 {
            matrix: self.matrix * s,
        }
    }
}

impl QuadraticForm for QuadForm3 {
    type Arg = Sym3;

    fn eval(&self, g: &Sym3) -> f64 {
        g.0.dot(&(self.matrix * g.0))
    }

    fn bilinear(&self, g: &Sym3, h: &Sym3) -> f64 {
        g.0.dot(&(self.matrix * h.0))
    }
}

impl QuadraticForm for QuadForm2 {
    type Arg = Sym2;

    fn eval(&self, a: &Sym2) -> f64 {
        a.0.dot(&(self.matrix * a.0))
    }

    fn bilinear(&self, a: &Sym2, b: &Sym2) -> f64 {
        a.0.dot(&(self.matrix * b.0))
    }
}

/// Isotropic density `μ|G|² + (λ/2)(tr G)²`.
///
/// Negative `λ` is rejected even where `3μ + λ > 0` would keep the form
/// positive definite.
pub fn isotropic(mu: f64, lambda: f64) -> Result<QuadForm3> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidModuli(format!(
            "non-positive shear modulus mu = {mu}"
        )));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidModuli(format!(
            "negative first Lamé parameter lambda = {lambda}"
        )));
    }
    Ok(QuadForm3::isotropic_unchecked(mu, lambda))
}

/// Pointwise plate reduction `Q₂(A) = min_d Q(ι(A) + d⊗e₃)`.
///
/// Since the form only sees the symmetric part, `sym(d⊗e₃)` ranges over the
/// three `e₃`-coupled Voigt coordinates and the minimum is the Schur
/// complement of that block.
pub fn reduce2d(q: &QuadForm3) -> Result<QuadForm2> {
    let m = &q.matrix;
    let pick = |rows: &[usize; 3], cols: &[usize; 3]| {
        Matrix3::from_fn(|i, j| m[(rows[i], cols[j])])
    };
    let aa = pick(&IN_PLANE, &IN_PLANE);
    let ab = pick(&IN_PLANE, &OUT_OF_PLANE);
    let bb = pick(&OUT_OF_PLANE, &OUT_OF_PLANE);
    let chol = bb.cholesky().ok_or(Error::SingularBlock)?;
    let schur = aa - ab * chol.solve(&ab.transpose());
    QuadForm2::new(0.5 * (schur + schur.transpose()))
}

/// True iff every eigenvalue of the Voigt matrix lies in `[c1, c2]`.
pub fn check_bounds(q: &QuadForm3, c1: f64, c2: f64) -> bool {
    // Eigenvalues carry roundoff of a few ulps of the largest entry.
    let slack = 64.0 * f64::EPSILON * q.matrix.amax();
    q.eigenvalues()
        .iter()
        .all(|&e| e >= c1 - slack && e <= c2 + slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn random_spd6(seed: &[f64]) -> QuadForm3 {
        let l = Matrix6::from_fn(|i, j| seed[(i * 6 + j) % seed.len()] * ((i + 2 * j + 1) as f64).sin());
        QuadForm3::new(l * l.transpose() + Matrix6::identity() * 0.1).unwrap()
    }

    #[test]
    fn voigt_roundtrip_and_norms() {
        let m = Matrix3::new(1.0, 0.3, -0.2, 0.3, 2.0, 0.7, -0.2, 0.7, -1.5);
        let s = Sym3::from_matrix(&m);
        assert_relative_eq!(s.to_matrix(), m, epsilon = 1e-15);
        assert_relative_eq!(s.norm(), m.norm(), epsilon = 1e-14);
        let a = Matrix2::new(0.5, -0.25, -0.25, 3.0);
        let s2 = Sym2::from_matrix(&a);
        assert_relative_eq!(s2.to_matrix(), a, epsilon = 1e-15);
        assert_relative_eq!(s2.norm(), a.norm(), epsilon = 1e-14);
    }

    #[test]
    fn iota_examples() {
        assert_eq!(iota(&Sym2::zero()), Sym3::zero());
        assert_eq!(
            iota(&Sym2::new(1.0, 1.0, 0.0)).to_matrix(),
            Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0))
        );
        let g = iota(&Sym2::new(0.0, 0.0, 1.0)).to_matrix();
        let mut expected = Matrix3::zeros();
        expected[(0, 1)] = 1.0;
        expected[(1, 0)] = 1.0;
        assert_relative_eq!(g, expected, epsilon = 1e-15);
    }

    #[test]
    fn eval_identity_form() {
        assert_eq!(QuadForm3::identity().eval(&Sym3::basis(0)), 1.0);
    }

    #[test]
    fn isotropic_examples() {
        let i3 = Sym3::identity();
        assert_relative_eq!(isotropic(1.0, 0.0).unwrap().eval(&i3), 3.0, epsilon = 1e-15);
        assert_relative_eq!(isotropic(1.0, 1.0).unwrap().eval(&i3), 7.5, epsilon = 1e-15);
        let g = Sym3(Vector6::new(0.0, 0.0, 0.0, SQRT_2 * 0.5, 0.0, 0.0));
        assert_relative_eq!(isotropic(2.0, 0.0).unwrap().eval(&g), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn isotropic_rejects_bad_moduli() {
        let err = isotropic(-1.0, 0.0).unwrap_err();
        assert!(err.to_string().contains("non-positive shear modulus"));
        assert!(isotropic(0.0, 1.0).is_err());
        assert!(isotropic(1.0, -0.5).is_err());
    }

    #[test]
    fn reduce2d_examples() {
        let q2 = reduce2d(&isotropic(1.0, 0.0).unwrap()).unwrap();
        assert_relative_eq!(*q2.matrix(), Matrix3::identity(), epsilon = 1e-15);
        let q2 = reduce2d(&isotropic(1.0, 1.0).unwrap()).unwrap();
        assert_relative_eq!(q2.eval(&Sym2::new(1.0, 1.0, 0.0)), 10.0 / 3.0, epsilon = 1e-14);
        assert_eq!(q2.eval(&Sym2::zero()), 0.0);
    }

    #[test]
    fn check_bounds_examples() {
        assert!(check_bounds(&isotropic(1.0, 0.0).unwrap(), 1.0, 1.0));
        assert!(check_bounds(&isotropic(1.0, 1.0).unwrap(), 1.0, 2.5));
        assert!(!check_bounds(&isotropic(1.0, 1.0).unwrap(), 1.5, 3.0));
    }

    #[test]
    fn rejects_non_spd() {
        let mut m = Matrix6::identity();
        m[(0, 0)] = -1.0;
        assert!(matches!(QuadForm3::new(m), Err(Error::NotPositiveDefinite(_))));
        m[(0, 0)] = 1.0;
        m[(0, 1)] = 0.5;
        assert!(matches!(QuadForm3::new(m), Err(Error::NotSymmetric)));
    }

    // Minimizes over d by assembling the 3×3 normal equations from point
    // evaluations of the 3D form only.
    fn brute_force_reduction(q: &QuadForm3, a: &Sym2) -> f64 {
        let dir = |k: usize| {
            let mut m = Matrix3::zeros();
            m[(k, 2)] = 1.0;
            Sym3::from_matrix(&m)
        };
        let g0 = iota(a);
        let mut h = Matrix3::zeros();
        let mut r = Vector3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                h[(i, j)] = 0.25 * (q.eval(&(dir(i) + dir(j))) - q.eval(&(dir(i) - dir(j))));
            }
            r[i] = 0.25 * (q.eval(&(g0 + dir(i))) - q.eval(&(g0 - dir(i))));
        }
        let d = h.lu().solve(&(-r)).unwrap();
        let mut g = g0;
        for k in 0..3 {
            g = g + d[k] * dir(k);
        }
        q.eval(&g)
    }

    proptest! {
        #[test]
        fn homogeneity_and_polarization(seed in prop::collection::vec(-1.0f64..1.0, 36),
                                        g in prop::collection::vec(-2.0f64..2.0, 6),
                                        h in prop::collection::vec(-2.0f64..2.0, 6)) {
            let q = random_spd6(&seed);
            let g = Sym3(Vector6::from_column_slice(&g));
            let h = Sym3(Vector6::from_column_slice(&h));
            let scale = 1.0 + q.eval(&g) + q.eval(&h);
            prop_assert!((q.eval(&(2.0 * g)) - 4.0 * q.eval(&g)).abs() <= 1e-12 * scale);
            let pol = 0.25 * (q.eval(&(g + h)) - q.eval(&(g - h)));
            prop_assert!((q.bilinear(&g, &h) - pol).abs() <= 1e-12 * scale);
            prop_assert!((q.bilinear(&g, &g) - q.eval(&g)).abs() <= 1e-12 * scale);
        }

        #[test]
        fn schur_complement_is_the_minimum(seed in prop::collection::vec(-1.0f64..1.0, 36),
                                           a in prop::collection::vec(-2.0f64..2.0, 3)) {
            let q = random_spd6(&seed);
            let a = Sym2(Vector3::from_column_slice(&a));
            let q2 = reduce2d(&q).unwrap();
            let brute = brute_force_reduction(&q, &a);
            prop_assert!((q2.eval(&a) - brute).abs() <= 1e-10 * brute.abs().max(1e-12));
            prop_assert!(q2.eigenvalues().min() > 0.0);
        }

        #[test]
        fn reduction_is_loewner_monotone(seed in prop::collection::vec(-1.0f64..1.0, 36),
                                         extra in prop::collection::vec(-1.0f64..1.0, 36),
                                         a in prop::collection::vec(-2.0f64..2.0, 3)) {
            let q = random_spd6(&seed);
            let p = Matrix6::from_column_slice(&extra);
            let bigger = QuadForm3::new(q.matrix() + p * p.transpose()).unwrap();
            let a = Sym2(Vector3::from_column_slice(&a));
            let lo = reduce2d(&q).unwrap().eval(&a);
            let hi = reduce2d(&bigger).unwrap().eval(&a);
            prop_assert!(lo <= hi * (1.0 + 1e-12) + 1e-14);
        }

        #[test]
        fn isotropic_reduction_is_rotation_invariant(mu in 0.1f64..5.0, lambda in 0.0f64..5.0,
                                                     theta in 0.0f64..6.3,
                                                     a in prop::collection::vec(-2.0f64..2.0, 3)) {
            let q2 = reduce2d(&isotropic(mu, lambda).unwrap()).unwrap();
            let a = Sym2::new(a[0], a[1], a[2]);
            let r = nalgebra::Rotation2::new(theta).into_inner();
            let rotated = Sym2::from_matrix(&(r.transpose() * a.to_matrix() * r));
            let v = q2.eval(&a);
            prop_assert!((q2.eval(&rotated) - v).abs() <= 1e-12 * v.max(1e-12));
        }
    }
}
