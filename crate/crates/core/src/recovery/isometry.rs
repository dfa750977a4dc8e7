//! Closed-form isometric immersions of the unit square.

use nalgebra::{Matrix3, Vector3};
use num_dual::DualNum;
use serde::{Deserialize, Serialize};

use crate::quadform::Sym2;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IsometryKind {
    Flat,
    /// `u(x′) = (r sin(x₁/r), x₂, r cos(x₁/r))`.
    Cylinder { radius: f64 },
}

/// Mid-surface data at one point: `u`, its tangents, the normal
/// `n = ∂₁u ∧ ∂₂u` and the normal's derivatives.
#[derive(Debug, Clone, Copy)]
pub struct SurfacePoint<D> {
    pub u: [D; 3],
    pub d1u: [D; 3],
    pub d2u: [D; 3],
    pub n: [D; 3],
    pub d1n: [D; 3],
    pub d2n: [D; 3],
}

impl<D: DualNum<Primitive = f64> + Copy> SurfacePoint<D> {
    /// `R w = w₁∂₁u + w₂∂₂u + w₃n`.
    pub fn frame_apply(&self, w: [D; 3]) -> [D; 3] {
        std::array::from_fn(|i| self.d1u[i] * w[0] + self.d2u[i] * w[1] + self.n[i] * w[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Isometry {
    kind: IsometryKind,
}

pub fn build_isometry(kind: IsometryKind) -> Result<Isometry> {
    if let IsometryKind::Cylinder { radius } = kind {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "cylinder radius must be positive, got {radius}"
            )));
        }
    }
    Ok(Isometry { kind })
}

fn to_vec(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

impl Isometry {
    pub fn kind(&self) -> IsometryKind {
        self.kind
    }

    pub fn at<D: DualNum<Primitive = f64> + Copy>(&self, x1: D, x2: D) -> SurfacePoint<D> {
        let zero = D::from(0.0);
        let one = D::from(1.0);
        match self.kind {
            IsometryKind::Flat => SurfacePoint {
                u: [x1, x2, zero],
                d1u: [one, zero, zero],
                d2u: [zero, one, zero],
                n: [zero, zero, one],
                d1n: [zero; 3],
                d2n: [zero; 3],
            },
            IsometryKind::Cylinder { radius: r } => {
                let (s, c) = (x1 / r).sin_cos();
                SurfacePoint {
                    u: [s * r, x2, c * r],
                    d1u: [c, zero, -s],
                    d2u: [zero, one, zero],
                    n: [s, zero, c],
                    d1n: [c / r, zero, -s / r],
                    d2n: [zero; 3],
                }
            }
        }
    }

    pub fn point(&self, x: [f64; 2]) -> Vector3<f64> {
        to_vec(self.at(x[0], x[1]).u)
    }

    pub fn normal(&self, x: [f64; 2]) -> Vector3<f64> {
        to_vec(self.at(x[0], x[1]).n)
    }

    /// `R = (∂₁u, ∂₂u, n)`.
    pub fn frame(&self, x: [f64; 2]) -> Matrix3<f64> {
        let p = self.at(x[0], x[1]);
        Matrix3::from_columns(&[to_vec(p.d1u), to_vec(p.d2u), to_vec(p.n)])
    }

    /// `Π_{αβ} = ∂_α u · ∂_β n`. For the cylinder with the normal
    /// `n = ∂₁u ∧ ∂₂u` this is `diag(1/r, 0)`.
    pub fn second_form(&self, x: [f64; 2]) -> Sym2 {
        let p = self.at(x[0], x[1]);
        let d = |a: [f64; 3], b: [f64; 3]| to_vec(a).dot(&to_vec(b));
        Sym2::from_matrix(&nalgebra::Matrix2::new(
            d(p.d1u, p.d1n),
            d(p.d1u, p.d2n),
            d(p.d2u, p.d1n),
            d(p.d2u, p.d2n),
        ))
    }

    /// `max |(∇′u)ᵀ∇′u − I₂|` at one point.
    pub fn isometry_residual(&self, x: [f64; 2]) -> f64 {
        let r = self.frame(x);
        let g = r.fixed_view::<3, 2>(0, 0).transpose() * r.fixed_view::<3, 2>(0, 0);
        (g - nalgebra::Matrix2::identity()).amax()
    }
}
