//! The recovery deformation `u^h` and its exact scaled gradient.
//!
//! ```text
//! u^h = u + h x₃ n + h(V + h x₃ μ) − ε² n Φ + h ε² x₃ R(∇Φ, 0)
//!       + h ε R(ζ, 0) + h² ∫_{-1/2}^{x₃} R ḡ dt
//! ```
//!
//! with `Φ(x′) = φ(x′, x′/ε)` and similarly for `ζ`, `ḡ`. The gradient is
//! obtained by forward-mode automatic differentiation of this expression.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SVector, Vector3};
use num_dual::{jacobian, DualNum, DualSVec64};
use serde::{Deserialize, Serialize};

use super::isometry::{build_isometry, Isometry, IsometryKind, SurfacePoint};
use crate::{Error, Result};

/// One term `amp · t^p · cos(2πξ·y + phase)` of a corrector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub amp: f64,
    pub xi: [i64; 2],
    #[serde(default)]
    pub phase: f64,
    /// Power of `x₃` (0 or 1); only `ḡ` may depend on `x₃`.
    #[serde(default)]
    pub x3_power: u8,
}

/// Smooth factor `χ(x′)` multiplying every corrector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    #[default]
    One,
    /// `sin²(πx₁) sin²(πx₂)`, vanishing on `∂S`.
    Bump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzConfig {
    pub isometry: IsometryKind,
    /// Amplitudes `a` of the displacement `V = a sin(πx₁) sin(πx₂)`.
    #[serde(default)]
    pub displacement: [f64; 3],
    #[serde(default)]
    pub envelope: Envelope,
    #[serde(default)]
    pub zeta: [Vec<Term>; 2],
    #[serde(default)]
    pub phi: Vec<Term>,
    #[serde(default)]
    pub g: [Vec<Term>; 3],
}

impl AnsatzConfig {
    pub fn zero(isometry: IsometryKind) -> Self {
        AnsatzConfig {
            isometry,
            displacement: [0.0; 3],
            envelope: Envelope::One,
            zeta: Default::default(),
            phi: Vec::new(),
            g: Default::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryAnsatz {
    pub config: AnsatzConfig,
    pub iso: Isometry,
}

fn check_terms(name: &str, terms: &[Term], allow_x3: bool) -> Result<()> {
    for t in terms {
        if !t.amp.is_finite() || !t.phase.is_finite() {
            return Err(Error::Config(format!("{name}: non-finite coefficient")));
        }
        if t.x3_power > 1 || (!allow_x3 && t.x3_power != 0) {
            return Err(Error::Config(format!("{name}: unsupported x3 power {}", t.x3_power)));
        }
        // The cell average must vanish: a constant in y is only allowed
        // against the mean-zero profile t.
        if t.xi == [0, 0] && t.x3_power == 0 {
            return Err(Error::Config(format!("{name}: term with zero frequency is not mean-zero")));
        }
    }
    Ok(())
}

impl RecoveryAnsatz {
    pub fn new(config: AnsatzConfig) -> Result<Self> {
        let iso = build_isometry(config.isometry)?;
        check_terms("zeta", &config.zeta[0], false)?;
        check_terms("zeta", &config.zeta[1], false)?;
        check_terms("phi", &config.phi, false)?;
        for g in &config.g {
            check_terms("g", g, true)?;
        }
        if config.displacement.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("displacement: non-finite amplitude".into()));
        }
        Ok(RecoveryAnsatz { config, iso })
    }

    /// Largest corrector frequency per direction.
    pub fn max_frequency(&self) -> usize {
        let c = &self.config;
        c.zeta
            .iter()
            .chain(c.g.iter())
            .chain(std::iter::once(&c.phi))
            .flat_map(|ts| ts.iter())
            .map(|t| t.xi[0].unsigned_abs().max(t.xi[1].unsigned_abs()) as usize)
            .max()
            .unwrap_or(0)
    }

    fn envelope<D: DualNum<Primitive = f64> + Copy>(&self, x1: D, x2: D) -> (D, [D; 2]) {
        match self.config.envelope {
            Envelope::One => (D::from(1.0), [D::from(0.0); 2]),
            Envelope::Bump => {
                let (s1, c1) = (x1 * PI).sin_cos();
                let (s2, c2) = (x2 * PI).sin_cos();
                let (q1, q2) = (s1 * s1, s2 * s2);
                (q1 * q2, [s1 * c1 * q2 * (2.0 * PI), q1 * s2 * c2 * (2.0 * PI)])
            }
        }
    }

    /// `V`, `∂₁V`, `∂₂V`.
    fn displacement<D: DualNum<Primitive = f64> + Copy>(&self, x1: D, x2: D) -> [[D; 3]; 3] {
        let (s1, c1) = (x1 * PI).sin_cos();
        let (s2, c2) = (x2 * PI).sin_cos();
        let a = self.config.displacement;
        let b = [s1 * s2, c1 * s2 * PI, s1 * c2 * PI];
        std::array::from_fn(|k| std::array::from_fn(|i| b[k] * a[i]))
    }

    /// `μ = (I − n⊗n)(∂₁V ∧ ∂₂u + ∂₁u ∧ ∂₂V)`.
    fn mu<D: DualNum<Primitive = f64> + Copy>(&self, p: &SurfacePoint<D>, dv: &[[D; 3]; 3]) -> [D; 3] {
        let w = add(cross(dv[1], p.d2u), cross(p.d1u, dv[2]));
        let nw = dot(p.n, w);
        std::array::from_fn(|i| w[i] - p.n[i] * nw)
    }
}

fn cross<D: DualNum<Primitive = f64> + Copy>(a: [D; 3], b: [D; 3]) -> [D; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn add<D: DualNum<Primitive = f64> + Copy>(a: [D; 3], b: [D; 3]) -> [D; 3] {
    std::array::from_fn(|i| a[i] + b[i])
}

fn dot<D: DualNum<Primitive = f64> + Copy>(a: [D; 3], b: [D; 3]) -> D {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Value and y-gradient of `Σ amp t^p cos(2πξ·y + phase)`, with `t^p`
/// replaced by `profile[p]`.
fn trig_sum<D: DualNum<Primitive = f64> + Copy>(terms: &[Term], y: [D; 2], profile: [D; 2]) -> (D, [D; 2]) {
    let mut v = D::from(0.0);
    let mut g = [D::from(0.0); 2];
    for t in terms {
        let th = y[0] * (2.0 * PI * t.xi[0] as f64) + y[1] * (2.0 * PI * t.xi[1] as f64) + t.phase;
        let (s, c) = th.sin_cos();
        let a = profile[t.x3_power as usize] * t.amp;
        v += c * a;
        g[0] -= s * a * (2.0 * PI * t.xi[0] as f64);
        g[1] -= s * a * (2.0 * PI * t.xi[1] as f64);
    }
    (v, g)
}

/// y-Hessian of `Σ amp cos(2πξ·y + phase)` (x₃-independent terms).
fn trig_hessian(terms: &[Term], y: [f64; 2]) -> [[f64; 2]; 2] {
    let mut h = [[0.0; 2]; 2];
    for t in terms {
        let th = 2.0 * PI * (t.xi[0] as f64 * y[0] + t.xi[1] as f64 * y[1]) + t.phase;
        let k = -4.0 * PI * PI * t.amp * th.cos();
        for a in 0..2 {
            for b in 0..2 {
                h[a][b] += k * (t.xi[a] * t.xi[b]) as f64;
            }
        }
    }
    h
}

/// Recovery deformation at one thickness `h` with period `ε = 1/k`,
/// `h = k^{-3/2}`.
#[derive(Debug, Clone)]
pub struct Recovery {
    pub ansatz: RecoveryAnsatz,
    pub k: usize,
    pub h: f64,
    pub eps: f64,
}

/// Builds `u^h`, snapping `ε = h^{2/3}` to the nearest `1/k`.
pub fn build_recovery(ansatz: &RecoveryAnsatz, h: f64) -> Result<Recovery> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidProblem(format!("h must lie in (0, 1), got {h}")));
    }
    let k = h.powf(-2.0 / 3.0).round() as usize;
    Recovery::with_period(ansatz, k)
}

impl Recovery {
    pub fn with_period(ansatz: &RecoveryAnsatz, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Resolution(format!(
                "period 1/{k} is not small; need k >= 2"
            )));
        }
        let kf = k as f64;
        Ok(Recovery {
            ansatz: ansatz.clone(),
            k,
            h: kf.powf(-1.5),
            eps: 1.0 / kf,
        })
    }

    /// `u^h(x)` for any dual number type.
    pub fn eval<D: DualNum<Primitive = f64> + Copy>(&self, x: [D; 3]) -> [D; 3] {
        let (h, eps) = (self.h, self.eps);
        let an = &self.ansatz;
        let cfg = &an.config;
        let p = an.iso.at(x[0], x[1]);
        let y = [x[0] / eps, x[1] / eps];
        let x3 = x[2];
        let dv = an.displacement(x[0], x[1]);
        let mu = an.mu(&p, &dv);
        let (chi, dchi) = an.envelope(x[0], x[1]);
        let flat = [D::from(1.0), D::from(0.0)];

        let (phi, dphi_y) = trig_sum(&cfg.phi, y, flat);
        let big_phi = chi * phi;
        let grad_phi: [D; 2] = std::array::from_fn(|a| dchi[a] * phi + chi * dphi_y[a] / eps);
        let zeta: [D; 2] = std::array::from_fn(|a| chi * trig_sum(&cfg.zeta[a], y, flat).0);
        // ∫_{-1/2}^{x₃} t^p dt for p = 0, 1.
        let primitive = [x3 + 0.5, (x3 * x3 - 0.25) * 0.5];
        let gint: [D; 3] = std::array::from_fn(|i| chi * trig_sum(&cfg.g[i], y, primitive).0);

        let bend = p.frame_apply([grad_phi[0], grad_phi[1], D::from(0.0)]);
        let memb = p.frame_apply([zeta[0], zeta[1], D::from(0.0)]);
        let trans = p.frame_apply(gint);
        std::array::from_fn(|i| {
            p.u[i] + p.n[i] * x3 * h + (dv[0][i] + mu[i] * x3 * h) * h - p.n[i] * big_phi * (eps * eps)
                + bend[i] * x3 * (h * eps * eps)
                + memb[i] * (h * eps)
                + trans[i] * (h * h)
        })
    }

    pub fn deformation(&self, x: [f64; 3]) -> Vector3<f64> {
        Vector3::from(self.eval(x))
    }

    /// `∇_h u^h = (∂₁u^h, ∂₂u^h, h⁻¹∂₃u^h)`, exact to rounding.
    pub fn scaled_gradient(&self, x: [f64; 3]) -> Matrix3<f64> {
        let (_, jac) = jacobian(
            |v: SVector<DualSVec64<3>, 3>| SVector::from(self.eval([v[0], v[1], v[2]])),
            &SVector::from(x),
        );
        let mut f: Matrix3<f64> = jac;
        f.column_mut(2).scale_mut(1.0 / self.h);
        f
    }

    fn pieces(&self, x: [f64; 3]) -> Pieces {
        let an = &self.ansatz;
        let cfg = &an.config;
        let p = an.iso.at(x[0], x[1]);
        let y = [x[0] / self.eps, x[1] / self.eps];
        let dv = an.displacement(x[0], x[1]);
        let mu = an.mu(&p, &dv);
        let (chi, _) = an.envelope(x[0], x[1]);
        let flat = [1.0, 0.0];
        let (_, dphi) = trig_sum(&cfg.phi, y, flat);
        let hphi = trig_hessian(&cfg.phi, y);
        let mut dzeta = [[0.0; 2]; 2];
        for a in 0..2 {
            dzeta[a] = trig_sum(&cfg.zeta[a], y, flat).1;
        }
        let profile = [1.0, x[2]];
        let gbar: [f64; 3] = std::array::from_fn(|i| chi * trig_sum(&cfg.g[i], y, profile).0);
        let v = |a: [f64; 3]| Vector3::from(a);
        Pieces {
            tangents: [v(p.d1u), v(p.d2u)],
            n: v(p.n),
            dn: [v(p.d1n), v(p.d2n)],
            dv: [v(dv[1]), v(dv[2])],
            mu: v(mu),
            chi,
            dphi,
            hphi,
            dzeta,
            gbar,
        }
    }

    /// The limit strain `ι(x₃Π + q_V) + 𝒰(ζ, φ, g)` at `(x′, x₃)` and cell
    /// point `y`, with `g = (ḡ₁/2, ḡ₂/2, ḡ₃)`.
    pub fn limit_strain(&self, x: [f64; 3], y: [f64; 2]) -> Matrix3<f64> {
        limit_strain(&self.ansatz, x, y)
    }

    /// `Rᵀ∇_h u^h − I − εA_φ − hM` at one point, with `M` the O(h) terms of
    /// the gradient expansion.
    pub fn gradient_expansion_residual(&self, x: [f64; 3]) -> Matrix3<f64> {
        let f = self.scaled_gradient(x);
        let pc = self.pieces(x);
        let r = Matrix3::from_columns(&[pc.tangents[0], pc.tangents[1], pc.n]);
        let mut skew = Matrix3::zeros();
        for a in 0..2 {
            skew[(a, 2)] = pc.chi * pc.dphi[a];
            skew[(2, a)] = -pc.chi * pc.dphi[a];
        }
        let mut m = Matrix3::zeros();
        for a in 0..2 {
            for b in 0..2 {
                m[(a, b)] = pc.tangents[a].dot(&pc.dv[b])
                    + x[2] * pc.tangents[a].dot(&pc.dn[b])
                    + pc.chi * (x[2] * pc.hphi[a][b] + pc.dzeta[a][b]);
            }
            m[(a, 2)] = pc.mu.dot(&pc.tangents[a]);
            m[(2, a)] = pc.n.dot(&pc.dv[a]);
        }
        for i in 0..3 {
            m[(i, 2)] += pc.gbar[i];
        }
        r.transpose() * f - Matrix3::identity() - skew * self.eps - m * self.h
    }

    /// `(∇_h u^h)ᵀ∇_h u^h − I − 2h·E` with `E` the limit strain.
    pub fn metric_expansion_residual(&self, x: [f64; 3]) -> Matrix3<f64> {
        let f = self.scaled_gradient(x);
        let y = [x[0] / self.eps, x[1] / self.eps];
        f.transpose() * f - Matrix3::identity() - self.limit_strain(x, y) * (2.0 * self.h)
    }

    /// `|n·∂_αV + μ·∂_αu|` maximized over `α`.
    pub fn normal_identity_residual(&self, x: [f64; 2]) -> f64 {
        let pc = self.pieces([x[0], x[1], 0.0]);
        (0..2)
            .map(|a| (pc.n.dot(&pc.dv[a]) + pc.mu.dot(&pc.tangents[a])).abs())
            .fold(0.0, f64::max)
    }
}

/// Limit strain of an ansatz; `y` is the cell variable.
pub fn limit_strain(ansatz: &RecoveryAnsatz, x: [f64; 3], y: [f64; 2]) -> Matrix3<f64> {
    let cfg = &ansatz.config;
    let p = ansatz.iso.at(x[0], x[1]);
    let dv = ansatz.displacement(x[0], x[1]);
    let (chi, _) = ansatz.envelope(x[0], x[1]);
    let hphi = trig_hessian(&cfg.phi, y);
    let flat = [1.0, 0.0];
    let dz = [trig_sum(&cfg.zeta[0], y, flat).1, trig_sum(&cfg.zeta[1], y, flat).1];
    let profile = [1.0, x[2]];
    let g: [f64; 3] = std::array::from_fn(|i| chi * trig_sum(&cfg.g[i], y, profile).0);
    let t = [Vector3::from(p.d1u), Vector3::from(p.d2u)];
    let dn = [Vector3::from(p.d1n), Vector3::from(p.d2n)];
    let dvv = [Vector3::from(dv[1]), Vector3::from(dv[2])];
    let mut e = Matrix3::zeros();
    for a in 0..2 {
        for b in 0..2 {
            let qv = 0.5 * (t[a].dot(&dvv[b]) + t[b].dot(&dvv[a]));
            let pi = t[a].dot(&dn[b]);
            let sym_dz = 0.5 * (dz[a][b] + dz[b][a]);
            e[(a, b)] = qv + x[2] * pi + chi * (x[2] * hphi[a][b] + sym_dz);
        }
        e[(a, 2)] = 0.5 * g[a];
        e[(2, a)] = 0.5 * g[a];
    }
    e[(2, 2)] = g[2];
    e
}

struct Pieces {
    tangents: [Vector3<f64>; 2],
    n: Vector3<f64>,
    dn: [Vector3<f64>; 2],
    dv: [Vector3<f64>; 2],
    mu: Vector3<f64>,
    chi: f64,
    dphi: [f64; 2],
    hphi: [[f64; 2]; 2],
    dzeta: [[f64; 2]; 2],
    gbar: [f64; 3],
}

#[cfg(test)]
mod tests {
    use super::*;

    fn term(amp: f64, xi: [i64; 2]) -> Term {
        Term { amp, xi, phase: 0.0, x3_power: 0 }
    }

    fn rich(kind: IsometryKind) -> RecoveryAnsatz {
        let mut c = AnsatzConfig::zero(kind);
        c.displacement = [0.2, -0.1, 0.3];
        c.envelope = Envelope::Bump;
        c.phi = vec![term(0.02, [1, 0]), term(0.01, [1, 1])];
        c.zeta = [vec![term(0.05, [0, 1])], vec![term(0.03, [1, -1])]];
        c.g = [
            vec![term(0.1, [1, 0])],
            vec![Term { amp: 0.2, xi: [0, 0], phase: 0.0, x3_power: 1 }],
            vec![term(0.1, [0, 1])],
        ];
        RecoveryAnsatz::new(c).unwrap()
    }

    fn samples() -> Vec<[f64; 3]> {
        let mut out = Vec::new();
        for i in 0..7 {
            for j in 0..5 {
                for &x3 in &[-0.5, -0.1, 0.3, 0.5] {
                    out.push([0.05 + 0.13 * i as f64, 0.07 + 0.19 * j as f64, x3]);
                }
            }
        }
        out
    }

    #[test]
    fn flat_zero_ansatz_is_the_scaled_identity() {
        let an = RecoveryAnsatz::new(AnsatzConfig::zero(IsometryKind::Flat)).unwrap();
        let rec = Recovery::with_period(&an, 8).unwrap();
        for x in samples() {
            let u = rec.deformation(x);
            assert!((u - Vector3::new(x[0], x[1], rec.h * x[2])).norm() < 1e-15);
            assert!((rec.scaled_gradient(x) - Matrix3::identity()).amax() < 1e-14);
        }
    }

    #[test]
    fn cylinder_metric_without_correctors() {
        let an = RecoveryAnsatz::new(AnsatzConfig::zero(IsometryKind::Cylinder { radius: 1.0 })).unwrap();
        let rec = Recovery::with_period(&an, 16).unwrap();
        for x in samples() {
            let f = rec.scaled_gradient(x);
            // FᵀF = I + 2h x₃ ι(Π) + h² x₃² ι(Π²) with Π = diag(1, 0).
            let mut expected = Matrix3::identity();
            let t = rec.h * x[2];
            expected[(0, 0)] += 2.0 * t + t * t;
            assert!((f.transpose() * f - expected).amax() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let rec = Recovery::with_period(&rich(IsometryKind::Cylinder { radius: 1.3 }), 4).unwrap();
        let x = [0.31, 0.57, 0.2];
        let f = rec.scaled_gradient(x);
        let d = 1e-6;
        for j in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += d;
            xm[j] -= d;
            let col = (rec.deformation(xp) - rec.deformation(xm)) / (2.0 * d);
            let col = if j == 2 { col / rec.h } else { col };
            assert!((col - f.column(j)).amax() < 1e-7, "column {j}");
        }
    }

    #[test]
    fn normal_identity_holds() {
        let rec = Recovery::with_period(&rich(IsometryKind::Cylinder { radius: 0.7 }), 4).unwrap();
        for x in samples() {
            assert!(rec.normal_identity_residual([x[0], x[1]]) < 1e-12);
        }
    }

    #[test]
    fn rejects_non_mean_zero_correctors() {
        let mut c = AnsatzConfig::zero(IsometryKind::Flat);
        c.phi = vec![term(1.0, [0, 0])];
        assert!(RecoveryAnsatz::new(c).is_err());
        let mut c = AnsatzConfig::zero(IsometryKind::Flat);
        c.zeta[0] = vec![Term { amp: 1.0, xi: [1, 0], phase: 0.0, x3_power: 1 }];
        assert!(RecoveryAnsatz::new(c).is_err());
        let an = RecoveryAnsatz::new(AnsatzConfig::zero(IsometryKind::Flat)).unwrap();
        assert!(Recovery::with_period(&an, 1).is_err());
        assert!(build_recovery(&an, 1.5).is_err());
        assert_eq!(build_recovery(&an, 8f64.powf(-1.5)).unwrap().k, 8);
    }
}
