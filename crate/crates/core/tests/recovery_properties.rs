use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix6, Rotation3, Vector3};
use proptest::prelude::*;

use platehom::recovery::{
    dist_so3, energy3d, energy_density, strain, two_scale_test, AnsatzConfig, EnergyOptions, Envelope, IsometryKind,
    Recovery, RecoveryAnsatz, Sampler, Term,
};
use platehom::{isotropic, MaterialField, QuadForm3, QuadraticForm, Sym3};

fn spd(seed: &[f64]) -> QuadForm3 {
    let l = Matrix6::from_iterator(seed.iter().copied());
    QuadForm3::new(l * l.transpose() + Matrix6::identity() * 0.2).unwrap()
}

fn matrix(v: &[f64]) -> Matrix3<f64> {
    Matrix3::from_iterator(v.iter().copied())
}

fn phi_term(amp: f64, xi: [i64; 2]) -> Term {
    Term {
        amp,
        xi,
        phase: 0.0,
        x3_power: 0,
    }
}

fn corrected_ansatz() -> RecoveryAnsatz {
    let mut c = AnsatzConfig::zero(IsometryKind::Cylinder { radius: 1.0 });
    c.phi = vec![phi_term(0.02, [1, 0])];
    c.zeta = [vec![phi_term(0.1, [0, 1])], vec![]];
    c.g = [
        vec![],
        vec![],
        vec![Term {
            amp: 0.1,
            xi: [1, 1],
            phase: 0.3,
            x3_power: 1,
        }],
    ];
    c.displacement = [0.1, -0.05, 0.2];
    RecoveryAnsatz::new(c).unwrap()
}

/// Applies a fixed rotation to every deformation gradient.
struct Rotated<'a> {
    inner: &'a Recovery,
    rot: Matrix3<f64>,
}

impl Sampler for Rotated<'_> {
    fn scaled_gradient(&self, x: [f64; 3]) -> Matrix3<f64> {
        self.rot * self.inner.scaled_gradient(x)
    }
    fn thickness(&self) -> f64 {
        self.inner.h
    }
    fn period(&self) -> f64 {
        self.inner.eps
    }
    fn max_frequency(&self) -> usize {
        self.inner.ansatz.max_frequency()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadratic_expansion_at_identity(q in prop::collection::vec(-1.0f64..1.0, 36),
                                       g in prop::collection::vec(-1.0f64..1.0, 9)) {
        let q = spd(&q);
        let g0 = matrix(&g);
        prop_assume!(g0.norm() > 1e-3);
        let dir = g0 / g0.norm();
        let ratios: Vec<f64> = [1e-1, 1e-2, 1e-3].iter().map(|&t| {
            let g = dir * t;
            let lin = q.eval(&Sym3::from_matrix(&((g + g.transpose()) * 0.5)));
            (energy_density(&q, &(Matrix3::identity() + g)) - lin).abs() / (t * t)
        }).collect();
        let scale = q.matrix().amax();
        // The remainder is cubic in |G|.
        for (r, t) in ratios.iter().zip([1e-1, 1e-2, 1e-3]) {
            prop_assert!(*r <= 4.0 * scale * t, "{ratios:?}");
        }
        prop_assert!(ratios[2] < ratios[0] || ratios[0] < 1e-12);
    }

    #[test]
    fn non_degenerate_near_so3(q in prop::collection::vec(-1.0f64..1.0, 36),
                               s in prop::collection::vec(-1.0f64..1.0, 6),
                               axis in prop::collection::vec(-1.0f64..1.0, 3),
                               angle in -PI..PI,
                               size in 1e-4f64..0.1) {
        let q = spd(&q);
        let s = Sym3::from_matrix(&Matrix3::new(s[0], s[5], s[4], s[5], s[1], s[3], s[4], s[3], s[2]));
        prop_assume!(s.norm() > 1e-6);
        let u = Matrix3::identity() + s.to_matrix() * (size / s.norm());
        let axis = Vector3::new(axis[0], axis[1], axis[2]);
        prop_assume!(axis.norm() > 1e-3);
        let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        let f = r.matrix() * u;
        let d = dist_so3(&f);
        prop_assert!((d - size).abs() < 1e-12);
        let c1 = q.eigenvalues().min();
        prop_assert!(energy_density(&q, &f) >= c1 * 0.95 * 0.95 * d * d * (1.0 - 1e-12));
    }

    #[test]
    fn energy_is_frame_indifferent(axis in prop::collection::vec(-1.0f64..1.0, 3), angle in -PI..PI) {
        let axis = Vector3::new(axis[0], axis[1], axis[2]);
        prop_assume!(axis.norm() > 1e-3);
        let rot = *Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix();
        let field = MaterialField::from_isotropic_fn([8, 8], 2, |x3, y| {
            (2.0 + (2.0 * PI * y[0]).cos() + 0.2 * x3, 0.5)
        }).unwrap();
        let rec = Recovery::with_period(&corrected_ansatz(), 2).unwrap();
        let opts = EnergyOptions::default();
        let base = energy3d(&rec, &field, &opts).unwrap();
        let turned = energy3d(&Rotated { inner: &rec, rot }, &field, &opts).unwrap();
        prop_assert!((base - turned).abs() <= 1e-12 * base, "{base} {turned}");
    }

    #[test]
    fn normal_identity_for_any_displacement(a in prop::collection::vec(-1.0f64..1.0, 3),
                                            r in 0.2f64..5.0,
                                            x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let mut c = AnsatzConfig::zero(IsometryKind::Cylinder { radius: r });
        c.displacement = [a[0], a[1], a[2]];
        let rec = Recovery::with_period(&RecoveryAnsatz::new(c).unwrap(), 4).unwrap();
        prop_assert!(rec.normal_identity_residual([x, y]) <= 1e-12);
    }

    #[test]
    fn isometries_stay_isometric(r in 0.05f64..20.0, x in 0.0f64..1.0, y in 0.0f64..1.0) {
        let iso = platehom::recovery::build_isometry(IsometryKind::Cylinder { radius: r }).unwrap();
        prop_assert!(iso.isometry_residual([x, y]) <= 1e-13);
        let frame = iso.frame([x, y]);
        prop_assert!((frame.transpose() * frame - Matrix3::identity()).amax() <= 1e-13);
        prop_assert!((iso.second_form([x, y]).a11() - 1.0 / r).abs() <= 1e-12 / r);
    }
}

#[test]
fn correctors_leave_the_energy_finite_and_bounded_below() {
    let field = MaterialField::homogeneous(isotropic(1.0, 1.0).unwrap(), [4, 4], 2).unwrap();
    let rec = Recovery::with_period(&corrected_ansatz(), 4).unwrap();
    let e = energy3d(&rec, &field, &EnergyOptions::default()).unwrap();
    assert!(e.is_finite() && e > 0.0);
}

#[test]
fn two_scale_of_an_oscillation() {
    let sine = Term {
        amp: 1.0,
        xi: [1, 0],
        phase: -PI / 2.0,
        x3_power: 0,
    };
    let chi = |x: [f64; 3]| 1.0 + x[0] * x[1] + x[2];
    let mut gaps = Vec::new();
    for k in [4usize, 8, 16] {
        let eps = 1.0 / k as f64;
        let f_h = move |x: [f64; 3]| (2.0 * PI * x[0] / eps).sin();
        let cand = |_: [f64; 3], y: [f64; 2]| (2.0 * PI * y[0]).sin();
        let (lhs, rhs) = two_scale_test(&f_h, &chi, &[sine], eps, &cand).unwrap();
        // ½∫χ = ½(1 + 1/4)
        assert!((rhs - 0.625).abs() < 1e-12, "{rhs}");
        gaps.push((lhs - rhs).abs());
    }
    // Exact at every commensurate period, up to the quadrature error.
    assert!(gaps.iter().all(|&g| g < 1e-9), "{gaps:?}");
}

#[test]
fn two_scale_of_a_constant_vanishes() {
    let g = [phi_term(1.0, [1, 2]), phi_term(0.5, [0, 1])];
    let chi = |x: [f64; 3]| (PI * x[0]).sin() * (1.0 + x[1]);
    let lhs: Vec<f64> = [4usize, 8, 16]
        .iter()
        .map(|&k| {
            let (lhs, rhs) = two_scale_test(&|_| 3.0, &chi, &g, 1.0 / k as f64, &|_, _| 3.0).unwrap();
            assert!(rhs.abs() < 1e-13, "{rhs}");
            lhs.abs()
        })
        .collect();
    assert!(lhs.iter().all(|&v| v < 1e-10), "{lhs:?}");
    let bad = [phi_term(1.0, [0, 0])];
    assert!(two_scale_test(&|_| 3.0, &chi, &bad, 0.125, &|_, _| 3.0).is_err());
}

#[test]
fn two_scale_limit_of_the_strain() {
    let mut c = AnsatzConfig::zero(IsometryKind::Cylinder { radius: 1.0 });
    c.phi = vec![phi_term(0.02, [1, 0])];
    c.envelope = Envelope::Bump;
    let ansatz = RecoveryAnsatz::new(c).unwrap();
    let test = phi_term(1.0, [1, 0]);
    let chi = |x: [f64; 3]| x[2] * (1.0 + x[0]);
    let mut gaps = Vec::new();
    for k in [4usize, 8, 16] {
        let rec = Recovery::with_period(&ansatz, k).unwrap();
        let f_h = |x: [f64; 3]| strain(&rec, &[x]).unwrap()[0][(0, 0)];
        let cand = |x: [f64; 3], y: [f64; 2]| rec.limit_strain(x, y)[(0, 0)];
        let (lhs, rhs) = two_scale_test(&f_h, &chi, &[test], rec.eps, &cand).unwrap();
        assert!(rhs.abs() > 1e-4, "{rhs}");
        gaps.push((lhs - rhs).abs());
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}
