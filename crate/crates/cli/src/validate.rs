//! The quick oracle suite behind `platehom validate`.

use std::f64::consts::PI;

use serde::Serialize;
use serde_json::json;

use platehom::oracles::{
    dense_gamma_oracle, dense_oracle, layered_1d_oracle, layered_closed_form, plane_stress, LayeredConstants,
    OracleReport,
};
use platehom::recovery::{energy3d, AnsatzConfig, EnergyOptions, IsometryKind, Recovery, RecoveryAnsatz};
use platehom::{
    homogenize, isotropic, reduce2d, solve_gamma, GammaProblem, MaterialField, QuadraticForm, ReducedField,
    SolverOptions, Sym2,
};

use crate::commands::Outcome;
use crate::error::CliResult;

#[derive(Debug, Clone, Serialize)]
struct Check {
    #[serde(flatten)]
    report: OracleReport,
    tolerance: f64,
    pass: bool,
}

fn check(report: OracleReport, tolerance: f64) -> Check {
    let pass = report.rel_gap <= tolerance;
    Check {
        report,
        tolerance,
        pass,
    }
}

/// Reduced field as the solvers see it; the fault hook corrupts it.
fn solver_view(field: &MaterialField, fault: bool) -> CliResult<ReducedField> {
    let mut red = field.reduce()?;
    if fault {
        red.inject_fault();
    }
    Ok(red)
}

fn anisotropic_field() -> CliResult<MaterialField> {
    Ok(MaterialField::from_isotropic_fn([16, 16], 3, |x3, y| {
        let s = (2.0 * PI * y[0]).sin() * (2.0 * PI * y[1]).cos();
        (1.5 + 0.5 * s + 0.2 * x3, 0.8 + 0.3 * (2.0 * PI * (y[0] + y[1])).cos())
    })?)
}

pub fn run(inject_fault: bool) -> CliResult<Outcome> {
    let mut checks = Vec::new();
    let a = Sym2::new(1.0, 0.3, -0.2);

    for (mu, lambda) in [(1.0, 1.0), (2.0, 0.5), (0.7, 3.0)] {
        let solver = reduce2d(&isotropic(mu, lambda)?)?.eval(&a);
        let oracle = plane_stress(mu, lambda)?.eval(&a);
        checks.push(check(
            OracleReport::new("plane_stress", format!("mu={mu} lambda={lambda}"), oracle, solver),
            1e-12,
        ));
    }

    let q = isotropic(1.0, 1.0)?;
    let homog = MaterialField::homogeneous(q, [16, 16], 4)?;
    let value = homogenize(&solver_view(&homog, inject_fault)?, &a, &SolverOptions::with_modes(2))?;
    let oracle = reduce2d(&q)?.eval(&a) / 12.0;
    checks.push(check(OracleReport::new("one_twelfth_rule", "isotropic(1,1) N=2", oracle, value), 1e-10));

    let n = 64;
    let w = vec![1.0 / n as f64; n];
    let ys: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let mu: Vec<f64> = ys.iter().map(|y| 2.0 + (2.0 * PI * y).cos()).collect();
    let lambda: Vec<f64> = ys.iter().map(|y| 1.0 + 0.5 * (2.0 * PI * y).sin()).collect();
    let q2 = mu
        .iter()
        .zip(&lambda)
        .map(|(&m, &l)| reduce2d(&isotropic(m, l)?))
        .collect::<platehom::Result<Vec<_>>>()?;
    let oracle = layered_1d_oracle(&q2, &w, &a)?;
    let closed = layered_closed_form(&mu, &lambda, &w, &a, LayeredConstants::Verified)?;
    checks.push(check(
        OracleReport::new("layered_closed_form", "mu=2+cos lambda=1+sin/2", oracle, closed),
        1e-8,
    ));

    let layered = MaterialField::from_isotropic_fn([64, 64], 4, |_, y| (2.0 + (2.0 * PI * y[0]).cos(), 0.0))?;
    let e11 = Sym2::basis(0);
    let value = homogenize(&solver_view(&layered, false)?, &e11, &SolverOptions::with_modes(12))?;
    checks.push(check(
        OracleReport::new("layered_solver", "mu=2+cos lambda=0 N=12 A=e11", 3f64.sqrt() / 12.0, value),
        1e-6,
    ));

    let field = anisotropic_field()?;
    let red = field.reduce()?;
    for modes in [1, 2] {
        let oracle = dense_oracle(&red, &a, modes)?;
        let value = homogenize(&solver_view(&field, inject_fault)?, &a, &SolverOptions::with_modes(modes))?;
        checks.push(check(OracleReport::new("dense_cell", format!("N={modes}"), oracle, value), 1e-9));
    }

    let gamma_homog = MaterialField::homogeneous(q, [8, 8], 2)?;
    let oracle = reduce2d(&q)?.eval(&a) / 12.0;
    for gamma in [1.0, 0.05] {
        let sol = solve_gamma(&GammaProblem {
            field: &gamma_homog,
            a,
            gamma,
            x3_elems: 2,
            options: SolverOptions::with_modes(1),
        })?;
        checks.push(check(
            OracleReport::new("gamma_homogeneous", format!("gamma={gamma}"), oracle, sol.energy),
            1e-8,
        ));
    }
    let small = MaterialField::from_isotropic_fn([8, 8], 3, |x3, y| {
        let s = (2.0 * PI * y[0]).sin() * (2.0 * PI * y[1]).cos();
        (1.5 + 0.5 * s + 0.3 * x3, 0.7 + 0.3 * (2.0 * PI * y[1]).sin())
    })?;
    let sol = solve_gamma(&GammaProblem {
        field: &small,
        a,
        gamma: 0.5,
        x3_elems: 2,
        options: SolverOptions::with_modes(1),
    })?;
    let oracle = dense_gamma_oracle(&small, &a, 0.5, 1, 2)?;
    checks.push(check(OracleReport::new("dense_gamma", "gamma=0.5 N=1 M=2", oracle, sol.energy), 1e-9));

    let ansatz = RecoveryAnsatz::new(AnsatzConfig::zero(IsometryKind::Cylinder { radius: 1.0 }))?;
    let rec = Recovery::with_period(&ansatz, 8)?;
    let cyl = MaterialField::homogeneous(q, [4, 4], 2)?;
    let energy = energy3d(&rec, &cyl, &EnergyOptions::default())?;
    // Exact energy of the unrelaxed Kirchhoff-Love cylinder.
    let oracle = 1.5 / 12.0 + 1.5 * rec.h * rec.h / 320.0;
    checks.push(check(OracleReport::new("cylinder_energy", "r=1 k=8", oracle, energy), 1e-12));

    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.report.name.as_str()).collect();
    let failure = (!failed.is_empty()).then(|| format!("checks over tolerance: {}", failed.join(", ")));
    Ok(Outcome {
        outputs: json!({
            "passed": failed.is_empty(),
            "checks": checks,
        }),
        table: None,
        failure,
    })
}
