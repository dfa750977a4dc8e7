//! Subcommand bodies. Each runs from a fully resolved, serializable config
//! so that a result document can be replayed.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use platehom::gamma_solver::GammaRow;
use platehom::recovery::{convergence_study, AnsatzConfig, ConvergenceRow, EnergyOptions, RecoveryAnsatz};
use platehom::{
    effective_tensor, gamma_limit_study, solve_cell, CellProblem, MaterialConfig, MaterialField, SolverOptions,
    Sym2,
};

use crate::error::{CliError, CliResult};
use crate::record::{blob_digest, write_csv};
use crate::validate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogenizeConfig {
    pub material: MaterialConfig,
    /// `(A₁₁, A₂₂, A₁₂)`.
    pub a: [f64; 3],
    pub modes: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorConfig {
    pub material: MaterialConfig,
    pub modes: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSweepConfig {
    pub material: MaterialConfig,
    pub a: [f64; 3],
    pub gammas: Vec<f64>,
    pub modes: usize,
    pub tol: f64,
    /// Fixed x₃ mesh; `None` adapts it to each γ.
    pub x3_elems: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    #[serde(default)]
    pub inject_fault: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverConfig {
    pub material: MaterialConfig,
    pub ansatz: AnsatzConfig,
    pub ks: Vec<usize>,
    pub points_per_period: usize,
    pub x3_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunConfig {
    Homogenize(HomogenizeConfig),
    Tensor(TensorConfig),
    GammaSweep(GammaSweepConfig),
    Validate(ValidateConfig),
    Recover(RecoverConfig),
}

pub enum Table {
    Gamma(Vec<GammaRow>),
    Recover(Vec<ConvergenceRow>),
}

impl Table {
    pub fn write(&self, path: &Path) -> CliResult<()> {
        match self {
            Table::Gamma(rows) => write_csv(path, rows),
            Table::Recover(rows) => write_csv(path, rows),
        }
    }
}

pub struct Outcome {
    pub outputs: Value,
    pub table: Option<Table>,
    /// Set when the run completed but a check failed.
    pub failure: Option<String>,
}

impl Outcome {
    fn plain(outputs: Value) -> Self {
        Outcome {
            outputs,
            table: None,
            failure: None,
        }
    }
}

pub fn load_material(path: &Path) -> CliResult<MaterialConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let config = MaterialConfig::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(config)
}

pub fn load_ansatz(path: &Path) -> CliResult<AnsatzConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))
}

fn options(modes: usize, tol: f64) -> SolverOptions {
    SolverOptions {
        modes,
        tol,
        max_iter: None,
    }
}

fn sym(a: [f64; 3]) -> Sym2 {
    Sym2::new(a[0], a[1], a[2])
}

impl RunConfig {
    pub fn command(&self) -> &'static str {
        match self {
            RunConfig::Homogenize(_) => "homogenize",
            RunConfig::Tensor(_) => "tensor",
            RunConfig::GammaSweep(_) => "gamma-sweep",
            RunConfig::Validate(_) => "validate",
            RunConfig::Recover(_) => "recover",
        }
    }

    pub fn to_value(&self) -> Value {
        let v = match self {
            RunConfig::Homogenize(c) => serde_json::to_value(c),
            RunConfig::Tensor(c) => serde_json::to_value(c),
            RunConfig::GammaSweep(c) => serde_json::to_value(c),
            RunConfig::Validate(c) => serde_json::to_value(c),
            RunConfig::Recover(c) => serde_json::to_value(c),
        };
        v.expect("config serializes")
    }

    pub fn from_value(command: &str, config: Value) -> CliResult<Self> {
        let bad = |e: serde_json::Error| CliError::Config(format!("embedded config: {e}"));
        Ok(match command {
            "homogenize" => RunConfig::Homogenize(serde_json::from_value(config).map_err(bad)?),
            "tensor" => RunConfig::Tensor(serde_json::from_value(config).map_err(bad)?),
            "gamma-sweep" => RunConfig::GammaSweep(serde_json::from_value(config).map_err(bad)?),
            "validate" => RunConfig::Validate(serde_json::from_value(config).map_err(bad)?),
            "recover" => RunConfig::Recover(serde_json::from_value(config).map_err(bad)?),
            other => return Err(CliError::Config(format!("unknown command {other:?} in record"))),
        })
    }

    pub fn material(&self) -> Option<&MaterialConfig> {
        match self {
            RunConfig::Homogenize(c) => Some(&c.material),
            RunConfig::Tensor(c) => Some(&c.material),
            RunConfig::GammaSweep(c) => Some(&c.material),
            RunConfig::Recover(c) => Some(&c.material),
            RunConfig::Validate(_) => None,
        }
    }

    pub fn material_digest(&self) -> Option<String> {
        self.material().map(|m| blob_digest(m.to_toml().as_bytes()))
    }

    pub fn run(&self) -> CliResult<Outcome> {
        match self {
            RunConfig::Homogenize(c) => homogenize(c),
            RunConfig::Tensor(c) => tensor(c),
            RunConfig::GammaSweep(c) => gamma_sweep(c),
            RunConfig::Validate(c) => validate::run(c.inject_fault),
            RunConfig::Recover(c) => recover(c),
        }
    }
}

fn homogenize(c: &HomogenizeConfig) -> CliResult<Outcome> {
    let field = MaterialField::load(&c.material)?.reduce()?;
    let sol = solve_cell(&CellProblem {
        field: &field,
        a: sym(c.a),
        options: options(c.modes, c.tol),
    })?;
    Ok(Outcome::plain(json!({
        "value": sol.energy,
        "value_quadratic": sol.energy_quadratic,
        "b": [sol.b.a11(), sol.b.a22(), sol.b.a12()],
        "zeta_h1": sol.zeta_h1(),
        "phi_h2": sol.phi_h2(),
        "residual": sol.residual,
        "iterations": sol.iterations,
        "conjugate_asymmetry": sol.conjugate_asymmetry(),
    })))
}

fn tensor(c: &TensorConfig) -> CliResult<Outcome> {
    let field = MaterialField::load(&c.material)?.reduce()?;
    let t = effective_tensor(&field, &options(c.modes, c.tol))?;
    let m = t.matrix();
    let rows: Vec<[f64; 3]> = (0..3).map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]]).collect();
    let ev = t.eigenvalues();
    Ok(Outcome::plain(json!({
        "matrix": rows,
        "eigenvalues": [ev[0], ev[1], ev[2]],
        "residual": t.residual,
    })))
}

fn gamma_sweep(c: &GammaSweepConfig) -> CliResult<Outcome> {
    let field = MaterialField::load(&c.material)?;
    let report = gamma_limit_study(&field, &sym(c.a), &c.gammas, &options(c.modes, c.tol), c.x3_elems)?;
    Ok(Outcome {
        outputs: json!({
            "relaxed": report.relaxed,
            "final_gap": report.final_gap(),
            "gaps_shrink": report.gaps_shrink(platehom::gamma_solver::GAP_SLACK),
            "rows": report.rows,
        }),
        table: Some(Table::Gamma(report.rows.clone())),
        failure: None,
    })
}

fn recover(c: &RecoverConfig) -> CliResult<Outcome> {
    let field = MaterialField::load(&c.material)?;
    let ansatz = RecoveryAnsatz::new(c.ansatz.clone())?;
    let opts = EnergyOptions {
        points_per_period: c.points_per_period,
        x3_points: c.x3_points,
    };
    let report = convergence_study(&ansatz, &field, &c.ks, &opts)?;
    Ok(Outcome {
        outputs: serde_json::to_value(&report).expect("report serializes"),
        table: Some(Table::Recover(report.rows.clone())),
        failure: None,
    })
}
