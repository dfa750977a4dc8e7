//! `platehom`: relaxed plate densities, effective tensors, γ sweeps, the
//! oracle suite and recovery-sequence studies from the command line.

mod commands;
mod error;
mod record;
mod validate;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use commands::{
    load_ansatz, load_material, GammaSweepConfig, HomogenizeConfig, RecoverConfig, RunConfig, TensorConfig,
    ValidateConfig,
};
use error::{CliError, CliResult};
use record::{document_path, max_rel_diff, resolve, write_text, RunRecord, FORMAT_VERSION};

/// Largest relative drift accepted when replaying a result document.
const REPLAY_TOL: f64 = 1e-14;

#[derive(Debug, Parser)]
#[command(name = "platehom", version, about = "Homogenized bending stiffness of periodic plates")]
struct Cli {
    /// Worker threads for the parallel solves [default: available parallelism]
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Single-threaded run and no wall time in the document, so that
    /// repeated runs are byte-identical
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Output {
    /// Result document path [default: stdout, or <command>.json in $PLATEHOM_OUT_DIR]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Solver {
    /// Fourier truncation N
    #[arg(long, default_value_t = platehom::cell_solver::DEFAULT_MODES)]
    modes: usize,
    /// Relative residual tolerance of the iterative solver
    #[arg(long, default_value_t = platehom::cell_solver::DEFAULT_TOL)]
    tol: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Relaxed density Q₂ʳᵉˡ(A) for one curvature
    Homogenize {
        /// Material TOML file
        #[arg(long)]
        material: PathBuf,
        /// Curvature as "a11,a22,a12"
        #[arg(long, value_parser = parse_triple)]
        a: [f64; 3],
        #[command(flatten)]
        solver: Solver,
        #[command(flatten)]
        output: Output,
    },
    /// Effective 3×3 tensor, in the orthonormal basis (A₁₁, A₂₂, √2A₁₂)
    Tensor {
        #[arg(long)]
        material: PathBuf,
        #[command(flatten)]
        solver: Solver,
        #[command(flatten)]
        output: Output,
    },
    /// Q₂,γ(A) along a decreasing γ sweep, against Q₂ʳᵉˡ(A)
    GammaSweep {
        #[arg(long)]
        material: PathBuf,
        #[arg(long, value_parser = parse_triple)]
        a: [f64; 3],
        /// Comma-separated, strictly decreasing
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        gammas: Vec<f64>,
        /// Fixed number of x₃ elements [default: max(4, ceil(2/γ)) per point]
        #[arg(long)]
        x3_elems: Option<usize>,
        #[command(flatten)]
        solver: Solver,
        /// Also write the sweep table as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Runs the oracle suite; exit 2 if any gap exceeds its tolerance
    Validate {
        #[arg(long, hide = true)]
        inject_fault: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Recovery-sequence energies for ε = 1/k, h = k^(-3/2)
    Recover {
        /// Ansatz TOML file
        #[arg(long)]
        ansatz: PathBuf,
        #[arg(long)]
        material: PathBuf,
        /// Comma-separated, strictly increasing, each at least 2
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        k: Vec<usize>,
        #[arg(long, default_value_t = platehom::recovery::MIN_POINTS_PER_PERIOD)]
        points_per_period: usize,
        #[arg(long, default_value_t = 6)]
        x3_points: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Re-runs the config embedded in a result document and compares
    Replay {
        record: PathBuf,
        #[command(flatten)]
        output: Output,
    },
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got {s:?}"));
    }
    let mut out = [0.0f64; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|_| format!("not a number: {p:?}"))?;
        if !o.is_finite() {
            return Err(format!("not finite: {p:?}"));
        }
    }
    Ok(out)
}

struct Plan {
    config: RunConfig,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
}

fn plan(command: Command) -> CliResult<Result<Plan, (PathBuf, Option<PathBuf>)>> {
    Ok(Ok(match command {
        Command::Homogenize { material, a, solver, output } => Plan {
            config: RunConfig::Homogenize(HomogenizeConfig {
                material: load_material(&material)?,
                a,
                modes: solver.modes,
                tol: solver.tol,
            }),
            out: output.out,
            csv: None,
        },
        Command::Tensor { material, solver, output } => Plan {
            config: RunConfig::Tensor(TensorConfig {
                material: load_material(&material)?,
                modes: solver.modes,
                tol: solver.tol,
            }),
            out: output.out,
            csv: None,
        },
        Command::GammaSweep { material, a, gammas, x3_elems, solver, csv, output } => Plan {
            config: RunConfig::GammaSweep(GammaSweepConfig {
                material: load_material(&material)?,
                a,
                gammas,
                modes: solver.modes,
                tol: solver.tol,
                x3_elems,
            }),
            out: output.out,
            csv,
        },
        Command::Validate { inject_fault, output } => Plan {
            config: RunConfig::Validate(ValidateConfig { inject_fault }),
            out: output.out,
            csv: None,
        },
        Command::Recover { ansatz, material, k, points_per_period, x3_points, csv, output } => Plan {
            config: RunConfig::Recover(RecoverConfig {
                material: load_material(&material)?,
                ansatz: load_ansatz(&ansatz)?,
                ks: k,
                points_per_period,
                x3_points,
            }),
            out: output.out,
            csv,
        },
        Command::Replay { record, output } => return Ok(Err((record, output.out))),
    }))
}

fn execute(config: &RunConfig, deterministic: bool) -> CliResult<(RunRecord, commands::Outcome)> {
    let start = Instant::now();
    let outcome = config.run()?;
    let record = RunRecord {
        format_version: FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: config.command().to_string(),
        config: config.to_value(),
        material_digest: config.material_digest(),
        outputs: outcome.outputs.clone(),
        wall_time_s: (!deterministic).then(|| start.elapsed().as_secs_f64()),
    };
    Ok((record, outcome))
}

fn run_plan(p: Plan, deterministic: bool) -> CliResult<()> {
    let (record, outcome) = execute(&p.config, deterministic)?;
    let doc = document_path(p.out.as_deref(), record.command.as_str());
    write_text(doc.as_deref(), &record.to_json())?;
    if let (Some(path), Some(table)) = (&p.csv, &outcome.table) {
        table.write(path)?;
    }
    match outcome.failure {
        Some(msg) => Err(CliError::Solver(msg)),
        None => Ok(()),
    }
}

fn replay(path: &Path, out: Option<PathBuf>, deterministic: bool) -> CliResult<()> {
    let path = resolve(path);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let old: RunRecord =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if old.format_version != FORMAT_VERSION {
        return Err(CliError::Config(format!("unsupported format-version {}", old.format_version)));
    }
    let config = RunConfig::from_value(&old.command, old.config.clone())?;
    if config.material_digest() != old.material_digest {
        return Err(CliError::Config("material digest does not match the embedded config".into()));
    }
    let (new, outcome) = execute(&config, deterministic)?;
    let drift = max_rel_diff(&old.outputs, &new.outputs);
    let summary = serde_json::json!({
        "record": path.display().to_string(),
        "command": old.command,
        "max_rel_drift": drift,
        "tolerance": REPLAY_TOL,
        "reproduced": drift.is_some_and(|d| d <= REPLAY_TOL),
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    write_text(document_path(out.as_deref(), "replay").as_deref(), &text)?;
    match drift {
        Some(d) if d <= REPLAY_TOL => match outcome.failure {
            Some(msg) => Err(CliError::Solver(msg)),
            None => Ok(()),
        },
        Some(d) => Err(CliError::Solver(format!("replay drifted by {d:e}"))),
        None => Err(CliError::Solver("replayed outputs differ in shape".into())),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        if n == 0 {
            eprintln!("config error: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = plan(cli.command).and_then(|p| match p {
        Ok(p) => run_plan(p, cli.deterministic),
        Err((record, out)) => replay(&record, out, cli.deterministic),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("platehom: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
