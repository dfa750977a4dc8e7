use std::fmt;

/// Failure of a subcommand, carrying its exit code class.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configs or problem parameters.
    Config(String),
    /// A solver failed or a check exceeded its tolerance.
    Solver(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Solver(m) => write!(f, "solver error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<platehom::Error> for CliError {
    fn from(e: platehom::Error) -> Self {
        use platehom::Error as E;
        match e {
            E::NotConverged { .. } | E::TensorNotSpd(_) | E::SingularBlock | E::DimensionCap { .. } => {
                CliError::Solver(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
