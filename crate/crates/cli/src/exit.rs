use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use covsteer_core::{SpecError, SteerError};

/// Process exit status. The numeric values are part of the interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Usage = 1,
    Infeasible = 2,
    NoConvergence = 3,
    Io = 4,
    Mismatch = 5,
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> Self {
        ExitCode::from(e as u8)
    }
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn new(exit: Exit, message: impl Into<String>) -> Self {
        Self {
            exit,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self::new(Exit::Io, format!("cannot write {}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        let exit = match e {
            SpecError::Shape { .. } => Exit::Usage,
            SpecError::Io { .. } | SpecError::Parse(_) => Exit::Io,
        };
        Self::new(exit, e.to_string())
    }
}

impl From<SteerError> for CliError {
    fn from(e: SteerError) -> Self {
        use SteerError::*;
        let exit = match e {
            DimensionMismatch(_) | StepOutOfRange { .. } => Exit::Usage,
            Infeasible { .. }
            | SingularGramian { .. }
            | ReducedUncontrollable { .. }
            | SingularInitialCovariance { .. } => Exit::Infeasible,
            SingularClosedLoop { .. }
            | NoConvergence { .. }
            | SecondOrderViolation { .. }
            | IndefiniteStep { .. }
            | MeanResidual { .. } => Exit::NoConvergence,
        };
        let message = match e {
            Infeasible { .. } => format!(
                "{e}\nthe problem is solvable only if SigmaF - G_N G_N' is positive semidefinite: \
                 the noise entering at the last step cannot be steered away"
            ),
            _ => e.to_string(),
        };
        Self::new(exit, message)
    }
}
