use std::io;
use std::path::PathBuf;

use thiserror::Error;

use super::config::ConfigErrors;
use crate::cell_problems::CellError;
use crate::geometry::GeometryError;
use crate::macro_solver::MacroError;
use crate::micro_solver::MicroError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(ConfigErrors),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("I/O error on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl HarnessError {
    /// 2 config, 3 solver, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Solver(_) => 3,
            HarnessError::Io { .. } => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(ConfigErrors(vec![msg.into()]))
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }
}

impl From<ConfigErrors> for HarnessError {
    fn from(e: ConfigErrors) -> Self {
        HarnessError::Config(e)
    }
}

impl From<io::Error> for HarnessError {
    fn from(source: io::Error) -> Self {
        HarnessError::Io {
            path: PathBuf::new(),
            source,
        }
    }
}

impl From<MicroError> for HarnessError {
    fn from(e: MicroError) -> Self {
        match e {
            // A step above the ionic stability bound is a property of the config.
            MicroError::StepTooLarge { .. } | MicroError::InitialJump { .. } | MicroError::Data(_) => {
                HarnessError::config(e.to_string())
            }
            _ => HarnessError::Solver(e.to_string()),
        }
    }
}

impl From<MacroError> for HarnessError {
    fn from(e: MacroError) -> Self {
        match e {
            MacroError::TopologyMismatch(_) | MacroError::Data(_) => HarnessError::config(e.to_string()),
            _ => HarnessError::Solver(e.to_string()),
        }
    }
}

impl From<CellError> for HarnessError {
    fn from(e: CellError) -> Self {
        match e {
            CellError::Coefficients(_) | CellError::Interface(_) | CellError::Geometry(_) => {
                HarnessError::config(e.to_string())
            }
            _ => HarnessError::Solver(e.to_string()),
        }
    }
}

impl From<GeometryError> for HarnessError {
    fn from(e: GeometryError) -> Self {
        HarnessError::config(e.to_string())
    }
}
