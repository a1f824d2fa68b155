//! Experiment orchestration on top of `plent`: run configs, grids, result
//! directories and plot-ready CSV tables.

pub mod config;
pub mod grid;
pub mod plots;
pub mod runner;

use config::FieldError;

pub use config::RunConfig;
pub use grid::ExperimentGrid;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<FieldError>),

    #[error(transparent)]
    Engine(#[from] plent::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    /// Process exit code: 1 for validation problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 1,
            _ => 2,
        }
    }
}

impl From<FieldError> for HarnessError {
    fn from(e: FieldError) -> Self {
        HarnessError::Validation(vec![e])
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}
