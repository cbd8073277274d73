//! Experiment orchestration for `iic-lab`: configuration, seeding, parallel
//! trials, CSV results and a JSON manifest per run.

pub mod config;
mod experiments;
mod output;

use std::path::Path;
use std::time::Instant;

use thiserror::Error;

pub use config::{ExperimentConfig, Kind, ModelConfig};
pub use output::{write_run, Manifest, Table};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Schema(String),
    #[error("resource guard: {0}")]
    Guard(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("output: {0}")]
    Io(String),
}

impl RunError {
    /// Process exit status: 1 usage or schema, 2 resource guard, 3 solver
    /// or numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Schema(_) | RunError::Io(_) => 1,
            RunError::Guard(_) => 2,
            RunError::Numeric(_) => 3,
        }
    }
}

impl From<iic_core::Error> for RunError {
    fn from(e: iic_core::Error) -> Self {
        use iic_core::Error as E;
        match e {
            E::InvalidParameter(_) | E::InvalidEdge(_) | E::Format(_) => RunError::Schema(e.to_string()),
            E::BoxOverflow { .. } | E::ResourceLimit(_) | E::AttemptsExhausted { .. } => RunError::Guard(e.to_string()),
            E::SolverFailure { .. } | E::Fit(_) | E::NoCrossing { .. } => RunError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

/// Counts of samples or trials that carry a quality flag.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Flags {
    pub budget_exceeded: u64,
    pub truncation_hit: u64,
    pub solver_failure: u64,
}

/// Result of one experiment before it is written.
#[derive(Debug)]
pub struct RunOutput {
    pub table: Table,
    pub flags: Flags,
    /// Experiment-specific summary for the manifest.
    pub summary: serde_json::Value,
    /// Number of seeds derived from the master seed.
    pub seeds: u64,
    /// Sample graphs to store next to the table.
    pub graphs: Vec<(String, iic_core::GraphSample)>,
    /// Set when a guard stopped the run early; the table is partial.
    pub failure: Option<RunError>,
}

/// Wall-clock guard checked between work units.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Deadline {
    start: Instant,
    limit: Option<f64>,
}

impl Deadline {
    pub(crate) fn new(limit: Option<f64>) -> Self {
        Deadline { start: Instant::now(), limit }
    }

    pub(crate) fn check(&self) -> Result<(), RunError> {
        match self.limit {
            Some(l) if self.start.elapsed().as_secs_f64() > l => {
                Err(RunError::Guard(format!("wall-clock limit of {l} s reached")))
            }
            _ => Ok(()),
        }
    }
}

/// Validates the configuration and runs the experiment.
pub fn run(kind: Kind, config: &ExperimentConfig) -> Result<RunOutput, RunError> {
    config.validate(kind)?;
    experiments::dispatch(kind, config)
}

/// [`run`] followed by [`write_run`]; returns the manifest and the exit
/// status the run deserves.
pub fn run_to_dir(kind: Kind, config: &ExperimentConfig, out: &Path) -> Result<(Manifest, i32), RunError> {
    let start = Instant::now();
    let output = run(kind, config)?;
    let code = output.failure.as_ref().map_or(0, RunError::exit_code);
    let manifest = write_run(kind, config, &output, out, start.elapsed().as_secs_f64())?;
    Ok((manifest, code))
}
