//! Batch runs driven by a TOML file: configuration, artifacts and exit
//! codes.
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | file-system error |
//! | 2 | configuration error |
//! | 3 | solver failure |
//! | 4 | model singularity |

mod config;
mod plot;
mod report;
mod run;
mod table;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{
    ConstraintKind, ForceKind, GuessKind, HessianKind, IntegratorKind, OutputSection, RunConfig, ScenarioSection,
    SimulationSection, SolverSection, SteeringSection,
};
pub use plot::plot_script;
pub use report::{ClosedLoopReport, KktReport, Report, TermEntry, REPORT_SCHEMA};
pub use run::{run_analyze, run_optimize, run_sweep, run_synthesize, run_validate, Outcome, RunOptions};
pub use table::{
    closed_loop_rows, read_trajectory, solution_rows, write_trajectory, TrajectoryRow, TRAJECTORY_COLUMNS,
};

use crate::closed_loop::SimError;
use crate::rollover::RolloverError;
use crate::synthesis::SynthesisError;
use crate::transcription::TranscriptionError;
use crate::vehicle::ModelError;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("model singularity: {0}")]
    Model(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Io { .. } => 1,
            RunError::Config(_) => 2,
            RunError::Solver(_) => 3,
            RunError::Model(_) => 4,
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        RunError::Io { path: path.to_path_buf(), message: e.to_string() }
    }
}

impl From<ModelError> for RunError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidConfig(_) | ModelError::InvalidSteering(_) | ModelError::UnknownProfile(_) => {
                RunError::Config(e.to_string())
            }
            e => RunError::Model(e.to_string()),
        }
    }
}

impl From<TranscriptionError> for RunError {
    fn from(e: TranscriptionError) -> Self {
        match e {
            TranscriptionError::Model { source, .. } | TranscriptionError::Vehicle(source) => source.into(),
            TranscriptionError::Solver(e) => RunError::Solver(e.to_string()),
            other => RunError::Config(other.to_string()),
        }
    }
}

impl From<SimError> for RunError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Model { source, .. } => source.into(),
            SimError::Integration(e) => RunError::Solver(e.to_string()),
            other => RunError::Config(other.to_string()),
        }
    }
}

impl From<SynthesisError> for RunError {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::Transcription(e) => e.into(),
            SynthesisError::ForceMode { .. } => RunError::Config(e.to_string()),
            SynthesisError::Table(e) => RunError::Io { path: PathBuf::new(), message: e.to_string() },
            SynthesisError::Io(e) => RunError::Io { path: PathBuf::new(), message: e.to_string() },
        }
    }
}

impl From<RolloverError> for RunError {
    fn from(e: RolloverError) -> Self {
        match e {
            RolloverError::UndefinedIndex { .. } => RunError::Model(e.to_string()),
            other => RunError::Config(other.to_string()),
        }
    }
}
