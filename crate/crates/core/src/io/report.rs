//! Machine-readable run report (`report.json`).
//!
//! Every command writes the same field set. Fields that do not apply to a
//! command are `null`, never omitted.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RunConfig, RunError};
use crate::closed_loop::{ClosedLoopRun, ModeComparison};
use crate::nlp::SolveReport;
use crate::rollover::RolloverSummary;
use crate::synthesis::{LutRow, TermRanking};
use crate::transcription::TrajectorySolution;

/// Bumped when a field is added, removed or renamed.
pub const REPORT_SCHEMA: &str = "rollstab-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEntry {
    pub name: String,
    pub max_abs: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopReport {
    pub gain: f64,
    pub completed: bool,
    pub rollover_event: Option<f64>,
    pub all_satisfied: bool,
    pub violation_intervals: Vec<(f64, f64)>,
    pub single_branch_intervals: Vec<(f64, f64)>,
    pub max_abs_left_force: f64,
    pub worst_path: f64,
    pub comparison: Option<ModeComparison>,
}

impl ClosedLoopReport {
    pub fn new(run: &ClosedLoopRun, comparison: Option<ModeComparison>) -> Self {
        Self {
            gain: run.phi3,
            completed: run.completed(),
            rollover_event: run.rollover_event,
            all_satisfied: run.all_satisfied(),
            violation_intervals: run.violation_intervals.clone(),
            single_branch_intervals: run.single_branch_intervals.clone(),
            max_abs_left_force: run.max_abs_left_force(),
            worst_path: run.worst_path,
            comparison,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub command: String,
    pub seed: u64,
    pub maneuver: String,
    /// Solver status, or `completed` / `rollover` for closed-loop runs.
    pub status: String,
    /// Every solve of the run converged (true when nothing was solved).
    pub converged: bool,
    pub iterations: Option<usize>,
    /// Tracking error, m²·s.
    pub objective: Option<f64>,
    pub kkt: Option<KktReport>,
    pub phi: Option<[f64; 5]>,
    pub phi3: Option<f64>,
    pub phi3_identifiable: Option<bool>,
    pub dominant_terms: Option<Vec<TermEntry>>,
    pub worst_disjunction: Option<f64>,
    pub worst_path: Option<f64>,
    pub max_abs_left_force: Option<f64>,
    pub rollover: Option<RolloverSummary>,
    pub closed_loop: Option<ClosedLoopReport>,
    pub sweep: Option<Vec<LutRow>>,
    pub message: String,
    /// Effective configuration, built-in vehicle values included.
    pub config: RunConfig,
}

impl Report {
    pub fn new(command: &str, cfg: &RunConfig, seed: u64) -> Self {
        Self {
            schema: REPORT_SCHEMA.into(),
            command: command.into(),
            seed,
            maneuver: cfg.maneuver_name(),
            status: "completed".into(),
            converged: true,
            iterations: None,
            objective: None,
            kkt: None,
            phi: None,
            phi3: None,
            phi3_identifiable: None,
            dominant_terms: None,
            worst_disjunction: None,
            worst_path: None,
            max_abs_left_force: None,
            rollover: None,
            closed_loop: None,
            sweep: None,
            message: String::new(),
            config: cfg.clone(),
        }
    }

    pub fn record_solve(&mut self, r: &SolveReport) {
        self.status = r.status.as_str().into();
        self.converged &= r.status == crate::nlp::SolveStatus::Converged;
        self.iterations = Some(r.iterations);
        self.kkt = Some(KktReport {
            stationarity: r.kkt.stationarity,
            feasibility: r.kkt.feasibility,
            complementarity: r.kkt.complementarity,
        });
        if !r.message.is_empty() {
            self.message = r.message.clone();
        }
    }

    pub fn record_solution(&mut self, sol: &TrajectorySolution) {
        self.record_solve(&sol.report);
        self.objective = Some(sol.objective);
        self.phi = sol.phi;
        self.worst_disjunction = Some(sol.worst_disjunction());
        self.worst_path = Some(sol.worst_path());
        self.max_abs_left_force = Some(sol.max_abs_left_force());
    }

    pub fn record_ranking(&mut self, ranking: &TermRanking) {
        self.dominant_terms = Some(
            ranking.terms.iter().map(|t| TermEntry { name: t.name.into(), max_abs: t.max_abs, rms: t.rms }).collect(),
        );
    }

    pub fn write(&self, path: &Path) -> Result<(), RunError> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|e| RunError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
    }
}
