//! Feedback gains fitted through the transcribed problem.
//!
//! The force law is linear in the sensed signals,
//!
//! ```text
//! F_l = φ1·θX + φ2·θ̇X + φ3·θ̇Z + φ4·(Z − Z0) + φ5·Ż,    F_r = −F_l
//! ```
//!
//! and the gains are global decision variables of the optimal control
//! problem. [`dominant_term`] ranks the five contributions along the fitted
//! trajectory; [`resynthesize_phi3`] refits with the yaw-rate term alone.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nlp::NlpSolver;
use crate::transcription::{
    sensed, ForceMode, ScenarioConfig, TrajectorySolution, TranscribedProblem, TranscriptionError,
};
use crate::vehicle::{SteeringProfile, VehicleConfig, VehicleState};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("synthesis needs force mode {expected:?}, got {got:?}")]
    ForceMode { expected: ForceMode, got: ForceMode },
    #[error(transparent)]
    Transcription(#[from] TranscriptionError),
    #[error("look-up table: {0}")]
    Table(#[from] csv::Error),
    #[error("look-up table: {0}")]
    Io(#[from] io::Error),
}

/// Names of the five feedback terms, in gain order.
pub const TERM_NAMES: [&str; 5] = ["theta_x", "theta_x_dot", "theta_z_dot", "z_minus_z0", "z_dot"];

/// Gains of the linear force law. Units N/rad, N·s/rad, N·s/rad, N/m, N·s/m.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhiCoefficients(pub [f64; 5]);

impl PhiCoefficients {
    pub fn phi3_only(phi3: f64) -> Self {
        Self([0.0, 0.0, phi3, 0.0, 0.0])
    }

    pub fn phi3(&self) -> f64 {
        self.0[2]
    }

    /// The five contributions `φi·si` at one state.
    pub fn terms(&self, cfg: &VehicleConfig, s: &VehicleState) -> [f64; 5] {
        let x = feedback_signals(cfg, s);
        std::array::from_fn(|i| self.0[i] * x[i])
    }

    /// `F_l` at one state.
    pub fn left_force(&self, cfg: &VehicleConfig, s: &VehicleState) -> f64 {
        self.terms(cfg, s).iter().sum()
    }
}

/// Sensed signals `(θX, θ̇X, θ̇Z, Z − Z0, Ż)`.
pub fn feedback_signals(cfg: &VehicleConfig, s: &VehicleState) -> [f64; 5] {
    sensed(cfg, &s.0)
}

fn require(sc: &ScenarioConfig, expected: ForceMode) -> Result<(), SynthesisError> {
    if sc.forces == expected {
        Ok(())
    } else {
        Err(SynthesisError::ForceMode { expected, got: sc.forces })
    }
}

/// Fits all five gains. The trajectory's `F_l` is the force law evaluated on
/// its own states.
pub fn synthesize(
    cfg: &VehicleConfig,
    steering: &SteeringProfile,
    scenario: &ScenarioConfig,
    solver: &dyn NlpSolver,
) -> Result<(PhiCoefficients, TrajectorySolution), SynthesisError> {
    require(scenario, ForceMode::Phi)?;
    let problem = TranscribedProblem::with_reference(cfg, scenario, steering)?;
    let sol = problem.solve(solver)?;
    let phi = PhiCoefficients(sol.phi.unwrap_or_default());
    Ok((phi, sol))
}

/// Size of one term along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermMagnitude {
    pub index: usize,
    pub name: &'static str,
    pub max_abs: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermRanking {
    /// Largest RMS first.
    pub terms: Vec<TermMagnitude>,
    /// Set when the leading RMS is shared, which includes all-zero gains.
    pub tie: bool,
}

impl TermRanking {
    /// Index of the leading term, `None` on a tie.
    pub fn leader(&self) -> Option<usize> {
        (!self.tie).then(|| self.terms[0].index)
    }
}

/// Ranks the terms of the force law by RMS over the trajectory nodes.
pub fn dominant_term(cfg: &VehicleConfig, phi: &PhiCoefficients, states: &[VehicleState]) -> TermRanking {
    let mut sum_sq = [0.0; 5];
    let mut max_abs = [0.0f64; 5];
    for s in states {
        for (i, v) in phi.terms(cfg, s).iter().enumerate() {
            sum_sq[i] += v * v;
            max_abs[i] = max_abs[i].max(v.abs());
        }
    }
    let count = states.len().max(1) as f64;
    let mut terms: Vec<TermMagnitude> = (0..5)
        .map(|i| TermMagnitude { index: i, name: TERM_NAMES[i], max_abs: max_abs[i], rms: (sum_sq[i] / count).sqrt() })
        .collect();
    // stable sort keeps gain order among equals
    terms.sort_by(|a, b| b.rms.total_cmp(&a.rms));
    let tie = terms[0].rms == terms[1].rms;
    TermRanking { terms, tie }
}

/// Result of the yaw-rate-only refit.
#[derive(Debug, Clone, PartialEq)]
pub struct Phi3Fit {
    pub phi3: f64,
    pub solution: TrajectorySolution,
    /// False when the yaw rate vanishes along the whole trajectory, so the
    /// objective does not depend on the gain.
    pub identifiable: bool,
}

/// Yaw-rate below this, rad/s, counts as no excitation.
const YAW_RATE_FLOOR: f64 = 1e-9;

/// Fits `F_l = φ3·θ̇Z` alone.
pub fn resynthesize_phi3(
    cfg: &VehicleConfig,
    steering: &SteeringProfile,
    scenario: &ScenarioConfig,
    solver: &dyn NlpSolver,
) -> Result<Phi3Fit, SynthesisError> {
    require(scenario, ForceMode::Phi3)?;
    let problem = TranscribedProblem::with_reference(cfg, scenario, steering)?;
    let solution = problem.solve(solver)?;
    let phi3 = solution.phi.map_or(0.0, |p| p[2]);
    let identifiable = solution.states.iter().any(|s| s.yaw_rate().abs() > YAW_RATE_FLOOR);
    Ok(Phi3Fit { phi3, solution, identifiable })
}

/// One row of the maneuver-to-gain table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutRow {
    pub maneuver: String,
    pub peak_deg: f64,
    pub reverse_deg: f64,
    pub ramp_up: f64,
    pub reversal: f64,
    pub phi3: f64,
    pub objective: f64,
    pub converged: bool,
}

pub fn write_lut(path: &Path, rows: &[LutRow]) -> Result<(), SynthesisError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_lut(path: &Path) -> Result<Vec<LutRow>, SynthesisError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
