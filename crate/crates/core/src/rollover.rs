//! Rollover index and lift-off classification.
//!
//! ```text
//! R = ((F_Z2 + F_Z4) − (F_Z1 + F_Z3)) / ΣF_Zi
//! ```
//!
//! `|R| = 1` is the onset of lift-off on one side. With all loads
//! non-negative `R` stays in `[−1, 1]`; a negative reaction (wheel off the
//! ground, model still attached) pushes `|R|` past one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transcription::TrajectorySolution;
use crate::vehicle::VehicleState;

/// Roll angle bound for the "stabilized" verdict, rad. A proxy: the
/// underlying question of when lift-off becomes rollover has no sharp
/// threshold.
pub const DEFAULT_ROLL_CAP: f64 = 0.35;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RolloverError {
    #[error("rollover index undefined: total vertical load is zero{}", node.map(|n| format!(" at node {n}")).unwrap_or_default())]
    UndefinedIndex { node: Option<usize> },
    #[error("series lengths differ: {times} times, {loads} loads, {states} states")]
    Length { times: usize, loads: usize, states: usize },
    #[error("empty trajectory")]
    Empty,
}

/// Rollover index of the wheel reactions `[F_Z1, F_Z2, F_Z3, F_Z4]`
/// (odd wheels left, even wheels right).
pub fn rollover_index(loads: [f64; 4]) -> Result<f64, RolloverError> {
    let left = loads[0] + loads[2];
    let right = loads[1] + loads[3];
    let total = left + right;
    if total == 0.0 || !total.is_finite() {
        return Err(RolloverError::UndefinedIndex { node: None });
    }
    Ok((right - left) / total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloverSeries {
    pub times: Vec<f64>,
    pub index: Vec<f64>,
    pub lift_off: Vec<bool>,
}

impl RolloverSeries {
    pub fn abs_index(&self) -> impl Iterator<Item = f64> + '_ {
        self.index.iter().map(|r| r.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloverSummary {
    pub max_abs_index: f64,
    /// Closed node-time intervals on which `|R| > 1`.
    pub lift_off_intervals: Vec<(f64, f64)>,
    pub max_abs_roll: f64,
    pub terminal_abs_roll: f64,
    /// `|θ_X|` where `|R|` peaks; `None` without lift-off.
    pub roll_at_lift_off_peak: Option<f64>,
    pub roll_cap: f64,
    /// `max |θ_X| < roll_cap`.
    pub roll_bounded: bool,
    /// Bounded roll, and after a lift-off the final roll is smaller than the
    /// roll at the lift-off peak.
    pub stabilized: bool,
}

impl RolloverSummary {
    pub fn lifted_off(&self) -> bool {
        !self.lift_off_intervals.is_empty()
    }
}

/// Per-node index and the lift-off verdict of a trajectory.
pub fn classify(
    times: &[f64],
    loads: &[[f64; 4]],
    states: &[VehicleState],
    roll_cap: f64,
) -> Result<(RolloverSeries, RolloverSummary), RolloverError> {
    if times.len() != loads.len() || times.len() != states.len() {
        return Err(RolloverError::Length { times: times.len(), loads: loads.len(), states: states.len() });
    }
    if times.is_empty() {
        return Err(RolloverError::Empty);
    }
    let index = loads
        .iter()
        .enumerate()
        .map(|(k, l)| rollover_index(*l).map_err(|_| RolloverError::UndefinedIndex { node: Some(k) }))
        .collect::<Result<Vec<_>, _>>()?;
    let lift_off: Vec<bool> = index.iter().map(|r| r.abs() > 1.0).collect();

    let intervals = intervals(times, &lift_off);

    let (peak, max_abs_index) =
        index.iter().enumerate().fold((0, 0.0f64), |acc, (k, r)| if r.abs() > acc.1 { (k, r.abs()) } else { acc });
    let max_abs_roll = states.iter().fold(0.0f64, |m, s| m.max(s.roll().abs()));
    let terminal_abs_roll = states[states.len() - 1].roll().abs();
    let roll_at_lift_off_peak = (!intervals.is_empty()).then(|| states[peak].roll().abs());
    let roll_bounded = max_abs_roll < roll_cap;
    let stabilized = roll_bounded && roll_at_lift_off_peak.is_none_or(|p| terminal_abs_roll < p);

    let summary = RolloverSummary {
        max_abs_index,
        lift_off_intervals: intervals,
        max_abs_roll,
        terminal_abs_roll,
        roll_at_lift_off_peak,
        roll_cap,
        roll_bounded,
        stabilized,
    };
    Ok((RolloverSeries { times: times.to_vec(), index, lift_off }, summary))
}

pub fn classify_solution(
    sol: &TrajectorySolution,
    roll_cap: f64,
) -> Result<(RolloverSeries, RolloverSummary), RolloverError> {
    classify(&sol.times, &sol.loads, &sol.states, roll_cap)
}

/// Fills `sol.rollover` and returns the default-cap summary.
pub fn annotate(sol: &mut TrajectorySolution) -> Result<RolloverSummary, RolloverError> {
    let (series, summary) = classify_solution(sol, DEFAULT_ROLL_CAP)?;
    sol.rollover = series.index;
    Ok(summary)
}

/// Closed node-time intervals over which `flags` is set.
pub fn intervals(times: &[f64], flags: &[bool]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = None;
    for (k, &on) in flags.iter().enumerate() {
        match (on, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                out.push((times[s], times[k - 1]));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((times[s], times[flags.len() - 1]));
    }
    out
}
