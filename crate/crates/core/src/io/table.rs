//! Trajectory CSV, one row per node.
//!
//! Columns: `t`, the ten states, `F_l`, `F_r`, `lambda_left`,
//! `lambda_right` (empty outside the disjunctive optimizer), `f1`..`f4`, `R`.
//! Floats are written in shortest round-trip form, so reading a file back
//! gives the same bits.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::closed_loop::ClosedLoopRun;
use crate::transcription::TrajectorySolution;
use crate::vehicle::{ControlInput, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    #[serde(rename = "X")]
    pub x: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    #[serde(rename = "Z")]
    pub z: f64,
    pub theta_x: f64,
    pub theta_z: f64,
    #[serde(rename = "X_dot")]
    pub x_dot: f64,
    #[serde(rename = "Y_dot")]
    pub y_dot: f64,
    #[serde(rename = "Z_dot")]
    pub z_dot: f64,
    pub theta_x_dot: f64,
    pub theta_z_dot: f64,
    #[serde(rename = "F_l")]
    pub f_left: f64,
    #[serde(rename = "F_r")]
    pub f_right: f64,
    pub lambda_left: Option<f64>,
    pub lambda_right: Option<f64>,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

/// Header line of every trajectory CSV.
pub const TRAJECTORY_COLUMNS: [&str; 20] = [
    "t",
    "X",
    "Y",
    "Z",
    "theta_x",
    "theta_z",
    "X_dot",
    "Y_dot",
    "Z_dot",
    "theta_x_dot",
    "theta_z_dot",
    "F_l",
    "F_r",
    "lambda_left",
    "lambda_right",
    "f1",
    "f2",
    "f3",
    "f4",
    "R",
];

impl TrajectoryRow {
    fn new(t: f64, s: &VehicleState, u: &ControlInput, lambda: Option<(f64, f64)>, f: [f64; 4], r: f64) -> Self {
        let x = s.0;
        Self {
            t,
            x: x[0],
            y: x[1],
            z: x[2],
            theta_x: x[3],
            theta_z: x[4],
            x_dot: x[5],
            y_dot: x[6],
            z_dot: x[7],
            theta_x_dot: x[8],
            theta_z_dot: x[9],
            f_left: u.left,
            f_right: u.right,
            lambda_left: lambda.map(|l| l.0),
            lambda_right: lambda.map(|l| l.1),
            f1: f[0],
            f2: f[1],
            f3: f[2],
            f4: f[3],
            r,
        }
    }

    pub fn state(&self) -> VehicleState {
        VehicleState([
            self.x,
            self.y,
            self.z,
            self.theta_x,
            self.theta_z,
            self.x_dot,
            self.y_dot,
            self.z_dot,
            self.theta_x_dot,
            self.theta_z_dot,
        ])
    }

    pub fn control(&self) -> ControlInput {
        ControlInput { left: self.f_left, right: self.f_right }
    }
}

/// Rows of an optimized trajectory; `R` is NaN where it was not computed.
pub fn solution_rows(sol: &TrajectorySolution) -> Vec<TrajectoryRow> {
    (0..sol.times.len())
        .map(|k| {
            TrajectoryRow::new(
                sol.times[k],
                &sol.states[k],
                &sol.forces[k],
                sol.lambdas.as_ref().map(|l| l[k]),
                sol.branches[k].as_array(),
                sol.rollover.get(k).copied().unwrap_or(f64::NAN),
            )
        })
        .collect()
}

pub fn closed_loop_rows(run: &ClosedLoopRun) -> Vec<TrajectoryRow> {
    (0..run.times.len())
        .map(|k| {
            TrajectoryRow::new(run.times[k], &run.states[k], &run.forces[k], None, run.branches[k], run.rollover[k])
        })
        .collect()
}

pub fn write_trajectory(path: &Path, rows: &[TrajectoryRow]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| RunError::io(path, e))?;
    if rows.is_empty() {
        w.write_record(TRAJECTORY_COLUMNS).map_err(|e| RunError::io(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| RunError::io(path, e))?;
    }
    w.flush().map_err(|e| RunError::io(path, e))?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>, RunError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| RunError::io(path, e))?;
    let header: Vec<String> = r.headers().map_err(|e| RunError::io(path, e))?.iter().map(String::from).collect();
    if header != TRAJECTORY_COLUMNS {
        return Err(RunError::Config(format!("{}: unexpected columns {header:?}", path.display())));
    }
    r.deserialize().collect::<Result<_, _>>().map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}
