//! Closed-loop validation of a yaw-rate feedback law
//! `F_l = φ3·θ̇Z`, `F_r = −F_l`, with exact tire switching.
//!
//! The disjunctions are checked pointwise by `min(f1, f2) <= tol`; no hull
//! weights are involved.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alpha::{self, AlphaError, AlphaParams};
use crate::rollover::{classify, intervals, rollover_index, RolloverError, RolloverSummary};
use crate::vehicle::state::*;
use crate::vehicle::{
    antiroll_branch_functions, dynamics_rhs, path_constraint_residuals, wheel_reactions, BranchValues, ModelError,
    SteeringProfile, TireSwitch, VehicleConfig,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("grid must be strictly increasing with at least two points")]
    Grid,
    #[error("feedback gain must be finite, got {0}")]
    Gain(f64),
    #[error("model error at t = {time} s: {source}")]
    Model { time: f64, source: ModelError },
    #[error("integration failed: {0}")]
    Integration(#[from] AlphaError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integrator {
    Alpha(AlphaParams),
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub integrator: Integrator,
    /// Slack in `min(f1, f2) <= tol`.
    pub tol: f64,
    pub initial_speed: f64,
    pub switch: TireSwitch,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            integrator: Integrator::Alpha(AlphaParams::default()),
            tol: 1e-6,
            initial_speed: INITIAL_SPEED,
            switch: TireSwitch::Exact,
        }
    }
}

/// Feedback forces for gain `phi3` at state `s`.
pub fn feedback(phi3: f64, s: &VehicleState) -> ControlInput {
    ControlInput::anti_symmetric(phi3 * s.yaw_rate())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedLoopRun {
    pub phi3: f64,
    pub times: Vec<f64>,
    pub states: Vec<VehicleState>,
    pub forces: Vec<ControlInput>,
    pub loads: Vec<[f64; 4]>,
    pub branches: Vec<[f64; 4]>,
    /// `(EO1, EO2)` satisfied at each node.
    pub satisfied: Vec<(bool, bool)>,
    /// Node-time intervals where some disjunction fails.
    pub violation_intervals: Vec<(f64, f64)>,
    /// Node-time intervals where a disjunction holds through exactly one
    /// branch.
    pub single_branch_intervals: Vec<(f64, f64)>,
    pub rollover: Vec<f64>,
    /// Largest travel or force-limit residual; `<= 0` when all hold.
    pub worst_path: f64,
    /// Time at which the roll angle reached the `tan` singularity; the
    /// trajectory stops at the last node before it.
    pub rollover_event: Option<f64>,
}

impl ClosedLoopRun {
    pub fn all_satisfied(&self) -> bool {
        self.rollover_event.is_none() && self.satisfied.iter().all(|&(a, b)| a && b)
    }

    pub fn max_abs_left_force(&self) -> f64 {
        self.forces.iter().fold(0.0, |m, u| m.max(u.left.abs()))
    }

    pub fn max_abs_rollover(&self) -> f64 {
        self.rollover.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn max_abs_roll(&self) -> f64 {
        self.states.iter().fold(0.0, |m, s| m.max(s.roll().abs()))
    }

    pub fn completed(&self) -> bool {
        self.rollover_event.is_none()
    }

    /// Lift-off verdict; a run stopped by the roll singularity is never
    /// stabilized.
    pub fn rollover_summary(&self, roll_cap: f64) -> Result<RolloverSummary, RolloverError> {
        let (_, mut summary) = classify(&self.times, &self.loads, &self.states, roll_cap)?;
        if self.rollover_event.is_some() {
            summary.roll_bounded = false;
            summary.stabilized = false;
        }
        Ok(summary)
    }
}

fn closed_loop_rhs(
    cfg: &VehicleConfig,
    steering: &SteeringProfile,
    phi3: f64,
    switch: TireSwitch,
    t: f64,
    x: &[f64],
) -> Result<[f64; STATE_DIM], ModelError> {
    let s = VehicleState::from_slice(x);
    dynamics_rhs(cfg, &s, &feedback(phi3, &s), steering.angle_rad(t), switch)
}

fn is_roll_singularity(e: &ModelError) -> bool {
    matches!(e, ModelError::RollSingularity { .. })
}

/// Outcome of one step: the next state, or the model error that stopped it.
enum Step {
    Next { x: Vec<f64>, a: Option<Vec<f64>> },
    Stopped(ModelError),
}

fn rk4_step(
    cfg: &VehicleConfig,
    steering: &SteeringProfile,
    phi3: f64,
    switch: TireSwitch,
    t: f64,
    h: f64,
    x: &[f64],
) -> Result<Vec<f64>, ModelError> {
    let f = |t: f64, x: &[f64]| closed_loop_rhs(cfg, steering, phi3, switch, t, x);
    let axpy = |a: f64, k: &[f64; STATE_DIM]| -> Vec<f64> { x.iter().zip(k).map(|(x, k)| x + a * k).collect() };
    let k1 = f(t, x)?;
    let k2 = f(t + 0.5 * h, &axpy(0.5 * h, &k1))?;
    let k3 = f(t + 0.5 * h, &axpy(0.5 * h, &k2))?;
    let k4 = f(t + h, &axpy(h, &k3))?;
    Ok((0..STATE_DIM).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

/// Forward simulation of the closed loop on `times`.
pub fn simulate(
    cfg: &VehicleConfig,
    phi3: f64,
    steering: &SteeringProfile,
    times: &[f64],
    opts: &SimOptions,
) -> Result<ClosedLoopRun, SimError> {
    if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SimError::Grid);
    }
    if !phi3.is_finite() {
        return Err(SimError::Gain(phi3));
    }
    cfg.validate().map_err(|source| SimError::Model { time: times[0], source })?;
    let switch = opts.switch;
    let x0 = VehicleState::initial(cfg, opts.initial_speed).0.to_vec();
    let mut xs = vec![x0];
    let mut aux: Option<Vec<f64>> = None;
    let mut event = None;

    for n in 0..times.len() - 1 {
        let (t, t1) = (times[n], times[n + 1]);
        let x = &xs[n];
        let step = match opts.integrator {
            Integrator::Rk4 => match rk4_step(cfg, steering, phi3, switch, t, t1 - t, x) {
                Ok(x) => Step::Next { x, a: None },
                Err(e) => Step::Stopped(e),
            },
            Integrator::Alpha(params) => {
                let mut rhs =
                    |t: f64, x: &[f64]| closed_loop_rhs(cfg, steering, phi3, switch, t, x).map(|d| d.to_vec());
                match alpha::integrate(&params, &mut rhs, x, aux.as_deref(), &[t, t1]) {
                    Ok(tr) => Step::Next { x: tr.states[1].clone(), a: Some(tr.aux[1].clone()) },
                    Err(AlphaError::Rhs { source, .. }) => match source.downcast::<ModelError>() {
                        Ok(e) => Step::Stopped(*e),
                        Err(other) => {
                            return Err(SimError::Integration(AlphaError::StepFailure {
                                index: n + 1,
                                reason: other.to_string(),
                            }))
                        }
                    },
                    Err(AlphaError::StepFailure { reason, .. }) => {
                        // a Newton failure next to the roll singularity is the
                        // same event
                        if x[ROLL].abs() > 1.2 {
                            Step::Stopped(ModelError::RollSingularity { roll: x[ROLL] })
                        } else {
                            return Err(SimError::Integration(AlphaError::StepFailure { index: n + 1, reason }));
                        }
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        };
        match step {
            Step::Next { x, a } => {
                if x[ROLL].abs() >= std::f64::consts::FRAC_PI_2 {
                    event = Some(t1);
                    break;
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(SimError::Model { time: t1, source: ModelError::InvalidState });
                }
                xs.push(x);
                aux = a;
            }
            Step::Stopped(e) if is_roll_singularity(&e) => {
                event = Some(t1);
                break;
            }
            Step::Stopped(source) => return Err(SimError::Model { time: t1, source }),
        }
    }

    let kept = xs.len();
    let mut run = ClosedLoopRun {
        phi3,
        times: times[..kept].to_vec(),
        states: Vec::with_capacity(kept),
        forces: Vec::with_capacity(kept),
        loads: Vec::with_capacity(kept),
        branches: Vec::with_capacity(kept),
        satisfied: Vec::with_capacity(kept),
        violation_intervals: Vec::new(),
        single_branch_intervals: Vec::new(),
        rollover: Vec::with_capacity(kept),
        worst_path: f64::NEG_INFINITY,
        rollover_event: event,
    };
    let mut single = Vec::with_capacity(kept);
    for (k, x) in xs.iter().enumerate() {
        let t = times[k];
        let model = |source| SimError::Model { time: t, source };
        let s = VehicleState::from_slice(x);
        let u = feedback(phi3, &s);
        let rhs = dynamics_rhs(cfg, &s, &u, steering.angle_rad(t), switch).map_err(model)?;
        let b: BranchValues = antiroll_branch_functions(cfg, &s, &u, &rhs).map_err(model)?;
        let loads = wheel_reactions(cfg, &s, &u).map_err(model)?;
        let tol = opts.tol;
        run.satisfied.push(b.satisfied(tol));
        let one = |f: [f64; 2]| (f[0] <= tol) != (f[1] <= tol);
        single.push(one(b.left) || one(b.right));
        run.rollover.push(rollover_index(loads).unwrap_or(f64::NAN));
        run.worst_path = path_constraint_residuals(cfg, &s, &u).iter().fold(run.worst_path, |m, v| m.max(*v));
        run.branches.push(b.as_array());
        run.loads.push(loads);
        run.forces.push(u);
        run.states.push(s);
    }
    let violated: Vec<bool> = run.satisfied.iter().map(|&(a, b)| !(a && b)).collect();
    run.violation_intervals = intervals(&run.times, &violated);
    run.single_branch_intervals = intervals(&run.times, &single);
    Ok(run)
}

/// Headline numbers of one closed loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub phi3: f64,
    pub max_abs_left_force: f64,
    pub all_satisfied: bool,
    pub max_abs_rollover: f64,
    pub max_abs_roll: f64,
    pub rollover_event: Option<f64>,
}

impl From<&ClosedLoopRun> for ModeSummary {
    fn from(r: &ClosedLoopRun) -> Self {
        Self {
            phi3: r.phi3,
            max_abs_left_force: r.max_abs_left_force(),
            all_satisfied: r.all_satisfied(),
            max_abs_rollover: r.max_abs_rollover(),
            max_abs_roll: r.max_abs_roll(),
            rollover_event: r.rollover_event,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub disjunctive: ModeSummary,
    pub conservative: ModeSummary,
    /// Disjunctive over conservative peak force.
    pub force_ratio: f64,
}

/// Runs both gains on the same maneuver.
pub fn compare_modes(
    cfg: &VehicleConfig,
    phi3_disjunctive: f64,
    phi3_conservative: f64,
    steering: &SteeringProfile,
    times: &[f64],
    opts: &SimOptions,
) -> Result<ModeComparison, SimError> {
    let (d, c) = rayon::join(
        || simulate(cfg, phi3_disjunctive, steering, times, opts),
        || simulate(cfg, phi3_conservative, steering, times, opts),
    );
    let (d, c) = (ModeSummary::from(&d?), ModeSummary::from(&c?));
    let force_ratio = d.max_abs_left_force / c.max_abs_left_force;
    Ok(ModeComparison { disjunctive: d, conservative: c, force_ratio })
}
