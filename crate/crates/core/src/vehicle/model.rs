//! Equations of motion and constraint functions of the roll model.
//!
//! All functions are pure. Constraint functions use the `<= 0 is feasible`
//! convention.

use std::f64::consts::FRAC_PI_2;

use super::state::*;
use super::{ModelError, VehicleConfig};

/// How the lateral tire force switches off when a wheel unloads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TireSwitch {
    /// `F_Y = 0` for `F_Z <= 0`, the formula otherwise.
    Exact,
    /// The formula evaluated at the softplus load `w ln(1 + exp(F_Z / w))`.
    /// The slope of the softplus is the logistic sigmoid of width `w` (N),
    /// so the 0/1 switch becomes a smooth ramp.
    Smooth { width: f64 },
}

/// Vertical wheel reactions F_Z1..F_Z4 (N).
pub fn wheel_reactions(cfg: &VehicleConfig, s: &VehicleState, u: &ControlInput) -> Result<[f64; 4], ModelError> {
    if !s.is_finite() || !u.left.is_finite() || !u.right.is_finite() {
        return Err(ModelError::InvalidState);
    }
    Ok(wheel_reactions_unchecked(cfg, s, u))
}

pub(crate) fn wheel_reactions_unchecked(cfg: &VehicleConfig, s: &VehicleState, u: &ControlInput) -> [f64; 4] {
    let half = 0.5 * cfg.track;
    let front = cfg.static_front_load();
    let rear = cfg.static_rear_load();
    let k = cfg.stiffness;
    let c = cfg.damping;
    let left_spring = k * (cfg.nominal_height - (s.z() + half * s.roll())) - c * (s.z_dot() + half * s.roll_rate());
    let right_spring = k * (cfg.nominal_height - (s.z() - half * s.roll())) - c * (s.z_dot() - half * s.roll_rate());
    [
        u.left + front + left_spring,
        u.right + front + right_spring,
        u.left + rear + left_spring,
        u.right + rear + right_spring,
    ]
}

/// Slip angle (degrees) of wheel `wheel` (0-based) at steer angle `steer` (rad).
pub fn slip_angle(cfg: &VehicleConfig, s: &VehicleState, steer: f64, wheel: usize) -> Result<f64, ModelError> {
    let (rx, ry) = cfg.wheel_offset(wheel);
    let (sin_z, cos_z) = s.yaw().sin_cos();
    let num = s.x_dot() * sin_z - s.y_dot() * cos_z - rx * s.yaw_rate();
    let den = s.x_dot() * cos_z + s.y_dot() * sin_z - ry * s.yaw_rate();
    if !(den.abs() >= cfg.speed_epsilon) {
        return Err(ModelError::DegenerateSpeed { wheel: wheel + 1 });
    }
    Ok((-steer - (num / den).atan()).to_degrees())
}

/// Lateral tire force (N) for vertical load `load` (N) and slip `slip_deg`.
pub fn tire_lateral_force(cfg: &VehicleConfig, load: f64, slip_deg: f64) -> Result<f64, ModelError> {
    if load <= 0.0 {
        return Ok(0.0);
    }
    magic_formula(cfg, load, slip_deg)
}

/// Lateral tire force with the load switch selected by `switch`.
pub fn tire_force_switched(
    cfg: &VehicleConfig,
    load: f64,
    slip_deg: f64,
    switch: TireSwitch,
) -> Result<f64, ModelError> {
    match switch {
        TireSwitch::Exact => tire_lateral_force(cfg, load, slip_deg),
        TireSwitch::Smooth { width } => {
            let x = load / width;
            // softplus, written to avoid overflow for large x
            let eff = if x > 30.0 { load } else { width * x.exp().ln_1p() };
            if eff < 1e-9 {
                return Ok(0.0);
            }
            magic_formula(cfg, eff, slip_deg)
        }
    }
}

fn magic_formula(cfg: &VehicleConfig, load: f64, slip_deg: f64) -> Result<f64, ModelError> {
    let t = &cfg.tire;
    let fz = load / 1000.0;
    let d = t.a1 * fz * fz + t.a2 * fz;
    if d.abs() < 1e-12 {
        return Err(ModelError::TireSingularity { load });
    }
    let b = t.a3 * (t.a4 * (t.a5 * fz).atan()).sin() / (t.c_t * d);
    if b == 0.0 {
        return Err(ModelError::TireSingularity { load });
    }
    let e = t.a6 * fz * fz + t.a7 * fz + t.a8;
    let shifted = slip_deg + t.delta_sh;
    let phi = (1.0 - e) * shifted + (e / b) * (b * shifted).atan();
    Ok(d * (t.c_t * (b * phi).atan()).sin())
}

/// Wheel loads (vertical and lateral) at the given state and steer angle.
pub fn wheel_loads(
    cfg: &VehicleConfig,
    s: &VehicleState,
    u: &ControlInput,
    steer: f64,
    switch: TireSwitch,
) -> Result<WheelLoads, ModelError> {
    let vertical = wheel_reactions(cfg, s, u)?;
    let mut lateral = [0.0; 4];
    for (wheel, fy) in lateral.iter_mut().enumerate() {
        let delta = if wheel < 2 { steer } else { 0.0 };
        let alpha = slip_angle(cfg, s, delta, wheel)?;
        *fy = tire_force_switched(cfg, vertical[wheel], alpha, switch)?;
    }
    Ok(WheelLoads { vertical, lateral })
}

/// Time derivative of the state, `[Ẋ, Ẏ, Ż, θ̇X, θ̇Z, Ẍ, Ÿ, Z̈, θ̈X, θ̈Z]`.
///
/// `steer` is the front-wheel angle in radians; the rear wheels are unsteered.
pub fn dynamics_rhs(
    cfg: &VehicleConfig,
    s: &VehicleState,
    u: &ControlInput,
    steer: f64,
    switch: TireSwitch,
) -> Result<[f64; STATE_DIM], ModelError> {
    if !steer.is_finite() {
        return Err(ModelError::InvalidState);
    }
    if s.roll().abs() >= FRAC_PI_2 {
        return Err(ModelError::RollSingularity { roll: s.roll() });
    }
    let loads = wheel_loads(cfg, s, u, steer, switch)?;
    Ok(rhs_from_loads(cfg, s, &loads, steer))
}

pub(crate) fn rhs_from_loads(
    cfg: &VehicleConfig,
    s: &VehicleState,
    loads: &WheelLoads,
    steer: f64,
) -> [f64; STATE_DIM] {
    let mu = cfg.friction;
    let yaw = s.yaw();
    let mut fx = 0.0;
    let mut fy = 0.0;
    let mut mz = 0.0;
    for wheel in 0..4 {
        let delta = if wheel < 2 { steer } else { 0.0 };
        let (rx, ry) = cfg.wheel_offset(wheel);
        let f = mu * loads.lateral[wheel];
        let (sin_h, cos_h) = (yaw + delta).sin_cos();
        let (sin_d, cos_d) = delta.sin_cos();
        fx += f * sin_h;
        fy -= f * cos_h;
        mz += -f * cos_d * rx - f * sin_d * ry;
    }
    let m = cfg.mass;
    let x_acc = fx / m;
    let y_acc = fy / m;
    let yaw_acc = mz / cfg.yaw_inertia;
    let [f1, f2, f3, f4] = loads.vertical;
    let total = f1 + f2 + f3 + f4;
    let z_acc = (total - m * cfg.gravity) / m;
    let lateral = y_acc * yaw.cos() - x_acc * yaw.sin();
    let roll_acc = ((f1 - f2 + f3 - f4) * 0.5 * cfg.track + total * s.z() * s.roll().tan() + m * s.z() * lateral)
        / cfg.roll_inertia;
    [s.x_dot(), s.y_dot(), s.z_dot(), s.roll_rate(), s.yaw_rate(), x_acc, y_acc, z_acc, roll_acc, yaw_acc]
}

/// Body-frame lateral acceleration `Ÿ cos θZ − Ẍ sin θZ` from a state derivative.
pub fn lateral_acceleration(s: &VehicleState, rhs: &[f64; STATE_DIM]) -> f64 {
    rhs[Y_DOT] * s.yaw().cos() - rhs[X_DOT] * s.yaw().sin()
}

/// Travel and force-limit residuals, feasible when `<= 0`.
///
/// Order: left side above `z_max`, left side below `z_min`, right side above
/// `z_max`, right side below `z_min`, `F_l > F_max`, `F_l < -F_max`,
/// `F_r > F_max`, `F_r < -F_max`.
pub fn path_constraint_residuals(cfg: &VehicleConfig, s: &VehicleState, u: &ControlInput) -> [f64; 8] {
    let half = 0.5 * cfg.track;
    let left = s.z() + half * s.roll();
    let right = s.z() - half * s.roll();
    [
        left - cfg.z_max,
        cfg.z_min - left,
        right - cfg.z_max,
        cfg.z_min - right,
        u.left - cfg.force_max,
        -cfg.force_max - u.left,
        u.right - cfg.force_max,
        -cfg.force_max - u.right,
    ]
}

/// The two branches of each anti-roll disjunction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchValues {
    /// `[−F_Z1 − F_Z3, a_y/g − T/(2Z)]`
    pub left: [f64; 2],
    /// `[−F_Z2 − F_Z4, −a_y/g − T/(2Z)]`
    pub right: [f64; 2],
}

impl BranchValues {
    /// `[f1_left, f2_left, f1_right, f2_right]`
    pub fn as_array(&self) -> [f64; 4] {
        [self.left[0], self.left[1], self.right[0], self.right[1]]
    }

    /// Whether each disjunction holds with slack `tol`: `min(f1, f2) <= tol`.
    pub fn satisfied(&self, tol: f64) -> (bool, bool) {
        (self.left[0].min(self.left[1]) <= tol, self.right[0].min(self.right[1]) <= tol)
    }
}

/// Anti-roll branch functions; accelerations are taken from `rhs`.
pub fn antiroll_branch_functions(
    cfg: &VehicleConfig,
    s: &VehicleState,
    u: &ControlInput,
    rhs: &[f64; STATE_DIM],
) -> Result<BranchValues, ModelError> {
    if s.z() <= cfg.height_epsilon {
        return Err(ModelError::GeometricSingularity { height: s.z() });
    }
    let [f1, f2, f3, f4] = wheel_reactions(cfg, s, u)?;
    let ratio = lateral_acceleration(s, rhs) / cfg.gravity;
    let threshold = cfg.track / (2.0 * s.z());
    Ok(BranchValues { left: [-f1 - f3, ratio - threshold], right: [-f2 - f4, -ratio - threshold] })
}

/// Conservative (no lift-off) constraints `(−F_Z1 − F_Z3, −F_Z2 − F_Z4)`.
pub fn conservative_constraints(
    cfg: &VehicleConfig,
    s: &VehicleState,
    u: &ControlInput,
) -> Result<[f64; 2], ModelError> {
    let [f1, f2, f3, f4] = wheel_reactions(cfg, s, u)?;
    Ok([-f1 - f3, -f2 - f4])
}
