use serde::{Deserialize, Serialize};

use super::VehicleConfig;

/// Number of first-order state components.
pub const STATE_DIM: usize = 10;

/// Initial forward speed, 80 km/h in m/s.
pub const INITIAL_SPEED: f64 = 200.0 / 9.0;

pub const X: usize = 0;
pub const Y: usize = 1;
pub const Z: usize = 2;
pub const ROLL: usize = 3;
pub const YAW: usize = 4;
pub const X_DOT: usize = 5;
pub const Y_DOT: usize = 6;
pub const Z_DOT: usize = 7;
pub const ROLL_RATE: usize = 8;
pub const YAW_RATE: usize = 9;

/// Column names in canonical order.
pub const STATE_NAMES: [&str; STATE_DIM] =
    ["X", "Y", "Z", "theta_X", "theta_Z", "X_dot", "Y_dot", "Z_dot", "theta_X_dot", "theta_Z_dot"];

/// First-order vehicle state `[X, Y, Z, θX, θZ, Ẋ, Ẏ, Ż, θ̇X, θ̇Z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState(pub [f64; STATE_DIM]);

impl VehicleState {
    /// Straight-line running at `speed` with the body at rest on its springs.
    pub fn initial(cfg: &VehicleConfig, speed: f64) -> Self {
        let mut s = [0.0; STATE_DIM];
        s[Z] = cfg.nominal_height;
        s[X_DOT] = speed;
        Self(s)
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut s = [0.0; STATE_DIM];
        s.copy_from_slice(&values[..STATE_DIM]);
        Self(s)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn x(&self) -> f64 {
        self.0[X]
    }
    pub fn y(&self) -> f64 {
        self.0[Y]
    }
    pub fn z(&self) -> f64 {
        self.0[Z]
    }
    pub fn roll(&self) -> f64 {
        self.0[ROLL]
    }
    pub fn yaw(&self) -> f64 {
        self.0[YAW]
    }
    pub fn x_dot(&self) -> f64 {
        self.0[X_DOT]
    }
    pub fn y_dot(&self) -> f64 {
        self.0[Y_DOT]
    }
    pub fn z_dot(&self) -> f64 {
        self.0[Z_DOT]
    }
    pub fn roll_rate(&self) -> f64 {
        self.0[ROLL_RATE]
    }
    pub fn yaw_rate(&self) -> f64 {
        self.0[YAW_RATE]
    }
}

impl std::ops::Index<usize> for VehicleState {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for VehicleState {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Active suspension forces: `left` acts on wheels 1 and 3, `right` on 2 and 4.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub left: f64,
    pub right: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput { left: 0.0, right: 0.0 };

    pub fn new(left: f64, right: f64) -> Self {
        Self { left, right }
    }

    pub fn anti_symmetric(left: f64) -> Self {
        Self { left, right: -left }
    }

    pub fn within_limit(&self, force_max: f64) -> bool {
        self.left.abs() <= force_max && self.right.abs() <= force_max
    }
}

/// Vertical reactions and lateral tire forces, wheel order FL, FR, RL, RR.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WheelLoads {
    pub vertical: [f64; 4],
    pub lateral: [f64; 4],
}
