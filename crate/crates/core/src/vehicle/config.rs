use serde::{Deserialize, Serialize};

use super::ModelError;

/// Lateral tire force constants (slip in degrees, load in kN, force in N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TireConstants {
    pub c_t: f64,
    pub delta_sh: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub a5: f64,
    pub a6: f64,
    pub a7: f64,
    pub a8: f64,
}

impl Default for TireConstants {
    fn default() -> Self {
        Self {
            c_t: 1.30,
            delta_sh: 0.0,
            a1: -22.1,
            a2: 1011.0,
            a3: 1078.0,
            a4: 1.82,
            a5: 0.208,
            a6: 0.0,
            a7: -0.354,
            a8: 0.707,
        }
    }
}

/// Physical, tire and limit parameters of the roll model.
///
/// Defaults are the published passenger-car values. Wheel offsets are not
/// stored; they follow from `cg_to_front`, `cg_to_rear` and `track` (see
/// [`VehicleConfig::wheel_offset`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleConfig {
    /// M (kg)
    pub mass: f64,
    /// T (m)
    pub track: f64,
    /// K (kg/s^2)
    pub stiffness: f64,
    /// C (kg/s)
    pub damping: f64,
    /// I_XX (kg m^2)
    pub roll_inertia: f64,
    /// I_ZZ (kg m^2)
    pub yaw_inertia: f64,
    /// a (m)
    pub cg_to_front: f64,
    /// b (m)
    pub cg_to_rear: f64,
    pub gravity: f64,
    /// mu
    pub friction: f64,
    /// Z0 (m), taken equal to the CG height.
    pub nominal_height: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// F_max (N)
    pub force_max: f64,
    pub tire: TireConstants,
    /// Below this |longitudinal wheel speed| (m/s) the slip angle is undefined.
    pub speed_epsilon: f64,
    /// Below this height Z (m) the anti-roll branch T/(2Z) is undefined.
    pub height_epsilon: f64,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            mass: 1400.0,
            track: 1.5,
            stiffness: 30000.0,
            damping: 4000.0,
            roll_inertia: 1300.0,
            yaw_inertia: 4000.0,
            cg_to_front: 1.4,
            cg_to_rear: 1.5,
            gravity: 9.8,
            friction: 1.3,
            nominal_height: 0.7,
            z_min: 0.5,
            z_max: 0.9,
            force_max: 10000.0,
            tire: TireConstants::default(),
            speed_epsilon: 1e-6,
            height_epsilon: 1e-3,
        }
    }
}

impl VehicleConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("mass", self.mass),
            ("track", self.track),
            ("stiffness", self.stiffness),
            ("damping", self.damping),
            ("roll_inertia", self.roll_inertia),
            ("yaw_inertia", self.yaw_inertia),
            ("cg_to_front", self.cg_to_front),
            ("cg_to_rear", self.cg_to_rear),
            ("gravity", self.gravity),
            ("force_max", self.force_max),
            ("speed_epsilon", self.speed_epsilon),
            ("height_epsilon", self.height_epsilon),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ModelError::InvalidConfig(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.friction > 0.0 && self.friction <= 2.0) {
            return Err(ModelError::InvalidConfig(format!("friction must lie in (0, 2], got {}", self.friction)));
        }
        if !(self.z_min < self.nominal_height && self.nominal_height < self.z_max) {
            return Err(ModelError::InvalidConfig(format!(
                "travel limits must bracket the nominal height: {} < {} < {} is false",
                self.z_min, self.nominal_height, self.z_max
            )));
        }
        let t = &self.tire;
        let tire = [t.c_t, t.delta_sh, t.a1, t.a2, t.a3, t.a4, t.a5, t.a6, t.a7, t.a8];
        if tire.iter().any(|v| !v.is_finite()) || t.c_t == 0.0 {
            return Err(ModelError::InvalidConfig("tire constants must be finite with C_T != 0".into()));
        }
        Ok(())
    }

    pub fn wheelbase(&self) -> f64 {
        self.cg_to_front + self.cg_to_rear
    }

    /// Static vertical share of the weight carried by one front wheel.
    pub fn static_front_load(&self) -> f64 {
        self.cg_to_rear / (2.0 * self.wheelbase()) * self.mass * self.gravity
    }

    /// Static vertical share of the weight carried by one rear wheel.
    pub fn static_rear_load(&self) -> f64 {
        self.cg_to_front / (2.0 * self.wheelbase()) * self.mass * self.gravity
    }

    /// Longitudinal and lateral offsets (r_X, r_Y) of wheel `i` in 0..4.
    ///
    /// Wheels are numbered front-left, front-right, rear-left, rear-right.
    pub fn wheel_offset(&self, wheel: usize) -> (f64, f64) {
        let half = 0.5 * self.track;
        match wheel {
            0 => (self.cg_to_front, half),
            1 => (self.cg_to_front, -half),
            2 => (-self.cg_to_rear, half),
            3 => (-self.cg_to_rear, -half),
            _ => panic!("wheel index {wheel} out of range"),
        }
    }
}
