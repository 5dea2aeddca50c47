//! Reference path of the unactuated vehicle with the suspension held at rest.

use super::model::{dynamics_rhs, TireSwitch};
use super::state::*;
use super::{ModelError, SteeringProfile, VehicleConfig};

const PLANAR: [usize; 6] = [X, Y, YAW, X_DOT, Y_DOT, YAW_RATE];

/// Sampled reference positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl ReferencePath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn planar_rhs(cfg: &VehicleConfig, steering: &SteeringProfile, t: f64, q: &[f64; 6]) -> Result<[f64; 6], ModelError> {
    let mut s = VehicleState::initial(cfg, 0.0);
    for (k, &i) in PLANAR.iter().enumerate() {
        s[i] = q[k];
    }
    let d = dynamics_rhs(cfg, &s, &ControlInput::ZERO, steering.angle_rad(t), TireSwitch::Exact)?;
    let mut out = [0.0; 6];
    for (k, &i) in PLANAR.iter().enumerate() {
        out[k] = d[i];
    }
    Ok(out)
}

/// Integrates the planar equations (longitudinal, lateral, yaw) with zero
/// active force and the suspension frozen at `Z = Z0`, `θX = 0`, and samples
/// `X̄`, `Ȳ` at `times`.
///
/// Uses an adaptive Dormand-Prince 5(4) pair with tight tolerances; every grid
/// time is hit exactly.
pub fn reference_trajectory(
    cfg: &VehicleConfig,
    steering: &SteeringProfile,
    initial_speed: f64,
    times: &[f64],
) -> Result<ReferencePath, ModelError> {
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ModelError::ReferenceIntegration { time: times.first().copied().unwrap_or(0.0) });
    }
    let mut q = [0.0, 0.0, 0.0, initial_speed, 0.0, 0.0];
    let mut x = vec![q[0]];
    let mut y = vec![q[1]];
    let mut t = times[0];
    let mut h: f64 = 1e-3;
    for &target in &times[1..] {
        while t < target {
            let step = h.min(target - t);
            let (next, err) = dp45_step(cfg, steering, t, &q, step)?;
            let scale = next.iter().zip(&q).map(|(a, b)| 1e-10 + 1e-10 * a.abs().max(b.abs()));
            let norm = err.iter().zip(scale).map(|(e, s)| (e / s).powi(2)).sum::<f64>() / 6.0;
            let norm = norm.sqrt();
            if norm <= 1.0 {
                t = if step == target - t { target } else { t + step };
                q = next;
            }
            let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
            h = step * factor;
            if h < 1e-12 {
                return Err(ModelError::ReferenceIntegration { time: t });
            }
        }
        x.push(q[0]);
        y.push(q[1]);
    }
    Ok(ReferencePath { times: times.to_vec(), x, y })
}

fn dp45_step(
    cfg: &VehicleConfig,
    steering: &SteeringProfile,
    t: f64,
    q: &[f64; 6],
    h: f64,
) -> Result<([f64; 6], [f64; 6]), ModelError> {
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] =
        [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];
    let mut k = [[0.0; 6]; 7];
    for stage in 0..7 {
        let mut arg = *q;
        for (j, kj) in k.iter().enumerate().take(stage) {
            for i in 0..6 {
                arg[i] += h * A[stage][j] * kj[i];
            }
        }
        k[stage] = planar_rhs(cfg, steering, t + C[stage] * h, &arg)?;
    }
    let mut hi = *q;
    let mut err = [0.0; 6];
    for i in 0..6 {
        for s in 0..7 {
            hi[i] += h * B5[s] * k[s][i];
            err[i] += h * (B5[s] - B4[s]) * k[s][i];
        }
    }
    Ok((hi, err))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_reference_is_uniform_motion() {
        let cfg = VehicleConfig::default();
        let times: Vec<f64> = (0..16).map(|i| i as f64 * 0.1).collect();
        let r = reference_trajectory(&cfg, &SteeringProfile::straight(), 200.0 / 9.0, &times).unwrap();
        for (i, t) in times.iter().enumerate() {
            assert!((r.x[i] - 200.0 / 9.0 * t).abs() < 1e-9);
            assert_eq!(r.y[i], 0.0);
        }
    }

    #[test]
    fn zero_speed_is_degenerate() {
        let cfg = VehicleConfig::default();
        let err = reference_trajectory(&cfg, &SteeringProfile::straight(), 0.0, &[0.0, 0.1]).unwrap_err();
        assert!(matches!(err, ModelError::DegenerateSpeed { .. }));
    }
}
