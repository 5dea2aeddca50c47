use serde::{Deserialize, Serialize};

use super::ModelError;

/// Front-wheel steer angle as a piecewise-linear function of time.
///
/// Angles are stored in degrees. Before the first breakpoint and after the
/// last one the end values are held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringProfile {
    breakpoints: Vec<(f64, f64)>,
}

/// Steer-then-countersteer input.
///
/// The wheel angle stays at zero until `onset`, ramps linearly to `peak_deg`
/// over `ramp_up`, holds for `dwell`, then ramps to `-reverse_deg` over
/// `reversal` and holds there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FishhookParams {
    pub onset: f64,
    pub ramp_up: f64,
    pub peak_deg: f64,
    pub dwell: f64,
    pub reversal: f64,
    pub reverse_deg: f64,
}

impl Default for FishhookParams {
    fn default() -> Self {
        Self { onset: 0.1, ramp_up: 0.25, peak_deg: 4.0, dwell: 0.2, reversal: 0.35, reverse_deg: 4.0 }
    }
}

impl FishhookParams {
    /// Same shape with the steering ramps shortened by `factor` (> 1 is faster).
    pub fn faster(&self, factor: f64) -> Self {
        Self { ramp_up: self.ramp_up / factor, reversal: self.reversal / factor, ..self.clone() }
    }

    /// Same timing with both amplitudes multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { peak_deg: self.peak_deg * factor, reverse_deg: self.reverse_deg * factor, ..self.clone() }
    }
}

/// Names accepted by [`SteeringProfile::named`].
pub const PROFILE_NAMES: [&str; 6] =
    ["straight", "fishhook", "fishhook-fast", "fishhook-severe", "fishhook-extreme", "double-lane-change"];

impl SteeringProfile {
    pub fn from_breakpoints(breakpoints: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        if breakpoints.is_empty() {
            return Err(ModelError::InvalidSteering("no breakpoints".into()));
        }
        if breakpoints.iter().any(|(t, a)| !t.is_finite() || !a.is_finite()) {
            return Err(ModelError::InvalidSteering("non-finite breakpoint".into()));
        }
        if breakpoints.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(ModelError::InvalidSteering("breakpoint times must be strictly increasing".into()));
        }
        Ok(Self { breakpoints })
    }

    pub fn constant(angle_deg: f64) -> Self {
        Self { breakpoints: vec![(0.0, angle_deg)] }
    }

    pub fn straight() -> Self {
        Self::constant(0.0)
    }

    pub fn fishhook(p: &FishhookParams) -> Result<Self, ModelError> {
        if !(p.onset >= 0.0 && p.ramp_up > 0.0 && p.dwell >= 0.0 && p.reversal > 0.0) {
            return Err(ModelError::InvalidSteering(format!("invalid fishhook timing {p:?}")));
        }
        let t1 = p.onset + p.ramp_up;
        let t2 = t1 + p.dwell;
        let t3 = t2 + p.reversal;
        let mut bp = Vec::with_capacity(5);
        if p.onset > 0.0 {
            bp.push((0.0, 0.0));
        }
        bp.push((p.onset, 0.0));
        bp.push((t1, p.peak_deg));
        if p.dwell > 0.0 {
            bp.push((t2, p.peak_deg));
        }
        bp.push((t3, -p.reverse_deg));
        Self::from_breakpoints(bp)
    }

    /// Two opposite sinusoid-like lobes built from linear ramps.
    pub fn double_lane_change(amplitude_deg: f64, onset: f64, lobe: f64) -> Result<Self, ModelError> {
        let q = lobe / 4.0;
        let bp = vec![
            (0.0, 0.0),
            (onset, 0.0),
            (onset + q, amplitude_deg),
            (onset + 3.0 * q, -amplitude_deg),
            (onset + 5.0 * q, amplitude_deg),
            (onset + 6.0 * q, 0.0),
        ];
        Self::from_breakpoints(bp)
    }

    /// Library profiles. These shapes are repository conventions chosen to
    /// provoke lift-off at the default vehicle parameters.
    pub fn named(name: &str) -> Result<Self, ModelError> {
        let base = FishhookParams::default();
        match name {
            "straight" => Ok(Self::straight()),
            "fishhook" => Self::fishhook(&base),
            "fishhook-fast" => Self::fishhook(&base.faster(1.6)),
            "fishhook-severe" => Self::fishhook(&base.faster(1.6).scaled(1.25)),
            "fishhook-extreme" => Self::fishhook(&base.faster(2.5).scaled(1.5)),
            "double-lane-change" => Self::double_lane_change(3.0, 0.1, 1.2),
            other => Err(ModelError::UnknownProfile(other.to_string())),
        }
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn angle_deg(&self, t: f64) -> f64 {
        let bp = &self.breakpoints;
        if t <= bp[0].0 {
            return bp[0].1;
        }
        let last = bp[bp.len() - 1];
        if t >= last.0 {
            return last.1;
        }
        let k = bp.partition_point(|(tb, _)| *tb <= t);
        let (t0, a0) = bp[k - 1];
        let (t1, a1) = bp[k];
        a0 + (a1 - a0) * (t - t0) / (t1 - t0)
    }

    pub fn angle_rad(&self, t: f64) -> f64 {
        self.angle_deg(t).to_radians()
    }

    /// Largest |angle| in degrees over the breakpoints.
    pub fn peak_abs_deg(&self) -> f64 {
        self.breakpoints.iter().fold(0.0_f64, |m, (_, a)| m.max(a.abs()))
    }

    /// Zero everywhere.
    pub fn is_straight(&self) -> bool {
        self.breakpoints.iter().all(|(_, a)| *a == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_holds_ends() {
        let p = SteeringProfile::from_breakpoints(vec![(0.0, 0.0), (1.0, 2.0), (2.0, -2.0)]).unwrap();
        assert_eq!(p.angle_deg(-1.0), 0.0);
        assert_eq!(p.angle_deg(0.5), 1.0);
        assert_eq!(p.angle_deg(1.5), 0.0);
        assert_eq!(p.angle_deg(5.0), -2.0);
    }

    #[test]
    fn rejects_unsorted_breakpoints() {
        assert!(SteeringProfile::from_breakpoints(vec![(0.0, 0.0), (0.0, 1.0)]).is_err());
        assert!(SteeringProfile::from_breakpoints(vec![]).is_err());
    }

    #[test]
    fn fishhook_shape() {
        let p = FishhookParams { onset: 0.1, ramp_up: 0.2, peak_deg: 5.0, dwell: 0.1, reversal: 0.4, reverse_deg: 6.0 };
        let s = SteeringProfile::fishhook(&p).unwrap();
        assert_eq!(s.angle_deg(0.05), 0.0);
        assert!((s.angle_deg(0.2) - 2.5).abs() < 1e-12);
        assert_eq!(s.angle_deg(0.35), 5.0);
        assert_eq!(s.angle_deg(2.0), -6.0);
    }

    #[test]
    fn named_profiles_resolve() {
        for name in PROFILE_NAMES {
            SteeringProfile::named(name).unwrap();
        }
        assert!(matches!(SteeringProfile::named("nope"), Err(ModelError::UnknownProfile(_))));
    }
}
