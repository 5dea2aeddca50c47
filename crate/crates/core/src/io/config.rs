//! Run configuration read from TOML.
//!
//! ```toml
//! [vehicle]          # overrides of the built-in passenger-car values
//! mass = 1500.0
//!
//! [simulation]
//! t0 = 0.0
//! tf = 1.5
//! nodes = 151
//! rho = 0.5
//!
//! [steering]
//! profile = "fishhook"
//!
//! [scenario]
//! constraints = "disjunctive"
//! forces = "anti-symmetric"
//!
//! [solver]
//! max_iter = 300
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Every section and field is optional; unknown fields are rejected.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RunError;
use crate::alpha::AlphaParams;
use crate::closed_loop::{Integrator, SimOptions};
use crate::nlp::{HessianMode, SqpOptions};
use crate::rollover::DEFAULT_ROLL_CAP;
use crate::transcription::{ConstraintMode, ForceMode, Grid, InitialGuess, ScenarioConfig};
use crate::vehicle::{FishhookParams, SteeringProfile, TireSwitch, VehicleConfig, INITIAL_SPEED};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub vehicle: VehicleConfig,
    pub simulation: SimulationSection,
    pub steering: SteeringSection,
    pub scenario: ScenarioSection,
    pub solver: SolverSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegratorKind {
    Alpha,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub t0: f64,
    pub tf: f64,
    pub nodes: usize,
    /// Spectral radius at infinity of the α-method.
    pub rho: f64,
    /// m/s
    pub initial_speed: f64,
    /// Integrator of the closed-loop runs.
    pub integrator: IntegratorKind,
    /// Slack in `min(f1, f2) <= tol` for the closed-loop check.
    pub tol: f64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            t0: 0.0,
            tf: 1.5,
            nodes: 151,
            rho: 0.5,
            initial_speed: INITIAL_SPEED,
            integrator: IntegratorKind::Alpha,
            tol: 1e-6,
        }
    }
}

/// Exactly one of `profile`, `fishhook` and `breakpoints` selects the
/// maneuver; `profile = "fishhook"` when none is given. `sweep` lists the
/// fishhooks of a sweep run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteeringSection {
    pub profile: Option<String>,
    pub fishhook: Option<FishhookParams>,
    /// `[[t, degrees], ...]`
    pub breakpoints: Option<Vec<(f64, f64)>>,
    pub sweep: Vec<FishhookParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    Disjunctive,
    Conservative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForceKind {
    Free,
    AntiSymmetric,
    Phi,
    Phi3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuessKind {
    /// Reference-path states, zero forces.
    Zero,
    /// Constant `(guess_left, guess_right)`.
    Constant,
    /// Constant `F_r = −F_l = a·u`, `u` uniform in `[−1, 1]` from `--seed`,
    /// `a = guess_amplitude`. The φ modes start from `φ3 = −a·u`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub constraints: ConstraintKind,
    pub forces: ForceKind,
    pub guess: GuessKind,
    pub guess_left: f64,
    pub guess_right: f64,
    pub guess_amplitude: f64,
    pub phi_guess: [f64; 5],
    /// Softplus width of the tire switch in the optimizer, N; 0 selects the
    /// exact switch.
    pub tire_width: f64,
    /// Closed-loop gain φ3 for `validate` and `analyze`; fitted when absent.
    pub gain: Option<f64>,
    /// Second gain compared against `gain` by `validate`.
    pub compare_gain: Option<f64>,
    /// rad
    pub roll_cap: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            constraints: ConstraintKind::Disjunctive,
            forces: ForceKind::Free,
            guess: GuessKind::Zero,
            guess_left: 0.0,
            guess_right: 0.0,
            guess_amplitude: 1000.0,
            phi_guess: [0.0; 5],
            tire_width: 50.0,
            gain: None,
            compare_gain: None,
            roll_cap: DEFAULT_ROLL_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianKind {
    Differences,
    Bfgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub kkt_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    pub hessian: HessianKind,
    /// Concurrent sweep members; 0 uses every core.
    pub parallelism: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = SqpOptions::trajectory();
        Self {
            kkt_tol: o.kkt_tol,
            feas_tol: o.feas_tol,
            max_iter: o.max_iter,
            hessian: HessianKind::Differences,
            parallelism: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub csv: bool,
    pub report: bool,
    pub plot: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), csv: true, report: true, plot: true }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            RunError::Config(m) => RunError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that does not need a solve.
    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        self.vehicle.validate().map_err(|e| RunError::Config(format!("[vehicle] {e}")))?;
        self.grid()?;
        self.alpha()?;
        let s = &self.simulation;
        if !(s.initial_speed > 0.0) {
            return bad(format!("[simulation] initial_speed must be positive, got {}", s.initial_speed));
        }
        if !(s.tol >= 0.0) {
            return bad(format!("[simulation] tol must be non-negative, got {}", s.tol));
        }
        self.steering()?;
        for (k, p) in self.steering.sweep.iter().enumerate() {
            SteeringProfile::fishhook(p).map_err(|e| RunError::Config(format!("[steering] sweep[{k}]: {e}")))?;
        }
        let sc = &self.scenario;
        if !(sc.tire_width >= 0.0) {
            return bad(format!("[scenario] tire_width must be non-negative, got {}", sc.tire_width));
        }
        if !(sc.roll_cap > 0.0) {
            return bad(format!("[scenario] roll_cap must be positive, got {}", sc.roll_cap));
        }
        if [sc.guess_left, sc.guess_right, sc.guess_amplitude].iter().chain(&sc.phi_guess).any(|v| !v.is_finite()) {
            return bad("[scenario] guesses must be finite".into());
        }
        if sc.gain.iter().chain(&sc.compare_gain).any(|g| !g.is_finite()) {
            return bad("[scenario] gains must be finite".into());
        }
        let o = &self.solver;
        if !(o.kkt_tol > 0.0 && o.feas_tol > 0.0) || o.max_iter == 0 {
            return bad("[solver] tolerances must be positive and max_iter at least 1".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, RunError> {
        let s = &self.simulation;
        Grid::new(s.t0, s.tf, s.nodes).map_err(|e| RunError::Config(format!("[simulation] {e}")))
    }

    pub fn alpha(&self) -> Result<AlphaParams, RunError> {
        AlphaParams::new(self.simulation.rho).map_err(|e| RunError::Config(format!("[simulation] {e}")))
    }

    pub fn steering(&self) -> Result<SteeringProfile, RunError> {
        let st = &self.steering;
        let given = [st.profile.is_some(), st.fishhook.is_some(), st.breakpoints.is_some()];
        if given.iter().filter(|&&g| g).count() > 1 {
            return Err(RunError::Config("[steering] give only one of profile, fishhook, breakpoints".into()));
        }
        let r = if let Some(p) = &st.fishhook {
            SteeringProfile::fishhook(p)
        } else if let Some(bp) = &st.breakpoints {
            SteeringProfile::from_breakpoints(bp.clone())
        } else {
            SteeringProfile::named(st.profile.as_deref().unwrap_or("fishhook"))
        };
        r.map_err(|e| RunError::Config(format!("[steering] {e}")))
    }

    /// Human-readable name of the configured maneuver.
    pub fn maneuver_name(&self) -> String {
        let st = &self.steering;
        if st.fishhook.is_some() {
            "fishhook (custom)".into()
        } else if st.breakpoints.is_some() {
            "breakpoints".into()
        } else {
            st.profile.clone().unwrap_or_else(|| "fishhook".into())
        }
    }

    pub fn scenario(&self, seed: u64) -> Result<ScenarioConfig, RunError> {
        let sc = &self.scenario;
        let mut phi_guess = sc.phi_guess;
        let guess = match sc.guess {
            GuessKind::Zero => InitialGuess::Zero,
            GuessKind::Constant => InitialGuess::Constant { left: sc.guess_left, right: sc.guess_right },
            GuessKind::Random => {
                let u: f64 = ChaCha8Rng::seed_from_u64(seed).gen_range(-1.0..=1.0);
                let a = sc.guess_amplitude * u;
                phi_guess[2] = -a;
                InitialGuess::Constant { left: -a, right: a }
            }
        };
        Ok(ScenarioConfig {
            constraints: match sc.constraints {
                ConstraintKind::Disjunctive => ConstraintMode::Disjunctive,
                ConstraintKind::Conservative => ConstraintMode::Conservative,
            },
            forces: force_mode(sc.forces),
            guess,
            phi_guess,
            grid: self.grid()?,
            alpha: self.alpha()?,
            tire: if sc.tire_width > 0.0 { TireSwitch::Smooth { width: sc.tire_width } } else { TireSwitch::Exact },
            initial_speed: self.simulation.initial_speed,
        })
    }

    pub fn solver(&self) -> SqpOptions {
        let o = &self.solver;
        SqpOptions {
            hessian: match o.hessian {
                HessianKind::Differences => HessianMode::BlockDifferences,
                HessianKind::Bfgs => HessianMode::DampedBfgs,
            },
            kkt_tol: o.kkt_tol,
            feas_tol: o.feas_tol,
            max_iter: o.max_iter,
            ..SqpOptions::trajectory()
        }
    }

    pub fn sim_options(&self) -> Result<SimOptions, RunError> {
        Ok(SimOptions {
            integrator: match self.simulation.integrator {
                IntegratorKind::Alpha => Integrator::Alpha(self.alpha()?),
                IntegratorKind::Rk4 => Integrator::Rk4,
            },
            tol: self.simulation.tol,
            initial_speed: self.simulation.initial_speed,
            switch: TireSwitch::Exact,
        })
    }
}

pub(crate) fn force_mode(k: ForceKind) -> ForceMode {
    match k {
        ForceKind::Free => ForceMode::Free,
        ForceKind::AntiSymmetric => ForceMode::AntiSymmetric,
        ForceKind::Phi => ForceMode::Phi,
        ForceKind::Phi3 => ForceMode::Phi3,
    }
}
