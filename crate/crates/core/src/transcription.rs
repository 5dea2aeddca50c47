//! Direct transcription of the roll-control problem into a finite NLP.
//!
//! Every grid node carries the state `x_n`, the α-method auxiliary `a_n`,
//! the node's suspension forces (free and anti-symmetric modes) and, with
//! disjunctive constraints, one hull weight per anti-roll disjunction. The
//! φ-parameterized modes replace the node forces by global gains. The NLP
//! works in scaled variables; [`TranscribedProblem::pack`] and
//! [`TranscribedProblem::unpack`] convert from and to physical units.

use thiserror::Error;

use crate::alpha::AlphaParams;
use crate::disjunction::feasible_weight;
use crate::nlp::{EvalError, Nlp, NlpDerivatives, NlpError, NlpSolver, NlpValues, SolveReport, SparseRows, Structure};
use crate::vehicle::state::*;
use crate::vehicle::{
    antiroll_branch_functions, dynamics_rhs, path_constraint_residuals, reference_trajectory, wheel_reactions,
    BranchValues, ModelError, ReferencePath, SteeringProfile, TireSwitch, VehicleConfig,
};

#[derive(Debug, Error)]
pub enum TranscriptionError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("reference has {got} samples for {expected} grid points")]
    ReferenceLength { expected: usize, got: usize },
    #[error("decision vector has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("initial guess: {0}")]
    Guess(String),
    #[error("model error at node {node}: {source}")]
    Model { node: usize, source: ModelError },
    #[error(transparent)]
    Vehicle(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] NlpError),
}

/// Uniform time grid with `n` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub t0: f64,
    pub tf: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(t0: f64, tf: f64, n: usize) -> Result<Self, TranscriptionError> {
        if n < 2 {
            return Err(TranscriptionError::Grid(format!("need at least 2 points, got {n}")));
        }
        if !(tf > t0) || !t0.is_finite() || !tf.is_finite() {
            return Err(TranscriptionError::Grid(format!("empty interval [{t0}, {tf}]")));
        }
        Ok(Self { t0, tf, n })
    }

    pub fn step(&self) -> f64 {
        (self.tf - self.t0) / (self.n - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.n).map(|i| if i + 1 == self.n { self.tf } else { self.t0 + i as f64 * h }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMode {
    Disjunctive,
    Conservative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForceMode {
    /// Independent `F_l`, `F_r` at every node.
    Free,
    /// `F_l`, `F_r` per node with the row `F_l + F_r = 0`.
    AntiSymmetric,
    /// `F_l = φ·(θX, θ̇X, θ̇Z, Z − Z0, Ż)`, `F_r = −F_l`.
    Phi,
    /// `F_l = φ3 θ̇Z`, `F_r = −F_l`.
    Phi3,
}

impl ForceMode {
    pub fn is_phi(&self) -> bool {
        matches!(self, ForceMode::Phi | ForceMode::Phi3)
    }

    fn node_forces(&self) -> usize {
        if self.is_phi() {
            0
        } else {
            2
        }
    }

    fn globals(&self) -> usize {
        match self {
            ForceMode::Phi => 5,
            ForceMode::Phi3 => 1,
            _ => 0,
        }
    }
}

/// Starting point of the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    /// States from the reference path, zero forces.
    Zero,
    /// States from the reference path, constant forces.
    Constant { left: f64, right: f64 },
    /// Full state and force trajectory on the grid.
    Given { states: Vec<[f64; STATE_DIM]>, forces: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub constraints: ConstraintMode,
    pub forces: ForceMode,
    pub guess: InitialGuess,
    /// Starting gains for the φ modes; φ3-only uses the third entry.
    pub phi_guess: [f64; 5],
    pub grid: Grid,
    pub alpha: AlphaParams,
    pub tire: TireSwitch,
    pub initial_speed: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            constraints: ConstraintMode::Disjunctive,
            forces: ForceMode::Free,
            guess: InitialGuess::Zero,
            phi_guess: [0.0; 5],
            grid: Grid { t0: 0.0, tf: 1.5, n: 151 },
            alpha: AlphaParams::default(),
            tire: TireSwitch::Smooth { width: 50.0 },
            initial_speed: INITIAL_SPEED,
        }
    }
}

/// Decision variables in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub states: Vec<[f64; STATE_DIM]>,
    pub aux: Vec<[f64; STATE_DIM]>,
    /// `(F_l, F_r)` per node. In the φ modes these follow from the gains.
    pub forces: Vec<(f64, f64)>,
    /// `(λ_left, λ_right)` per node; empty in conservative mode.
    pub lambdas: Vec<(f64, f64)>,
    pub phi: [f64; 5],
}

const STATE_SCALE: [f64; STATE_DIM] = [8.0, 1.0, 0.125, 0.125, 0.125, 16.0, 1.0, 0.125, 1.0, 1.0];
const FORCE_SCALE: f64 = 1024.0;
const PHI_SCALE: [f64; 5] = [8192.0, 1024.0, 1024.0, 8192.0, 1024.0];
const PHI_BOUND: f64 = 1e5;
const TRAVEL_SCALE: f64 = 0.1;
const LOAD_SCALE: f64 = 1e-3;
/// The tracking error is small in m²·s; the NLP sees it multiplied by this
/// unless overridden.
pub const DEFAULT_OBJECTIVE_SCALE: f64 = 1e3;

/// Sensed quantities `(θX, θ̇X, θ̇Z, Z − Z0, Ż)` and the state index each one reads.
const SENSED: [usize; 5] = [ROLL, ROLL_RATE, YAW_RATE, Z, Z_DOT];

pub(crate) fn sensed(cfg: &VehicleConfig, x: &[f64; STATE_DIM]) -> [f64; 5] {
    [x[ROLL], x[ROLL_RATE], x[YAW_RATE], x[Z] - cfg.nominal_height, x[Z_DOT]]
}

fn pow2_near(v: f64) -> f64 {
    2f64.powi(v.log2().round() as i32)
}

/// Node-local dynamics and branch values with forward-difference derivatives
/// with respect to `(x, F_l, F_r)`.
struct NodeEval {
    f: [f64; STATE_DIM],
    branch: [f64; 4],
    df: Option<Box<[[f64; 12]; STATE_DIM]>>,
    dbranch: Option<[[f64; 12]; 4]>,
}

/// The transcribed problem.
#[derive(Debug, Clone)]
pub struct TranscribedProblem {
    cfg: VehicleConfig,
    scenario: ScenarioConfig,
    steering: SteeringProfile,
    reference: ReferencePath,
    times: Vec<f64>,
    steer: Vec<f64>,
    x_init: [f64; STATE_DIM],
    block: usize,
    scale: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    aux_scale: [f64; STATE_DIM],
    objective_scale: f64,
}

impl TranscribedProblem {
    pub fn build(
        cfg: &VehicleConfig,
        scenario: &ScenarioConfig,
        steering: &SteeringProfile,
        reference: &ReferencePath,
    ) -> Result<Self, TranscriptionError> {
        cfg.validate()?;
        let g = scenario.grid;
        Grid::new(g.t0, g.tf, g.n)?;
        if reference.len() != g.n || reference.x.len() != g.n || reference.y.len() != g.n {
            return Err(TranscriptionError::ReferenceLength { expected: g.n, got: reference.len() });
        }
        let times = g.times();
        let h = g.step();
        let steer = times.iter().map(|&t| steering.angle_rad(t)).collect();
        let nf = scenario.forces.node_forces();
        let nl = if scenario.constraints == ConstraintMode::Disjunctive { 2 } else { 0 };
        let block = 2 * STATE_DIM + nf + nl;
        let dim = g.n * block + scenario.forces.globals();
        let mut aux_scale = [0.0; STATE_DIM];
        for i in 0..STATE_DIM {
            aux_scale[i] = pow2_near(STATE_SCALE[i] / (h * h));
        }
        let mut scale = vec![1.0; dim];
        let mut lower = vec![f64::NEG_INFINITY; dim];
        let mut upper = vec![f64::INFINITY; dim];
        for n in 0..g.n {
            let b = n * block;
            for i in 0..STATE_DIM {
                scale[b + i] = STATE_SCALE[i];
                scale[b + STATE_DIM + i] = aux_scale[i];
            }
            // keep iterates away from the model's singular set
            lower[b + Z] = 0.05;
            upper[b + Z] = 2.0;
            lower[b + ROLL] = -1.2;
            upper[b + ROLL] = 1.2;
            lower[b + X_DOT] = 1.0;
            for k in 0..nf {
                scale[b + 20 + k] = FORCE_SCALE;
                lower[b + 20 + k] = -cfg.force_max;
                upper[b + 20 + k] = cfg.force_max;
            }
            for k in 0..nl {
                lower[b + 20 + nf + k] = 0.0;
                upper[b + 20 + nf + k] = 1.0;
            }
        }
        let gbase = g.n * block;
        match scenario.forces {
            ForceMode::Phi => {
                scale[gbase..gbase + 5].copy_from_slice(&PHI_SCALE);
            }
            ForceMode::Phi3 => scale[gbase] = PHI_SCALE[2],
            _ => {}
        }
        for j in gbase..dim {
            lower[j] = -PHI_BOUND;
            upper[j] = PHI_BOUND;
        }
        Ok(Self {
            cfg: cfg.clone(),
            scenario: scenario.clone(),
            steering: steering.clone(),
            reference: reference.clone(),
            times,
            steer,
            x_init: VehicleState::initial(cfg, scenario.initial_speed).0,
            block,
            scale,
            lower,
            upper,
            aux_scale,
            objective_scale: DEFAULT_OBJECTIVE_SCALE,
        })
    }

    /// Builds the problem with the reference path of the unactuated vehicle.
    pub fn with_reference(
        cfg: &VehicleConfig,
        scenario: &ScenarioConfig,
        steering: &SteeringProfile,
    ) -> Result<Self, TranscriptionError> {
        let reference = reference_trajectory(cfg, steering, scenario.initial_speed, &scenario.grid.times())?;
        Self::build(cfg, scenario, steering, &reference)
    }

    /// Factor between the physical tracking error and the NLP objective.
    pub fn with_objective_scale(mut self, scale: f64) -> Self {
        self.objective_scale = scale;
        self
    }

    pub fn dimension(&self) -> usize {
        self.scale.len()
    }

    pub fn nodes(&self) -> usize {
        self.scenario.grid.n
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn config(&self) -> &VehicleConfig {
        &self.cfg
    }

    pub fn steering(&self) -> &SteeringProfile {
        &self.steering
    }

    pub fn reference(&self) -> &ReferencePath {
        &self.reference
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn nf(&self) -> usize {
        self.scenario.forces.node_forces()
    }

    fn disjunctive(&self) -> bool {
        self.scenario.constraints == ConstraintMode::Disjunctive
    }

    fn gbase(&self) -> usize {
        self.nodes() * self.block
    }

    fn lambda_index(&self, n: usize, k: usize) -> usize {
        n * self.block + 20 + self.nf() + k
    }

    /// Per-node inequality rows: four travel rows, two force rows in the φ
    /// modes, then the two anti-roll rows.
    fn ineq_per_node(&self) -> usize {
        4 + if self.scenario.forces.is_phi() { 2 } else { 0 } + 2
    }

    fn num_eq_rows(&self) -> usize {
        let n = self.nodes();
        2 * STATE_DIM + 2 * STATE_DIM * (n - 1) + if self.scenario.forces == ForceMode::AntiSymmetric { n } else { 0 }
    }

    fn phi_from(&self, z: &[f64]) -> [f64; 5] {
        let g = self.gbase();
        match self.scenario.forces {
            ForceMode::Phi => std::array::from_fn(|j| z[g + j] * self.scale[g + j]),
            ForceMode::Phi3 => [0.0, 0.0, z[g] * self.scale[g], 0.0, 0.0],
            _ => [0.0; 5],
        }
    }

    fn state_at(&self, z: &[f64], n: usize) -> [f64; STATE_DIM] {
        let b = n * self.block;
        std::array::from_fn(|i| z[b + i] * self.scale[b + i])
    }

    fn aux_at(&self, z: &[f64], n: usize) -> [f64; STATE_DIM] {
        let b = n * self.block + STATE_DIM;
        std::array::from_fn(|i| z[b + i] * self.scale[b + i])
    }

    fn forces_at(&self, z: &[f64], n: usize, x: &[f64; STATE_DIM], phi: &[f64; 5]) -> (f64, f64) {
        if self.scenario.forces.is_phi() {
            let s = sensed(&self.cfg, x);
            let fl: f64 = (0..5).map(|j| phi[j] * s[j]).sum();
            (fl, -fl)
        } else {
            let b = n * self.block + 20;
            (z[b] * FORCE_SCALE, z[b + 1] * FORCE_SCALE)
        }
    }

    fn lambdas_at(&self, z: &[f64], n: usize) -> (f64, f64) {
        if self.disjunctive() {
            (z[self.lambda_index(n, 0)], z[self.lambda_index(n, 1)])
        } else {
            (0.0, 0.0)
        }
    }

    /// Physical decision → scaled vector.
    pub fn pack(&self, d: &Decision) -> Result<Vec<f64>, TranscriptionError> {
        let n = self.nodes();
        let bad = |what: &str| TranscriptionError::Guess(format!("{what} must have {n} entries"));
        if d.states.len() != n || d.aux.len() != n {
            return Err(bad("states and aux"));
        }
        if !self.scenario.forces.is_phi() && d.forces.len() != n {
            return Err(bad("forces"));
        }
        if self.disjunctive() && d.lambdas.len() != n {
            return Err(bad("lambdas"));
        }
        let mut z = vec![0.0; self.dimension()];
        for k in 0..n {
            let b = k * self.block;
            for i in 0..STATE_DIM {
                z[b + i] = d.states[k][i] / self.scale[b + i];
                z[b + STATE_DIM + i] = d.aux[k][i] / self.scale[b + STATE_DIM + i];
            }
            if !self.scenario.forces.is_phi() {
                z[b + 20] = d.forces[k].0 / FORCE_SCALE;
                z[b + 21] = d.forces[k].1 / FORCE_SCALE;
            }
            if self.disjunctive() {
                z[self.lambda_index(k, 0)] = d.lambdas[k].0;
                z[self.lambda_index(k, 1)] = d.lambdas[k].1;
            }
        }
        let g = self.gbase();
        match self.scenario.forces {
            ForceMode::Phi => {
                for j in 0..5 {
                    z[g + j] = d.phi[j] / self.scale[g + j];
                }
            }
            ForceMode::Phi3 => z[g] = d.phi[2] / self.scale[g],
            _ => {}
        }
        Ok(z)
    }

    /// Scaled vector → physical decision.
    pub fn unpack(&self, z: &[f64]) -> Result<Decision, TranscriptionError> {
        self.check_dim(z)?;
        let phi = self.phi_from(z);
        let n = self.nodes();
        let states: Vec<_> = (0..n).map(|k| self.state_at(z, k)).collect();
        let aux = (0..n).map(|k| self.aux_at(z, k)).collect();
        let forces = (0..n).map(|k| self.forces_at(z, k, &states[k], &phi)).collect();
        let lambdas = if self.disjunctive() { (0..n).map(|k| self.lambdas_at(z, k)).collect() } else { Vec::new() };
        Ok(Decision { states, aux, forces, lambdas, phi })
    }

    fn check_dim(&self, z: &[f64]) -> Result<(), TranscriptionError> {
        if z.len() != self.dimension() {
            return Err(TranscriptionError::Dimension { expected: self.dimension(), got: z.len() });
        }
        Ok(())
    }

    fn node_eval(
        &self,
        n: usize,
        x: &[f64; STATE_DIM],
        fl: f64,
        fr: f64,
        derivatives: bool,
    ) -> Result<NodeEval, ModelError> {
        let base = self.node_values(n, x, fl, fr)?;
        if !derivatives {
            return Ok(NodeEval { f: base.0, branch: base.1, df: None, dbranch: None });
        }
        let mut df = Box::new([[0.0; 12]; STATE_DIM]);
        let mut db = [[0.0; 12]; 4];
        let mut xp = *x;
        for c in 0..12 {
            let (mut l, mut r) = (fl, fr);
            let v = match c {
                10 => fl,
                11 => fr,
                _ => x[c],
            };
            let step = 1e-6 * (1.0 + v.abs());
            match c {
                10 => l += step,
                11 => r += step,
                _ => xp[c] += step,
            }
            let (fp, bp) = self.node_values(n, &xp, l, r)?;
            if c < 10 {
                xp[c] = x[c];
            }
            for i in 0..STATE_DIM {
                df[i][c] = (fp[i] - base.0[i]) / step;
            }
            for k in 0..4 {
                db[k][c] = (bp[k] - base.1[k]) / step;
            }
        }
        Ok(NodeEval { f: base.0, branch: base.1, df: Some(df), dbranch: Some(db) })
    }

    fn node_values(
        &self,
        n: usize,
        x: &[f64; STATE_DIM],
        fl: f64,
        fr: f64,
    ) -> Result<([f64; STATE_DIM], [f64; 4]), ModelError> {
        let s = VehicleState(*x);
        let u = ControlInput::new(fl, fr);
        let f = dynamics_rhs(&self.cfg, &s, &u, self.steer[n], self.scenario.tire)?;
        let b = antiroll_branch_functions(&self.cfg, &s, &u, &f)?;
        Ok((f, b.as_array()))
    }

    fn all_nodes(&self, z: &[f64], derivatives: bool) -> Result<Vec<NodeEval>, TranscriptionError> {
        let phi = self.phi_from(z);
        (0..self.nodes())
            .map(|n| {
                let x = self.state_at(z, n);
                let (fl, fr) = self.forces_at(z, n, &x, &phi);
                self.node_eval(n, &x, fl, fr, derivatives).map_err(|e| TranscriptionError::Model { node: n, source: e })
            })
            .collect()
    }

    fn weights(&self) -> Vec<f64> {
        let h = self.scenario.grid.step();
        let n = self.nodes();
        (0..n).map(|k| if k == 0 || k + 1 == n { 0.5 * h } else { h }).collect()
    }

    /// Objective, equality rows and inequality rows (scaled).
    pub fn evaluate_rows(&self, z: &[f64]) -> Result<NlpValues, TranscriptionError> {
        self.check_dim(z)?;
        let nodes = self.all_nodes(z, false)?;
        Ok(self.rows(z, &nodes))
    }

    fn rows(&self, z: &[f64], nodes: &[NodeEval]) -> NlpValues {
        let n = self.nodes();
        let h = self.scenario.grid.step();
        let p = &self.scenario.alpha;
        let r = p.ratio();
        let gm = p.gamma;
        let phi = self.phi_from(z);
        let w = self.weights();
        let mut objective = 0.0;
        for k in 0..n {
            let x = self.state_at(z, k);
            let ex = x[X] - self.reference.x[k];
            let ey = x[Y] - self.reference.y[k];
            objective += self.objective_scale * w[k] * (ex * ex + ey * ey);
        }

        let mut eq = Vec::with_capacity(self.num_eq_rows());
        let x0 = self.state_at(z, 0);
        for i in 0..STATE_DIM {
            eq.push((x0[i] - self.x_init[i]) / STATE_SCALE[i]);
        }
        let a0 = self.aux_at(z, 0);
        for i in 0..STATE_DIM {
            let fd = (nodes[1].f[i] - nodes[0].f[i]) / h;
            eq.push((a0[i] - fd) / self.aux_scale[i]);
        }
        for k in 0..n - 1 {
            let (xa, xb) = (self.state_at(z, k), self.state_at(z, k + 1));
            let (aa, ab) = (self.aux_at(z, k), self.aux_at(z, k + 1));
            let (fa, fb) = (&nodes[k].f, &nodes[k + 1].f);
            for i in 0..STATE_DIM {
                let r1 = xb[i] - xa[i] - (1.0 - r) * h * fa[i] - r * h * fb[i] - (0.5 - r) * h * h * aa[i];
                eq.push(r1 / STATE_SCALE[i]);
            }
            for i in 0..STATE_DIM {
                let r2 = ab[i] - (fb[i] - fa[i]) / (h * gm) - (1.0 - 1.0 / gm) * aa[i];
                eq.push(r2 / self.aux_scale[i]);
            }
        }
        if self.scenario.forces == ForceMode::AntiSymmetric {
            for k in 0..n {
                let (fl, fr) = self.forces_at(z, k, &self.state_at(z, k), &phi);
                eq.push((fl + fr) / FORCE_SCALE);
            }
        }

        let mut ineq = Vec::with_capacity(n * self.ineq_per_node());
        for k in 0..n {
            let x = self.state_at(z, k);
            let (fl, fr) = self.forces_at(z, k, &x, &phi);
            let path = path_constraint_residuals(&self.cfg, &VehicleState(x), &ControlInput::new(fl, fr));
            for v in &path[..4] {
                ineq.push(v / TRAVEL_SCALE);
            }
            if self.scenario.forces.is_phi() {
                ineq.push(path[4] / FORCE_SCALE);
                ineq.push(path[5] / FORCE_SCALE);
            }
            let b = &nodes[k].branch;
            if self.disjunctive() {
                let (ll, lr) = self.lambdas_at(z, k);
                ineq.push(ll * b[0] * LOAD_SCALE + (1.0 - ll) * b[1]);
                ineq.push(lr * b[2] * LOAD_SCALE + (1.0 - lr) * b[3]);
            } else {
                ineq.push(b[0] * LOAD_SCALE);
                ineq.push(b[2] * LOAD_SCALE);
            }
        }
        NlpValues { objective, eq, ineq }
    }

    /// Adds `coef · ∂(node value)/∂(node inputs)` to `row`, mapping the force
    /// columns onto decision variables.
    fn push_node_row(&self, row: &mut Vec<(usize, f64)>, n: usize, d: &[f64; 12], coef: f64, z: &[f64]) {
        let b = n * self.block;
        for i in 0..STATE_DIM {
            row.push((b + i, coef * d[i] * self.scale[b + i]));
        }
        match self.scenario.forces {
            ForceMode::Free | ForceMode::AntiSymmetric => {
                row.push((b + 20, coef * d[10] * FORCE_SCALE));
                row.push((b + 21, coef * d[11] * FORCE_SCALE));
            }
            ForceMode::Phi | ForceMode::Phi3 => {
                let dfl = d[10] - d[11];
                let phi = self.phi_from(z);
                let x = self.state_at(z, n);
                let s = sensed(&self.cfg, &x);
                let g = self.gbase();
                let active: &[usize] = if self.scenario.forces == ForceMode::Phi { &[0, 1, 2, 3, 4] } else { &[2] };
                for (slot, &j) in active.iter().enumerate() {
                    row.push((g + slot, coef * dfl * s[j] * self.scale[g + slot]));
                    let col = SENSED[j];
                    row.push((b + col, coef * dfl * phi[j] * self.scale[b + col]));
                }
            }
        }
    }

    fn jacobians(&self, z: &[f64], nodes: &[NodeEval]) -> (Vec<f64>, SparseRows, SparseRows) {
        let n = self.nodes();
        let dim = self.dimension();
        let h = self.scenario.grid.step();
        let p = &self.scenario.alpha;
        let r = p.ratio();
        let gm = p.gamma;
        let w = self.weights();

        let mut grad = vec![0.0; dim];
        for k in 0..n {
            let x = self.state_at(z, k);
            let b = k * self.block;
            let c = 2.0 * self.objective_scale * w[k];
            grad[b + X] = c * (x[X] - self.reference.x[k]) * self.scale[b + X];
            grad[b + Y] = c * (x[Y] - self.reference.y[k]) * self.scale[b + Y];
        }

        let df = |k: usize| nodes[k].df.as_ref().expect("derivatives requested");
        let mut eq = SparseRows::new(dim);
        for i in 0..STATE_DIM {
            eq.push_row(vec![(i, self.scale[i] / STATE_SCALE[i])]);
        }
        for i in 0..STATE_DIM {
            let s = self.aux_scale[i];
            let mut row = vec![(STATE_DIM + i, self.scale[STATE_DIM + i] / s)];
            self.push_node_row(&mut row, 1, &df(1)[i], -1.0 / (h * s), z);
            self.push_node_row(&mut row, 0, &df(0)[i], 1.0 / (h * s), z);
            eq.push_row(merge(row));
        }
        for k in 0..n - 1 {
            let (ba, bb) = (k * self.block, (k + 1) * self.block);
            for i in 0..STATE_DIM {
                let s = STATE_SCALE[i];
                let mut row = vec![
                    (bb + i, self.scale[bb + i] / s),
                    (ba + i, -self.scale[ba + i] / s),
                    (ba + STATE_DIM + i, -(0.5 - r) * h * h * self.scale[ba + STATE_DIM + i] / s),
                ];
                self.push_node_row(&mut row, k, &df(k)[i], -(1.0 - r) * h / s, z);
                self.push_node_row(&mut row, k + 1, &df(k + 1)[i], -r * h / s, z);
                eq.push_row(merge(row));
            }
            for i in 0..STATE_DIM {
                let s = self.aux_scale[i];
                let mut row = vec![
                    (bb + STATE_DIM + i, self.scale[bb + STATE_DIM + i] / s),
                    (ba + STATE_DIM + i, -(1.0 - 1.0 / gm) * self.scale[ba + STATE_DIM + i] / s),
                ];
                self.push_node_row(&mut row, k + 1, &df(k + 1)[i], -1.0 / (h * gm * s), z);
                self.push_node_row(&mut row, k, &df(k)[i], 1.0 / (h * gm * s), z);
                eq.push_row(merge(row));
            }
        }
        if self.scenario.forces == ForceMode::AntiSymmetric {
            for k in 0..n {
                let b = k * self.block;
                eq.push_row(vec![(b + 20, 1.0), (b + 21, 1.0)]);
            }
        }

        let mut ineq = SparseRows::new(dim);
        let half = 0.5 * self.cfg.track;
        for k in 0..n {
            let b = k * self.block;
            let (sz, sr) = (self.scale[b + Z] / TRAVEL_SCALE, self.scale[b + ROLL] / TRAVEL_SCALE);
            ineq.push_row(vec![(b + Z, sz), (b + ROLL, half * sr)]);
            ineq.push_row(vec![(b + Z, -sz), (b + ROLL, -half * sr)]);
            ineq.push_row(vec![(b + Z, sz), (b + ROLL, -half * sr)]);
            ineq.push_row(vec![(b + Z, -sz), (b + ROLL, half * sr)]);
            if self.scenario.forces.is_phi() {
                // d F_l as a node-input derivative: unit in the F_l column, minus unit in F_r
                let mut unit = [0.0; 12];
                unit[10] = 0.5;
                unit[11] = -0.5;
                let mut row = Vec::new();
                self.push_node_row(&mut row, k, &unit, 1.0 / FORCE_SCALE, z);
                let row = merge(row);
                ineq.push_row(row.clone());
                ineq.push_row(row.into_iter().map(|(c, v)| (c, -v)).collect());
            }
            let db = nodes[k].dbranch.as_ref().expect("derivatives requested");
            let bv = &nodes[k].branch;
            if self.disjunctive() {
                for side in 0..2 {
                    let lam = z[self.lambda_index(k, side)];
                    let (f1, f2) = (bv[2 * side], bv[2 * side + 1]);
                    let d: [f64; 12] =
                        std::array::from_fn(|c| lam * db[2 * side][c] * LOAD_SCALE + (1.0 - lam) * db[2 * side + 1][c]);
                    let mut row = vec![(self.lambda_index(k, side), f1 * LOAD_SCALE - f2)];
                    self.push_node_row(&mut row, k, &d, 1.0, z);
                    ineq.push_row(merge(row));
                }
            } else {
                for side in 0..2 {
                    let mut row = Vec::new();
                    self.push_node_row(&mut row, k, &db[2 * side], LOAD_SCALE, z);
                    ineq.push_row(merge(row));
                }
            }
        }
        (grad, eq, ineq)
    }

    /// A starting point from the scenario's initial guess. States come from
    /// the reference path with the suspension at rest, auxiliaries from the
    /// α recursion on that guess, hull weights from the canonical weight.
    pub fn initial_point(&self) -> Result<Vec<f64>, TranscriptionError> {
        let n = self.nodes();
        let (states, forces): (Vec<[f64; STATE_DIM]>, Vec<(f64, f64)>) = match &self.scenario.guess {
            InitialGuess::Given { states, forces } => {
                if states.len() != n || forces.len() != n {
                    return Err(TranscriptionError::Guess(format!("given trajectory must have {n} nodes")));
                }
                (states.clone(), forces.clone())
            }
            other => {
                let (l, r) = match other {
                    InitialGuess::Constant { left, right } => (*left, *right),
                    _ => (0.0, 0.0),
                };
                (self.reference_states()?, vec![(l, r); n])
            }
        };
        let phi = self.scenario.phi_guess;
        let forces: Vec<(f64, f64)> = if self.scenario.forces.is_phi() {
            states
                .iter()
                .map(|x| {
                    let s = sensed(&self.cfg, x);
                    let fl = match self.scenario.forces {
                        ForceMode::Phi => (0..5).map(|j| phi[j] * s[j]).sum(),
                        _ => phi[2] * s[2],
                    };
                    (fl, -fl)
                })
                .collect()
        } else {
            forces
        };
        let mut f = Vec::with_capacity(n);
        let mut branches = Vec::with_capacity(n);
        for k in 0..n {
            let (rhs, b) = self
                .node_values(k, &states[k], forces[k].0, forces[k].1)
                .map_err(|e| TranscriptionError::Model { node: k, source: e })?;
            f.push(rhs);
            branches.push(b);
        }
        let h = self.scenario.grid.step();
        let gm = self.scenario.alpha.gamma;
        let mut aux = vec![[0.0; STATE_DIM]; n];
        for i in 0..STATE_DIM {
            aux[0][i] = (f[1][i] - f[0][i]) / h;
        }
        for k in 0..n - 1 {
            for i in 0..STATE_DIM {
                aux[k + 1][i] = (f[k + 1][i] - f[k][i]) / (h * gm) + (1.0 - 1.0 / gm) * aux[k][i];
            }
        }
        let lambdas = if self.disjunctive() {
            branches
                .iter()
                .map(|b| {
                    let pick = |f1: f64, f2: f64| feasible_weight(&[f1 * LOAD_SCALE, f2]).map_or(0.5, |w| w[0]);
                    (pick(b[0], b[1]), pick(b[2], b[3]))
                })
                .collect()
        } else {
            Vec::new()
        };
        let mut phi_full = [0.0; 5];
        match self.scenario.forces {
            ForceMode::Phi => phi_full = phi,
            ForceMode::Phi3 => phi_full[2] = phi[2],
            _ => {}
        }
        self.pack(&Decision { states, aux, forces, lambdas, phi: phi_full })
    }

    /// Reference positions with the remaining states of a rigid, level body
    /// moving along the path.
    fn reference_states(&self) -> Result<Vec<[f64; STATE_DIM]>, TranscriptionError> {
        let n = self.nodes();
        let h = self.scenario.grid.step();
        let rx = &self.reference.x;
        let ry = &self.reference.y;
        let slope = |v: &[f64], k: usize| -> f64 {
            if k == 0 {
                (v[1] - v[0]) / h
            } else if k + 1 == n {
                (v[k] - v[k - 1]) / h
            } else {
                (v[k + 1] - v[k - 1]) / (2.0 * h)
            }
        };
        let mut states = Vec::with_capacity(n);
        for k in 0..n {
            let mut x = self.x_init;
            x[X] = rx[k];
            x[Y] = ry[k];
            if k > 0 {
                x[X_DOT] = slope(rx, k);
                x[Y_DOT] = slope(ry, k);
                x[YAW] = x[Y_DOT].atan2(x[X_DOT]);
            }
            states.push(x);
        }
        let yaw: Vec<f64> = states.iter().map(|x| x[YAW]).collect();
        for k in 1..n {
            states[k][YAW_RATE] = slope(&yaw, k);
        }
        Ok(states)
    }

    /// Solves the problem from its initial guess.
    pub fn solve(&self, solver: &dyn NlpSolver) -> Result<TrajectorySolution, TranscriptionError> {
        let z0 = self.initial_point()?;
        self.solve_from(solver, &z0)
    }

    pub fn solve_from(&self, solver: &dyn NlpSolver, z0: &[f64]) -> Result<TrajectorySolution, TranscriptionError> {
        let sol = solver.solve(self, z0)?;
        self.solution(&sol.z, sol.report)
    }

    /// Physical trajectory with exact-switch diagnostics at every node.
    pub fn solution(&self, z: &[f64], report: SolveReport) -> Result<TrajectorySolution, TranscriptionError> {
        let d = self.unpack(z)?;
        let n = self.nodes();
        let mut branches = Vec::with_capacity(n);
        let mut loads = Vec::with_capacity(n);
        let mut path = Vec::with_capacity(n);
        for k in 0..n {
            let s = VehicleState(d.states[k]);
            let u = ControlInput::new(d.forces[k].0, d.forces[k].1);
            let rhs = dynamics_rhs(&self.cfg, &s, &u, self.steer[k], self.scenario.tire)
                .map_err(|e| TranscriptionError::Model { node: k, source: e })?;
            branches.push(
                antiroll_branch_functions(&self.cfg, &s, &u, &rhs)
                    .map_err(|e| TranscriptionError::Model { node: k, source: e })?,
            );
            loads.push(wheel_reactions(&self.cfg, &s, &u)?);
            path.push(path_constraint_residuals(&self.cfg, &s, &u));
        }
        let phi = match self.scenario.forces {
            ForceMode::Phi | ForceMode::Phi3 => Some(d.phi),
            _ => None,
        };
        Ok(TrajectorySolution {
            times: self.times.clone(),
            states: d.states.into_iter().map(VehicleState).collect(),
            forces: d.forces.into_iter().map(|(l, r)| ControlInput::new(l, r)).collect(),
            lambdas: if self.disjunctive() { Some(d.lambdas) } else { None },
            branches,
            loads,
            path_residuals: path,
            objective: report.objective / self.objective_scale,
            phi,
            report,
            rollover: Vec::new(),
        })
    }
}

fn merge(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (c, v) in row {
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => out.push((c, v)),
        }
    }
    out
}

fn to_eval(e: TranscriptionError) -> EvalError {
    match e {
        TranscriptionError::Model { node, source } => EvalError { message: source.to_string(), index: Some(node) },
        other => EvalError::new(other.to_string()),
    }
}

impl Nlp for TranscribedProblem {
    fn num_vars(&self) -> usize {
        self.dimension()
    }

    fn num_eq(&self) -> usize {
        self.num_eq_rows()
    }

    fn num_ineq(&self) -> usize {
        self.nodes() * self.ineq_per_node()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let lo = self.lower.iter().zip(&self.scale).map(|(l, s)| l / s).collect();
        let hi = self.upper.iter().zip(&self.scale).map(|(u, s)| u / s).collect();
        (lo, hi)
    }

    fn evaluate(&self, z: &[f64]) -> Result<NlpValues, EvalError> {
        if z.len() != self.dimension() {
            return Err(EvalError::new(format!("expected {} variables, got {}", self.dimension(), z.len())));
        }
        let nodes = self.all_nodes(z, false).map_err(to_eval)?;
        Ok(self.rows(z, &nodes))
    }

    fn derivatives(&self, z: &[f64]) -> Result<NlpDerivatives, EvalError> {
        if z.len() != self.dimension() {
            return Err(EvalError::new(format!("expected {} variables, got {}", self.dimension(), z.len())));
        }
        let nodes = self.all_nodes(z, true).map_err(to_eval)?;
        let (gradient, eq_jacobian, ineq_jacobian) = self.jacobians(z, &nodes);
        Ok(NlpDerivatives { gradient, eq_jacobian, ineq_jacobian })
    }

    fn structure(&self) -> Structure {
        let n = self.nodes();
        let w = self.weights();
        let mut stages = Vec::with_capacity(self.dimension());
        let mut blocks = Vec::with_capacity(n + 1);
        let mut fixed = Vec::new();
        for k in 0..n {
            let b = k * self.block;
            stages.extend(std::iter::repeat_n(Some(k), self.block));
            // positions enter only the objective
            let c = 2.0 * self.objective_scale * w[k];
            fixed.push((b + X, c * self.scale[b + X] * self.scale[b + X]));
            fixed.push((b + Y, c * self.scale[b + Y] * self.scale[b + Y]));
            // accelerations appear linearly in every row
            fixed.extend((b + STATE_DIM..b + 2 * STATE_DIM).map(|i| (i, 0.0)));
            let mut blk: Vec<usize> = (b + Z..b + STATE_DIM).collect();
            blk.extend(b + 2 * STATE_DIM..b + self.block);
            blocks.push(blk);
        }
        let g = self.gbase();
        stages.extend(std::iter::repeat_n(None, self.dimension() - g));
        if self.dimension() > g {
            blocks.push((g..self.dimension()).collect());
        }
        Structure { stages, hessian_blocks: blocks, fixed_curvature: fixed }
    }
}

/// Optimized trajectory with per-node diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySolution {
    pub times: Vec<f64>,
    pub states: Vec<VehicleState>,
    pub forces: Vec<ControlInput>,
    /// `(λ_left, λ_right)` per node in disjunctive mode.
    pub lambdas: Option<Vec<(f64, f64)>>,
    pub branches: Vec<BranchValues>,
    pub loads: Vec<[f64; 4]>,
    pub path_residuals: Vec<[f64; 8]>,
    pub objective: f64,
    pub phi: Option<[f64; 5]>,
    pub report: SolveReport,
    /// Rollover index per node; filled by the rollover analysis.
    pub rollover: Vec<f64>,
}

impl TrajectorySolution {
    /// Largest `min(f1, f2)` over nodes and both disjunctions.
    pub fn worst_disjunction(&self) -> f64 {
        self.branches
            .iter()
            .flat_map(|b| [b.left[0].min(b.left[1]), b.right[0].min(b.right[1])])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest path residual (travel and force limits).
    pub fn worst_path(&self) -> f64 {
        self.path_residuals.iter().flatten().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }

    pub fn max_abs_left_force(&self) -> f64 {
        self.forces.iter().fold(0.0, |m, u| m.max(u.left.abs()))
    }
}
