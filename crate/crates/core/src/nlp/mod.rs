//! Smooth constrained optimization:
//!
//! ```text
//! min f(z)  s.t.  c_E(z) = 0,  c_I(z) <= 0,  lb <= z <= ub
//! ```
//!
//! The reference solver is a line-search SQP with a block-wise damped BFGS
//! Hessian, an ℓ1 merit function and an elastic convex QP subproblem solved by
//! a primal-dual interior-point method on a banded factorization.
//!
//! Multiplier convention: `L = f + yᵀc_E + μᵀc_I − zᵀ(…)` with `μ >= 0` and the
//! signed bound multiplier `z = z_l − z_u` (positive at an active lower bound).

mod bfgs;
pub mod ldl;
pub mod qp;
mod sparse;
mod sqp;

pub use bfgs::BlockBfgs;
pub use sparse::SparseRows;
pub use sqp::{HessianMode, MeritStep, Sqp, SqpOptions};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct NlpValues {
    pub objective: f64,
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlpDerivatives {
    pub gradient: Vec<f64>,
    pub eq_jacobian: SparseRows,
    pub ineq_jacobian: SparseRows,
}

/// Sparsity hints for the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    /// Stage (time node) of each variable; `None` marks a variable coupled to
    /// every stage.
    pub stages: Vec<Option<usize>>,
    /// Disjoint variable groups; the quasi-Newton Hessian is block diagonal
    /// over them.
    pub hessian_blocks: Vec<Vec<usize>>,
    /// Known constant curvature of variables outside every block. Uncovered
    /// variables not listed here get unit curvature.
    pub fixed_curvature: Vec<(usize, f64)>,
}

impl Structure {
    pub fn dense(n: usize) -> Self {
        Self { stages: vec![Some(0); n], hessian_blocks: vec![(0..n).collect()], fixed_curvature: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("evaluation failed{}: {message}", index.map(|i| format!(" at {i}")).unwrap_or_default())]
pub struct EvalError {
    pub message: String,
    pub index: Option<usize>,
}

impl EvalError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { message: message.into(), index: None }
    }
}

/// A smooth NLP with sparse first derivatives.
pub trait Nlp {
    fn num_vars(&self) -> usize;
    fn num_eq(&self) -> usize;
    fn num_ineq(&self) -> usize;
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn evaluate(&self, z: &[f64]) -> Result<NlpValues, EvalError>;
    fn derivatives(&self, z: &[f64]) -> Result<NlpDerivatives, EvalError>;
    fn structure(&self) -> Structure {
        Structure::dense(self.num_vars())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Infeasible,
    EvaluationFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max-iterations",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::EvaluationFailure => "evaluation-failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Multipliers {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub bounds: Vec<f64>,
}

impl Multipliers {
    pub fn zeros(n: usize, me: usize, mi: usize) -> Self {
        Self { eq: vec![0.0; me], ineq: vec![0.0; mi], bounds: vec![0.0; n] }
    }

    fn mean_abs(&self) -> f64 {
        let n = self.eq.len() + self.ineq.len() + self.bounds.len();
        if n == 0 {
            return 0.0;
        }
        self.eq.iter().chain(&self.ineq).chain(&self.bounds).map(|v| v.abs()).sum::<f64>() / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub iterations: usize,
    pub objective: f64,
    /// Residuals at the returned point, stationarity and complementarity
    /// divided by the multiplier scale.
    pub kkt: KktResiduals,
    pub penalty: f64,
    pub merit_steps: Vec<MeritStep>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlpSolution {
    pub z: Vec<f64>,
    pub multipliers: Multipliers,
    pub report: SolveReport,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NlpError {
    #[error("initial point has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("lower bound exceeds upper bound for variable {0}")]
    InvalidBounds(usize),
    #[error(transparent)]
    Evaluation(#[from] EvalError),
}

/// Interchangeable NLP back end.
pub trait NlpSolver {
    fn name(&self) -> &str;
    fn solve(&self, nlp: &dyn Nlp, z0: &[f64]) -> Result<NlpSolution, NlpError>;
}

/// Unscaled first-order residuals of `(z, y, μ, z_b)`.
pub fn kkt_residuals(nlp: &dyn Nlp, z: &[f64], m: &Multipliers) -> Result<KktResiduals, EvalError> {
    let v = nlp.evaluate(z)?;
    let d = nlp.derivatives(z)?;
    let (lb, ub) = nlp.bounds();
    Ok(residuals_from(&v, &d, &lb, &ub, z, m))
}

pub(crate) fn residuals_from(
    v: &NlpValues,
    d: &NlpDerivatives,
    lb: &[f64],
    ub: &[f64],
    z: &[f64],
    m: &Multipliers,
) -> KktResiduals {
    let mut grad = d.gradient.clone();
    d.eq_jacobian.mul_transpose_add(&m.eq, &mut grad);
    d.ineq_jacobian.mul_transpose_add(&m.ineq, &mut grad);
    let stationarity = grad.iter().zip(&m.bounds).fold(0.0f64, |acc, (g, b)| acc.max((g - b).abs()));
    let mut feasibility = v.eq.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    feasibility = v.ineq.iter().fold(feasibility, |acc, c| acc.max(*c));
    for i in 0..z.len() {
        feasibility = feasibility.max(lb[i] - z[i]).max(z[i] - ub[i]);
    }
    let mut complementarity = 0.0f64;
    for (mu, c) in m.ineq.iter().zip(&v.ineq) {
        complementarity = complementarity.max((mu * c).abs()).max(-mu);
    }
    for i in 0..z.len() {
        let b = m.bounds[i];
        let gap = if b > 0.0 { z[i] - lb[i] } else { ub[i] - z[i] };
        if b != 0.0 {
            complementarity = complementarity.max(if gap.is_finite() { (b * gap).abs() } else { b.abs() });
        }
    }
    KktResiduals { stationarity, feasibility, complementarity }
}

type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Small dense NLP built from closures, differentiated by central differences
/// unless a gradient is given.
pub struct ClosureNlp {
    pub n: usize,
    pub objective: ScalarFn,
    pub gradient: Option<VectorFn>,
    pub eq: VectorFn,
    pub ineq: VectorFn,
    pub num_eq: usize,
    pub num_ineq: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ClosureNlp {
    pub fn new(n: usize, objective: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            n,
            objective: Box::new(objective),
            gradient: None,
            eq: Box::new(|_| Vec::new()),
            ineq: Box::new(|_| Vec::new()),
            num_eq: 0,
            num_ineq: 0,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn with_gradient(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Box::new(g));
        self
    }

    pub fn with_eq(mut self, m: usize, c: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.num_eq = m;
        self.eq = Box::new(c);
        self
    }

    pub fn with_ineq(mut self, m: usize, c: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.num_ineq = m;
        self.ineq = Box::new(c);
        self
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    fn fd_jacobian(&self, f: &VectorFn, m: usize, z: &[f64]) -> SparseRows {
        let mut cols = vec![vec![0.0; m]; self.n];
        let mut zz = z.to_vec();
        for (j, col) in cols.iter_mut().enumerate() {
            let h = 1e-6 * (1.0 + z[j].abs());
            zz[j] = z[j] + h;
            let fp = f(&zz);
            zz[j] = z[j] - h;
            let fm = f(&zz);
            zz[j] = z[j];
            for i in 0..m {
                col[i] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let dense: Vec<Vec<f64>> = (0..m).map(|i| (0..self.n).map(|j| cols[j][i]).collect()).collect();
        SparseRows::from_dense(&dense, self.n)
    }
}

impl Nlp for ClosureNlp {
    fn num_vars(&self) -> usize {
        self.n
    }
    fn num_eq(&self) -> usize {
        self.num_eq
    }
    fn num_ineq(&self) -> usize {
        self.num_ineq
    }
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lower.clone(), self.upper.clone())
    }
    fn evaluate(&self, z: &[f64]) -> Result<NlpValues, EvalError> {
        let v = NlpValues { objective: (self.objective)(z), eq: (self.eq)(z), ineq: (self.ineq)(z) };
        if !v.objective.is_finite() || v.eq.iter().chain(&v.ineq).any(|c| !c.is_finite()) {
            return Err(EvalError::new("non-finite function value"));
        }
        Ok(v)
    }
    fn derivatives(&self, z: &[f64]) -> Result<NlpDerivatives, EvalError> {
        let gradient = match &self.gradient {
            Some(g) => g(z),
            None => {
                let mut zz = z.to_vec();
                (0..self.n)
                    .map(|j| {
                        let h = 1e-6 * (1.0 + z[j].abs());
                        zz[j] = z[j] + h;
                        let fp = (self.objective)(&zz);
                        zz[j] = z[j] - h;
                        let fm = (self.objective)(&zz);
                        zz[j] = z[j];
                        (fp - fm) / (2.0 * h)
                    })
                    .collect()
            }
        };
        Ok(NlpDerivatives {
            gradient,
            eq_jacobian: self.fd_jacobian(&self.eq, self.num_eq, z),
            ineq_jacobian: self.fd_jacobian(&self.ineq, self.num_ineq, z),
        })
    }
}
