use nalgebra::DMatrix;

use super::qp::{self, inf_norm, QpData, QpOptions, QpSolution};
use super::{
    residuals_from, BlockBfgs, KktResiduals, Multipliers, Nlp, NlpDerivatives, NlpError, NlpSolution, NlpSolver,
    NlpValues, SolveReport, SolveStatus, Structure,
};

/// Source of the block Hessian of the Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMode {
    /// Powell-damped BFGS per block.
    DampedBfgs,
    /// Forward differences of the Lagrangian gradient, one perturbation per
    /// column index shared by all blocks, projected onto the positive
    /// semidefinite cone. Assumes no curvature between stage blocks; stage-free
    /// variables are coupled to every block.
    BlockDifferences,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqpOptions {
    pub hessian: HessianMode,
    pub kkt_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    pub initial_penalty: f64,
    pub max_penalty: f64,
    /// First proximal shift applied after a short line-search step.
    pub initial_shift: f64,
    /// Smallest eigenvalue kept in a differenced Hessian block, relative to
    /// the largest one.
    pub eigen_floor: f64,
    pub qp: QpOptions,
    pub verbose: bool,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self {
            hessian: HessianMode::DampedBfgs,
            kkt_tol: 1e-4,
            feas_tol: 1e-6,
            max_iter: 500,
            initial_penalty: 10.0,
            max_penalty: 1e9,
            initial_shift: 1e-3,
            eigen_floor: 1e-4,
            qp: QpOptions::default(),
            verbose: false,
        }
    }
}

impl SqpOptions {
    /// Settings for transcribed trajectory problems: differenced block
    /// Hessians with a larger iteration budget.
    pub fn trajectory() -> Self {
        Self { hessian: HessianMode::BlockDifferences, max_iter: 300, ..Self::default() }
    }
}

/// Merit values around one accepted step, both at the same penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeritStep {
    pub before: f64,
    pub after: f64,
    pub penalty: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Sqp {
    pub options: SqpOptions,
}

impl Sqp {
    pub fn new(options: SqpOptions) -> Self {
        Self { options }
    }
}

struct Point {
    z: Vec<f64>,
    v: NlpValues,
    d: NlpDerivatives,
}

fn violation(v: &NlpValues) -> f64 {
    v.eq.iter().map(|c| c.abs()).sum::<f64>() + v.ineq.iter().map(|c| c.max(0.0)).sum::<f64>()
}

fn linear_violation(pt: &Point, step: &[f64]) -> f64 {
    let ae = pt.d.eq_jacobian.mul(step);
    let ai = pt.d.ineq_jacobian.mul(step);
    pt.v.eq.iter().zip(&ae).map(|(c, a)| (c + a).abs()).sum::<f64>()
        + pt.v.ineq.iter().zip(&ai).map(|(c, a)| (c + a).max(0.0)).sum::<f64>()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hessian blocks for [`HessianMode::BlockDifferences`]: every stage block is
/// extended by the stage-free variables, so the sum of the blocks is an
/// arrowhead matrix carrying the stage-to-global curvature. Returns the blocks
/// and the number of global variables at the end of each one.
fn arrowhead_blocks(s: &Structure) -> (Vec<Vec<usize>>, usize) {
    let global = |i: &usize| s.stages.get(*i).is_some_and(|st| st.is_none());
    let globals: Vec<usize> = s.hessian_blocks.iter().flatten().copied().filter(global).collect();
    let staged: Vec<&Vec<usize>> = s.hessian_blocks.iter().filter(|b| !b.iter().any(global)).collect();
    let mixed = s.hessian_blocks.iter().any(|b| b.iter().any(global) && !b.iter().all(global));
    if globals.is_empty() || staged.is_empty() || mixed {
        return (s.hessian_blocks.clone(), 0);
    }
    let blocks = staged.into_iter().map(|b| b.iter().chain(&globals).copied().collect()).collect();
    (blocks, globals.len())
}

/// Refreshes every block from differences of the Lagrangian gradient. The
/// leading (staged) columns share one perturbation across blocks; the
/// trailing `globals` columns are perturbed one at a time and their
/// global-by-global part is split evenly between the blocks. Each block is
/// then clipped to be positive definite on its own, which overstates the
/// curvature of the globals but keeps their steps short. Blocks keep their
/// previous value when a perturbation fails to evaluate.
fn difference_hessian(
    nlp: &dyn Nlp,
    pt: &Point,
    m: &Multipliers,
    hess: &mut BlockBfgs,
    globals: usize,
    rel_floor: f64,
) {
    let blocks: Vec<Vec<usize>> = hess.blocks().map(|(i, _)| i.to_vec()).collect();
    let nb = blocks.len();
    let staged = |b: &Vec<usize>| b.len() - globals;
    let width = blocks.iter().map(staged).max().unwrap_or(0);
    let g0 = lagrangian_gradient(&pt.d, m);
    let step = |z: f64| 1e-4 * (1.0 + z.abs());
    let mut cols: Vec<DMatrix<f64>> = blocks.iter().map(|b| DMatrix::zeros(b.len(), b.len())).collect();
    for c in 0..width {
        let mut z = pt.z.clone();
        let mut eps = vec![0.0; nb];
        for (k, b) in blocks.iter().enumerate() {
            if c < staged(b) {
                let j = b[c];
                eps[k] = step(z[j]);
                z[j] += eps[k];
            }
        }
        let Ok(d) = nlp.derivatives(&z) else { return };
        let g = lagrangian_gradient(&d, m);
        for (k, b) in blocks.iter().enumerate() {
            if c < staged(b) {
                // staged rows only; the global rows follow from symmetry
                for (r, &i) in b[..staged(b)].iter().enumerate() {
                    cols[k][(r, c)] = (g[i] - g0[i]) / eps[k];
                }
            }
        }
    }
    if globals > 0 {
        let shared = blocks[0][staged(&blocks[0])..].to_vec();
        for (q, &j) in shared.iter().enumerate() {
            let mut z = pt.z.clone();
            let e = step(z[j]);
            z[j] += e;
            let Ok(d) = nlp.derivatives(&z) else { return };
            let g = lagrangian_gradient(&d, m);
            for (b, h) in blocks.iter().zip(cols.iter_mut()) {
                let ns = staged(b);
                for (r, &i) in b.iter().enumerate() {
                    let v = (g[i] - g0[i]) / e;
                    if r < ns {
                        h[(r, ns + q)] = v;
                        h[(ns + q, r)] = v;
                    } else {
                        h[(r, ns + q)] = v / nb as f64;
                    }
                }
            }
        }
    }
    for (k, h) in cols.into_iter().enumerate() {
        if !h.iter().all(|v| v.is_finite()) {
            continue;
        }
        let sym = (&h + h.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let top = eig.eigenvalues.amax();
        let floor = (rel_floor * top).max(1e-8);
        let clipped = eig.eigenvalues.map(|e| e.max(floor));
        let m = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        hess.set_block(k, m);
    }
}

fn lagrangian_gradient(d: &NlpDerivatives, m: &Multipliers) -> Vec<f64> {
    let mut g = d.gradient.clone();
    d.eq_jacobian.mul_transpose_add(&m.eq, &mut g);
    d.ineq_jacobian.mul_transpose_add(&m.ineq, &mut g);
    g
}

impl NlpSolver for Sqp {
    fn name(&self) -> &str {
        "sqp"
    }

    fn solve(&self, nlp: &dyn Nlp, z0: &[f64]) -> Result<NlpSolution, NlpError> {
        let o = &self.options;
        let n = nlp.num_vars();
        let (me, mi) = (nlp.num_eq(), nlp.num_ineq());
        if z0.len() != n {
            return Err(NlpError::Dimension { expected: n, got: z0.len() });
        }
        let (lb, ub) = nlp.bounds();
        if let Some(i) = (0..n).find(|&i| !(lb[i] <= ub[i])) {
            return Err(NlpError::InvalidBounds(i));
        }
        let structure = nlp.structure();
        let z: Vec<f64> = (0..n).map(|i| z0[i].clamp(lb[i], ub[i])).collect();
        let v = nlp.evaluate(&z)?;
        let d = nlp.derivatives(&z)?;
        let mut pt = Point { z, v, d };
        let mut mult = Multipliers::zeros(n, me, mi);
        let (groups, globals) = match o.hessian {
            HessianMode::BlockDifferences => arrowhead_blocks(&structure),
            HessianMode::DampedBfgs => (structure.hessian_blocks.clone(), 0),
        };
        let mut hess = BlockBfgs::new(n, &groups).with_fixed(&structure.fixed_curvature);
        let mut nu = o.initial_penalty;
        // proximal shift, raised after short steps and relaxed after full ones
        let mut shift = 0.0f64;
        let mut merit_steps = Vec::new();
        let mut failures = 0;
        let mut status = SolveStatus::MaxIterations;
        let mut message = String::new();
        let mut iterations = 0;

        let scaled = |pt: &Point, m: &Multipliers| -> KktResiduals {
            let raw = residuals_from(&pt.v, &pt.d, &lb, &ub, &pt.z, m);
            let sd = (m.mean_abs() / 100.0).max(1.0);
            KktResiduals {
                stationarity: raw.stationarity / sd,
                feasibility: raw.feasibility,
                complementarity: raw.complementarity / sd,
            }
        };
        let converged = |k: &KktResiduals| {
            k.stationarity <= o.kkt_tol && k.complementarity <= o.kkt_tol && k.feasibility <= o.feas_tol
        };

        if o.hessian == HessianMode::BlockDifferences {
            difference_hessian(nlp, &pt, &mult, &mut hess, globals, o.eigen_floor);
        }
        for it in 0..o.max_iter {
            iterations = it;
            let kkt = scaled(&pt, &mult);
            if it > 0 && converged(&kkt) {
                status = SolveStatus::Converged;
                break;
            }
            let theta = violation(&pt.v);
            let lower: Vec<f64> = (0..n).map(|i| lb[i] - pt.z[i]).collect();
            let upper: Vec<f64> = (0..n).map(|i| ub[i] - pt.z[i]).collect();
            let be: Vec<f64> = pt.v.eq.iter().map(|c| -c).collect();
            let bi: Vec<f64> = pt.v.ineq.iter().map(|c| -c).collect();
            let solve_qp = |nu: f64, be: &[f64], bi: &[f64], hess: &BlockBfgs| -> QpSolution {
                qp::solve(
                    &QpData {
                        hessian: hess,
                        shift,
                        gradient: &pt.d.gradient,
                        eq: &pt.d.eq_jacobian,
                        eq_rhs: be,
                        ineq: &pt.d.ineq_jacobian,
                        ineq_rhs: bi,
                        lower: &lower,
                        upper: &upper,
                        penalty: nu,
                        stages: &structure.stages,
                    },
                    &o.qp,
                )
            };
            let mut sol = solve_qp(nu, &be, &bi, &hess);
            let elastic_tol = 1e-9 * (1.0 + theta);
            while sol.elastic > elastic_tol && nu < o.max_penalty {
                nu = (nu * 10.0).min(o.max_penalty);
                sol = solve_qp(nu, &be, &bi, &hess);
            }
            let step = sol.d.clone();
            let theta_lin = linear_violation(&pt, &step);
            let reduction = theta - theta_lin;
            if sol.elastic > elastic_tol && theta > o.feas_tol && reduction <= 1e-8 * theta.max(1.0) {
                status = SolveStatus::Infeasible;
                message = format!("linearized constraints cannot reduce violation {theta:.3e}");
                break;
            }
            let gd = dot(&pt.d.gradient, &step);
            let dhd = hess.quad(&step) + shift * dot(&step, &step);
            // only steps that buy real feasibility may raise the penalty
            if reduction > 1e-12 && theta > 0.1 * o.feas_tol {
                let needed = (gd + 0.5 * dhd) / (0.9 * reduction);
                if needed > nu {
                    nu = (needed * 1.5).min(o.max_penalty).max(nu);
                }
            }
            let pred = -gd + nu * reduction;
            let merit0 = pt.v.objective + nu * theta;
            if inf_norm(&step) <= 1e-14 * (1.0 + inf_norm(&pt.z)) {
                mult = Multipliers { eq: sol.eq_mult, ineq: sol.ineq_mult, bounds: sol.bound_mult };
                if converged(&scaled(&pt, &mult)) {
                    status = SolveStatus::Converged;
                } else {
                    message = "step vanished before the KKT tolerance was met".into();
                }
                break;
            }

            // line search
            let mut alpha = 1.0;
            let mut accepted: Option<(Vec<f64>, NlpValues, f64)> = None;
            let mut soc_tried = false;
            let mut eval_failed = false;
            while alpha >= 1e-10 {
                let trial: Vec<f64> = (0..n).map(|i| (pt.z[i] + alpha * step[i]).clamp(lb[i], ub[i])).collect();
                match nlp.evaluate(&trial) {
                    Ok(tv) => {
                        let m1 = tv.objective + nu * violation(&tv);
                        let noise = pred <= 1e-12 * (1.0 + merit0.abs());
                        if m1.is_finite() && (merit0 - m1 >= 1e-4 * alpha * pred.max(0.0) || noise) && m1 <= merit0 {
                            accepted = Some((trial, tv, alpha));
                            break;
                        }
                        if alpha == 1.0 && !soc_tried {
                            soc_tried = true;
                            let ae = pt.d.eq_jacobian.mul(&step);
                            let ai = pt.d.ineq_jacobian.mul(&step);
                            let be2: Vec<f64> = tv.eq.iter().zip(&ae).map(|(c, a)| a - c).collect();
                            let bi2: Vec<f64> = tv.ineq.iter().zip(&ai).map(|(c, a)| a - c).collect();
                            let soc = solve_qp(nu, &be2, &bi2, &hess);
                            let strial: Vec<f64> = (0..n).map(|i| (pt.z[i] + soc.d[i]).clamp(lb[i], ub[i])).collect();
                            if let Ok(sv) = nlp.evaluate(&strial) {
                                let m2 = sv.objective + nu * violation(&sv);
                                if m2.is_finite() && merit0 - m2 >= 1e-4 * pred.max(0.0) && m2 <= merit0 {
                                    accepted = Some((strial, sv, 1.0));
                                    break;
                                }
                            }
                        }
                    }
                    Err(_) => eval_failed = true,
                }
                alpha *= 0.5;
            }

            let Some((znew, vnew, a)) = accepted else {
                failures += 1;
                if o.hessian == HessianMode::DampedBfgs {
                    hess.reset();
                }
                shift = (shift * 10.0).max(o.initial_shift);
                if failures >= 3 {
                    message = if eval_failed {
                        "line search failed with evaluation errors".into()
                    } else {
                        "repeated line-search failure".into()
                    };
                    if eval_failed {
                        status = SolveStatus::EvaluationFailure;
                    }
                    break;
                }
                continue;
            };
            failures = 0;
            shift = if a >= 1.0 {
                if shift < 1e-8 {
                    0.0
                } else {
                    shift * 0.5
                }
            } else if a < 0.1 {
                (shift * 10.0).max(o.initial_shift)
            } else {
                shift
            };
            let dnew = match nlp.derivatives(&znew) {
                Ok(d) => d,
                Err(e) => {
                    status = SolveStatus::EvaluationFailure;
                    message = e.to_string();
                    break;
                }
            };
            let merit1 = vnew.objective + nu * violation(&vnew);
            merit_steps.push(MeritStep { before: merit0, after: merit1, penalty: nu, step: a });
            let new_mult = Multipliers { eq: sol.eq_mult, ineq: sol.ineq_mult, bounds: sol.bound_mult };
            let g_old = lagrangian_gradient(&pt.d, &new_mult);
            let g_new = lagrangian_gradient(&dnew, &new_mult);
            let s: Vec<f64> = (0..n).map(|i| znew[i] - pt.z[i]).collect();
            let y: Vec<f64> = (0..n).map(|i| g_new[i] - g_old[i]).collect();
            if o.hessian == HessianMode::DampedBfgs && inf_norm(&s) > 1e-10 * (1.0 + inf_norm(&pt.z)) {
                hess.update(&s, &y);
            }
            mult = new_mult;
            pt = Point { z: znew, v: vnew, d: dnew };
            if o.hessian == HessianMode::BlockDifferences {
                difference_hessian(nlp, &pt, &mult, &mut hess, globals, o.eigen_floor);
            }
            if o.verbose {
                let k = scaled(&pt, &mult);
                eprintln!(
                    "sqp {it:4} f={:.6e} feas={:.2e} stat={:.2e} comp={:.2e} nu={nu:.1e} a={a:.2e} sh={shift:.1e} qp={} |d|={:.2e}@{} pred={:.2e}",
                    pt.v.objective, k.feasibility, k.stationarity, k.complementarity, sol.iterations,
                    inf_norm(&step), (0..n).max_by(|&i, &j| step[i].abs().total_cmp(&step[j].abs())).unwrap_or(0), pred
                );
            }
            iterations = it + 1;
        }

        let kkt = scaled(&pt, &mult);
        if status == SolveStatus::MaxIterations && converged(&kkt) {
            status = SolveStatus::Converged;
        }
        if status == SolveStatus::MaxIterations && message.is_empty() {
            message = format!("stopped after {iterations} iterations");
        }
        Ok(NlpSolution {
            report: SolveReport {
                status,
                iterations,
                objective: pt.v.objective,
                kkt,
                penalty: nu,
                merit_steps,
                message,
            },
            z: pt.z,
            multipliers: mult,
        })
    }
}
