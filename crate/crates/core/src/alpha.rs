//! One-step implicit α-method for first-order systems `ẋ = f(t, x)`.
//!
//! With `r = β/γ` a step of size `h` reads
//!
//! ```text
//! x_{n+1} = x_n + (1 − r) h f_n + r h f_{n+1} + (1/2 − r) h² a_n
//! a_{n+1} = (f_{n+1} − f_n) / (h γ) + (1 − 1/γ) a_n
//! ```
//!
//! where `γ = 2/(ρ+1) − 1/2`, `β = 1/(ρ+1)²` and `ρ ∈ [0, 1)` sets the
//! high-frequency damping (the spectral radius of the stiff limit).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type BoxError = Box<dyn std::error::Error + Send + Sync + 'static>;

#[derive(Debug, Error)]
pub enum AlphaError {
    #[error("rho must lie in [0, 1), got {0}")]
    Parameter(f64),
    #[error("step size must be positive, got {0}")]
    Step(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("grid must be strictly increasing with at least two points")]
    Grid,
    #[error("step into grid index {index} failed: {reason}")]
    StepFailure { index: usize, reason: String },
    #[error("right-hand side failed at grid index {index}: {source}")]
    Rhs {
        index: usize,
        #[source]
        source: BoxError,
    },
}

/// Method parameters derived from the user-selected `ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaParams {
    pub rho: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl Default for AlphaParams {
    fn default() -> Self {
        Self::new(0.5).expect("default rho is valid")
    }
}

impl AlphaParams {
    pub fn new(rho: f64) -> Result<Self, AlphaError> {
        if !(0.0..1.0).contains(&rho) {
            return Err(AlphaError::Parameter(rho));
        }
        Ok(Self { rho, gamma: 2.0 / (rho + 1.0) - 0.5, beta: 1.0 / ((rho + 1.0) * (rho + 1.0)) })
    }

    /// `β/γ`
    pub fn ratio(&self) -> f64 {
        self.beta / self.gamma
    }
}

/// `(γ, β)` for a given `ρ`.
pub fn alpha_params(rho: f64) -> Result<(f64, f64), AlphaError> {
    let p = AlphaParams::new(rho)?;
    Ok((p.gamma, p.beta))
}

/// Both residuals of one step; they vanish at a valid step.
#[allow(clippy::too_many_arguments)]
pub fn step_residual(
    params: &AlphaParams,
    h: f64,
    x_n: &[f64],
    a_n: &[f64],
    f_n: &[f64],
    x_next: &[f64],
    a_next: &[f64],
    f_next: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), AlphaError> {
    if !(h > 0.0) {
        return Err(AlphaError::Step(h));
    }
    let m = x_n.len();
    if [a_n.len(), f_n.len(), x_next.len(), a_next.len(), f_next.len()].iter().any(|&l| l != m) {
        return Err(AlphaError::Dimension("step vectors must share one length".into()));
    }
    let r = params.ratio();
    let g = params.gamma;
    let mut state = vec![0.0; m];
    let mut aux = vec![0.0; m];
    for i in 0..m {
        state[i] = x_next[i] - x_n[i] - (1.0 - r) * h * f_n[i] - r * h * f_next[i] - (0.5 - r) * h * h * a_n[i];
        aux[i] = a_next[i] - (f_next[i] - f_n[i]) / (h * g) - (1.0 - 1.0 / g) * a_n[i];
    }
    Ok((state, aux))
}

/// Output of [`integrate`].
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub aux: Vec<Vec<f64>>,
    /// `f` evaluated at every grid point.
    pub rates: Vec<Vec<f64>>,
}

/// Newton settings for the implicit step.
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50, fd_step: 1e-7 }
    }
}

/// Integrates over `grid`, solving every implicit step by Newton iteration.
///
/// When `a0` is `None` it is estimated as `df/dt` at `t0` by a forward
/// difference of `f` along the flow with step `1e-6` s.
pub fn integrate<E, F>(
    params: &AlphaParams,
    mut rhs: F,
    x0: &[f64],
    a0: Option<&[f64]>,
    grid: &[f64],
) -> Result<AlphaTrajectory, AlphaError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
    E: Into<BoxError>,
{
    integrate_with(params, &mut rhs, x0, a0, grid, NewtonOptions::default())
}

pub fn integrate_with<E, F>(
    params: &AlphaParams,
    rhs: &mut F,
    x0: &[f64],
    a0: Option<&[f64]>,
    grid: &[f64],
    opts: NewtonOptions,
) -> Result<AlphaTrajectory, AlphaError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
    E: Into<BoxError>,
{
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(AlphaError::Grid);
    }
    let m = x0.len();
    let mut call = |index: usize, t: f64, x: &[f64]| -> Result<Vec<f64>, AlphaError> {
        let v = rhs(t, x).map_err(|e| AlphaError::Rhs { index, source: e.into() })?;
        if v.len() != m {
            return Err(AlphaError::Dimension(format!("rhs returned {} values for {m} states", v.len())));
        }
        Ok(v)
    };

    let f0 = call(0, grid[0], x0)?;
    let a_start = match a0 {
        Some(a) if a.len() == m => a.to_vec(),
        Some(a) => return Err(AlphaError::Dimension(format!("a0 has {} values for {m} states", a.len()))),
        None => {
            let eps = 1e-6;
            let shifted: Vec<f64> = x0.iter().zip(&f0).map(|(x, f)| x + eps * f).collect();
            let f1 = call(0, grid[0] + eps, &shifted)?;
            f1.iter().zip(&f0).map(|(a, b)| (a - b) / eps).collect()
        }
    };

    let r = params.ratio();
    let g = params.gamma;
    let mut states = vec![x0.to_vec()];
    let mut aux = vec![a_start];
    let mut rates = vec![f0];

    for n in 0..grid.len() - 1 {
        let h = grid[n + 1] - grid[n];
        let t1 = grid[n + 1];
        let (xn, an, fnow) = (&states[n], &aux[n], &rates[n]);
        // explicit part of the state update
        let base: Vec<f64> = (0..m).map(|i| xn[i] + (1.0 - r) * h * fnow[i] + (0.5 - r) * h * h * an[i]).collect();
        // predictor: explicit Euler from x_n
        let mut x: Vec<f64> = (0..m).map(|i| xn[i] + h * fnow[i]).collect();
        let mut f = call(n + 1, t1, &x)?;
        let mut converged = false;
        for _ in 0..opts.max_iter {
            let res = DVector::from_iterator(m, (0..m).map(|i| x[i] - base[i] - r * h * f[i]));
            let scale = 1.0 + x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            if res.amax() <= opts.tol * scale {
                converged = true;
                break;
            }
            let mut jac = DMatrix::<f64>::identity(m, m);
            for j in 0..m {
                let step = opts.fd_step * (1.0 + x[j].abs());
                let mut xp = x.clone();
                xp[j] += step;
                let fp = call(n + 1, t1, &xp)?;
                for i in 0..m {
                    jac[(i, j)] -= r * h * (fp[i] - f[i]) / step;
                }
            }
            let delta = jac
                .lu()
                .solve(&res)
                .ok_or_else(|| AlphaError::StepFailure { index: n + 1, reason: "singular Newton matrix".into() })?;
            for i in 0..m {
                x[i] -= delta[i];
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(AlphaError::StepFailure { index: n + 1, reason: "Newton iterate diverged".into() });
            }
            f = call(n + 1, t1, &x)?;
        }
        if !converged {
            return Err(AlphaError::StepFailure {
                index: n + 1,
                reason: format!("Newton did not converge in {} iterations", opts.max_iter),
            });
        }
        let a_next: Vec<f64> = (0..m).map(|i| (f[i] - fnow[i]) / (h * g) + (1.0 - 1.0 / g) * an[i]).collect();
        states.push(x);
        aux.push(a_next);
        rates.push(f);
    }
    Ok(AlphaTrajectory { times: grid.to_vec(), states, aux, rates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::convert::Infallible;

    fn uniform(t0: f64, t1: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn parameter_map() {
        let (g, b) = alpha_params(0.0).unwrap();
        assert_eq!((g, b), (1.5, 1.0));
        let (g, b) = alpha_params(0.5).unwrap();
        assert_abs_diff_eq!(g, 5.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 4.0 / 9.0, epsilon = 1e-15);
        assert!(matches!(alpha_params(1.0), Err(AlphaError::Parameter(_))));
        assert!(alpha_params(-0.1).is_err());
        for k in 0..100 {
            let p = AlphaParams::new(k as f64 / 100.0).unwrap();
            assert!(p.gamma > 0.5);
        }
    }

    #[test]
    fn stationary_step_has_zero_residual() {
        let p = AlphaParams::default();
        let z = [0.0; 3];
        let x = [1.0, 2.0, 3.0];
        let (r1, r2) = step_residual(&p, 0.1, &x, &z, &z, &x, &z, &z).unwrap();
        assert!(r1.iter().chain(&r2).all(|&v| v == 0.0));
    }

    #[test]
    fn unit_rate_step_is_exact() {
        let p = AlphaParams::new(0.3).unwrap();
        let (r1, _) = step_residual(&p, 0.1, &[0.0], &[0.0], &[1.0], &[0.1], &[0.0], &[1.0]).unwrap();
        assert_abs_diff_eq!(r1[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_nonpositive_step() {
        let p = AlphaParams::default();
        assert!(matches!(
            step_residual(&p, 0.0, &[0.0], &[0.0], &[0.0], &[0.0], &[0.0], &[0.0]),
            Err(AlphaError::Step(_))
        ));
    }

    #[test]
    fn decay_step_matches_scalar_oracle() {
        // Independent oracle: the step is linear in (x1, a1) for f = -x, so
        // x1 = (x0 - (1-r) h x0 + (1/2 - r) h^2 a0) / (1 + r h).
        let p = AlphaParams::new(0.8).unwrap();
        let h = 0.01;
        let a0 = 1.0; // df/dt = -xdot = x for f = -x
        let r = p.beta / p.gamma;
        let x1 = (1.0 - (1.0 - r) * h + (0.5 - r) * h * h * a0) / (1.0 + r * h);
        let traj =
            integrate(&p, |_t, x: &[f64]| Ok::<_, Infallible>(vec![-x[0]]), &[1.0], Some(&[a0]), &[0.0, h]).unwrap();
        assert_abs_diff_eq!(traj.states[1][0], x1, epsilon = 1e-13);
        assert_abs_diff_eq!(x1, 0.990_049_748_743_718_5, epsilon = 1e-9);
    }

    #[test]
    fn constant_system_stays_put() {
        let p = AlphaParams::default();
        let traj = integrate(
            &p,
            |_t, _x: &[f64]| Ok::<_, Infallible>(vec![0.0, 0.0]),
            &[1.0, -2.0],
            None,
            &uniform(0.0, 1.0, 11),
        )
        .unwrap();
        for s in &traj.states {
            assert_eq!(s, &vec![1.0, -2.0]);
        }
    }

    #[test]
    fn decay_reaches_exp_minus_one() {
        let p = AlphaParams::new(0.8).unwrap();
        let traj =
            integrate(&p, |_t, x: &[f64]| Ok::<_, Infallible>(vec![-x[0]]), &[1.0], None, &uniform(0.0, 1.0, 101))
                .unwrap();
        assert!((traj.states[100][0] - (-1.0f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn rhs_error_reports_index() {
        #[derive(Debug, thiserror::Error)]
        #[error("boom")]
        struct Boom;
        let p = AlphaParams::default();
        let err = integrate(
            &p,
            |t, x: &[f64]| if t > 0.45 { Err(Boom) } else { Ok(vec![-x[0]]) },
            &[1.0],
            Some(&[1.0]),
            &uniform(0.0, 1.0, 11),
        )
        .unwrap_err();
        assert!(matches!(err, AlphaError::Rhs { index: 5, .. }), "{err:?}");
    }

    #[test]
    fn integrated_steps_satisfy_residuals() {
        let p = AlphaParams::new(0.5).unwrap();
        let grid = uniform(0.0, 2.0, 41);
        let f = |_t: f64, x: &[f64]| Ok::<_, Infallible>(vec![x[1], -x[0] - 0.1 * x[1] + 0.3 * x[0].powi(3)]);
        let traj = integrate(&p, f, &[0.5, 0.0], None, &grid).unwrap();
        for n in 0..40 {
            let (r1, r2) = step_residual(
                &p,
                grid[n + 1] - grid[n],
                &traj.states[n],
                &traj.aux[n],
                &traj.rates[n],
                &traj.states[n + 1],
                &traj.aux[n + 1],
                &traj.rates[n + 1],
            )
            .unwrap();
            assert!(r1.iter().chain(&r2).all(|v| v.abs() < 1e-9), "{r1:?} {r2:?}");
        }
    }
}
