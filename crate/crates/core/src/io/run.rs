use std::path::PathBuf;

use rayon::prelude::*;

use super::config::{force_mode, ForceKind};
use super::table::{closed_loop_rows, solution_rows, write_trajectory};
use super::{plot_script, ClosedLoopReport, Report, RunConfig, RunError};
use crate::closed_loop::{compare_modes, simulate, ClosedLoopRun};
use crate::nlp::{SolveStatus, Sqp};
use crate::rollover::{annotate, classify_solution};
use crate::synthesis::{dominant_term, resynthesize_phi3, synthesize, write_lut, LutRow, Phi3Fit, PhiCoefficients};
use crate::transcription::{ForceMode, ScenarioConfig, TrajectorySolution, TranscribedProblem};
use crate::vehicle::{SteeringProfile, VehicleConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub seed: u64,
    /// No progress lines on stderr.
    pub quiet: bool,
}

/// What a run produced. A failed solve still writes its artifacts; it shows
/// up in [`Outcome::exit_code`].
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Report,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.converged {
            0
        } else {
            3
        }
    }
}

fn progress(opts: &RunOptions, msg: impl FnOnce() -> String) {
    if !opts.quiet {
        eprintln!("{}", msg());
    }
}

struct Artifacts<'a> {
    cfg: &'a RunConfig,
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl<'a> Artifacts<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self, RunError> {
        Self::in_dir(cfg, cfg.output.dir.clone())
    }

    fn in_dir(cfg: &'a RunConfig, dir: PathBuf) -> Result<Self, RunError> {
        std::fs::create_dir_all(&dir).map_err(|e| RunError::io(&dir, e))?;
        Ok(Self { cfg, dir, files: Vec::new() })
    }

    fn trajectory(&mut self, name: &str, rows: &[super::TrajectoryRow]) -> Result<(), RunError> {
        if !self.cfg.output.csv {
            return Ok(());
        }
        let path = self.dir.join(format!("{name}.csv"));
        write_trajectory(&path, rows)?;
        self.files.push(path);
        if self.cfg.output.plot {
            let script = self.dir.join(format!("plot_{name}.py"));
            std::fs::write(&script, plot_script(&format!("{name}.csv"))).map_err(|e| RunError::io(&script, e))?;
            self.files.push(script);
        }
        Ok(())
    }

    fn finish(mut self, report: Report) -> Result<Outcome, RunError> {
        if self.cfg.output.report {
            let path = self.dir.join("report.json");
            report.write(&path)?;
            self.files.push(path);
        }
        Ok(Outcome { report, files: self.files })
    }
}

fn solve_problem(
    vehicle: &VehicleConfig,
    scenario: &ScenarioConfig,
    steering: &SteeringProfile,
    cfg: &RunConfig,
) -> Result<TrajectorySolution, RunError> {
    let problem = TranscribedProblem::with_reference(vehicle, scenario, steering)?;
    let mut sol = problem.solve(&Sqp::new(cfg.solver()))?;
    annotate(&mut sol)?;
    Ok(sol)
}

fn describe(sol: &TrajectorySolution) -> String {
    format!(
        "{} after {} iterations, objective {:.4e}",
        sol.report.status.as_str(),
        sol.report.iterations,
        sol.objective
    )
}

/// Solves the configured optimal control problem.
pub fn run_optimize(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome, RunError> {
    cfg.validate()?;
    let scenario = cfg.scenario(opts.seed)?;
    let steering = cfg.steering()?;
    progress(opts, || format!("optimize: {} nodes, {}", scenario.grid.n, cfg.maneuver_name()));
    let sol = solve_problem(&cfg.vehicle, &scenario, &steering, cfg)?;
    progress(opts, || format!("optimize: {}", describe(&sol)));

    let mut report = Report::new("optimize", cfg, opts.seed);
    report.record_solution(&sol);
    report.phi3 = sol.phi.filter(|_| scenario.forces == ForceMode::Phi3).map(|p| p[2]);
    report.rollover = Some(classify_solution(&sol, cfg.scenario.roll_cap)?.1);
    let mut out = Artifacts::new(cfg)?;
    out.trajectory("trajectory", &solution_rows(&sol))?;
    out.finish(report)
}

fn fit_phi3(cfg: &RunConfig, steering: &SteeringProfile, seed: u64) -> Result<Phi3Fit, RunError> {
    let mut scenario = cfg.scenario(seed)?;
    scenario.forces = ForceMode::Phi3;
    let mut fit = resynthesize_phi3(&cfg.vehicle, steering, &scenario, &Sqp::new(cfg.solver()))?;
    annotate(&mut fit.solution)?;
    Ok(fit)
}

/// Fits the force-law gains: all five when `forces = "phi"`, then `φ3`
/// alone.
pub fn run_synthesize(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome, RunError> {
    cfg.validate()?;
    if !matches!(cfg.scenario.forces, ForceKind::Phi | ForceKind::Phi3) {
        return Err(RunError::Config(r#"[scenario] synthesize needs forces = "phi" or "phi3""#.into()));
    }
    let steering = cfg.steering()?;
    let mut report = Report::new("synthesize", cfg, opts.seed);
    let mut out = Artifacts::new(cfg)?;

    if cfg.scenario.forces == ForceKind::Phi {
        let scenario = cfg.scenario(opts.seed)?;
        progress(opts, || format!("synthesize: five gains, {} nodes", scenario.grid.n));
        let (phi, mut sol) = synthesize(&cfg.vehicle, &steering, &scenario, &Sqp::new(cfg.solver()))?;
        annotate(&mut sol)?;
        progress(opts, || format!("synthesize: {}, phi = {:?}", describe(&sol), phi.0));
        report.record_solution(&sol);
        report.record_ranking(&dominant_term(&cfg.vehicle, &phi, &sol.states));
        report.rollover = Some(classify_solution(&sol, cfg.scenario.roll_cap)?.1);
        out.trajectory("trajectory", &solution_rows(&sol))?;
    }

    progress(opts, || "synthesize: yaw-rate gain alone".into());
    let fit = fit_phi3(cfg, &steering, opts.seed)?;
    progress(opts, || format!("synthesize: {}, phi3 = {}", describe(&fit.solution), fit.phi3));
    report.phi3 = Some(fit.phi3);
    report.phi3_identifiable = Some(fit.identifiable);
    if cfg.scenario.forces == ForceKind::Phi3 {
        report.record_solution(&fit.solution);
        report.record_ranking(&dominant_term(
            &cfg.vehicle,
            &PhiCoefficients::phi3_only(fit.phi3),
            &fit.solution.states,
        ));
        report.rollover = Some(classify_solution(&fit.solution, cfg.scenario.roll_cap)?.1);
        out.trajectory("trajectory", &solution_rows(&fit.solution))?;
    } else {
        report.converged &= fit.solution.report.status == SolveStatus::Converged;
        out.trajectory("trajectory_phi3", &solution_rows(&fit.solution))?;
    }
    if !fit.identifiable {
        report.message = "yaw rate vanishes on this maneuver; phi3 is not identifiable".into();
    }
    out.finish(report)
}

fn closed_loop_report(
    cfg: &RunConfig,
    run: &ClosedLoopRun,
    report: &mut Report,
    comparison: Option<crate::closed_loop::ModeComparison>,
) -> Result<(), RunError> {
    report.status = if run.completed() { "completed" } else { "rollover" }.into();
    report.phi3 = Some(run.phi3);
    report.worst_disjunction =
        Some(run.branches.iter().flat_map(|b| [b[0].min(b[1]), b[2].min(b[3])]).fold(f64::NEG_INFINITY, f64::max));
    report.worst_path = Some(run.worst_path);
    report.max_abs_left_force = Some(run.max_abs_left_force());
    report.rollover = Some(run.rollover_summary(cfg.scenario.roll_cap)?);
    report.closed_loop = Some(ClosedLoopReport::new(run, comparison));
    Ok(())
}

/// Closed loop `F_l = φ3·θ̇Z` on the configured maneuver. The gain comes
/// from `[scenario] gain`, or from a `φ3` fit when that is absent.
pub fn run_validate(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome, RunError> {
    cfg.validate()?;
    let steering = cfg.steering()?;
    let times = cfg.grid()?.times();
    let sim = cfg.sim_options()?;
    let mut report = Report::new("validate", cfg, opts.seed);
    let mut out = Artifacts::new(cfg)?;
    let gain = match cfg.scenario.gain {
        Some(g) => g,
        None => {
            progress(opts, || "validate: no gain given, fitting phi3".into());
            let fit = fit_phi3(cfg, &steering, opts.seed)?;
            report.record_solution(&fit.solution);
            report.phi3_identifiable = Some(fit.identifiable);
            out.trajectory("trajectory_phi3", &solution_rows(&fit.solution))?;
            fit.phi3
        }
    };
    let run = simulate(&cfg.vehicle, gain, &steering, &times, &sim)?;
    let comparison = match cfg.scenario.compare_gain {
        Some(other) => Some(compare_modes(&cfg.vehicle, gain, other, &steering, &times, &sim)?),
        None => None,
    };
    progress(opts, || {
        format!("validate: phi3 = {gain}, disjunctions {}", if run.all_satisfied() { "satisfied" } else { "violated" })
    });
    closed_loop_report(cfg, &run, &mut report, comparison)?;
    out.trajectory("closed_loop", &closed_loop_rows(&run))?;
    out.finish(report)
}

/// Rollover analysis of the closed loop with `[scenario] gain`, which
/// defaults to 0 (no active suspension force).
pub fn run_analyze(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome, RunError> {
    cfg.validate()?;
    let steering = cfg.steering()?;
    let times = cfg.grid()?.times();
    let gain = cfg.scenario.gain.unwrap_or(0.0);
    let run = simulate(&cfg.vehicle, gain, &steering, &times, &cfg.sim_options()?)?;
    let mut report = Report::new("analyze", cfg, opts.seed);
    closed_loop_report(cfg, &run, &mut report, None)?;
    let r = report.rollover.as_ref().expect("just set");
    progress(opts, || {
        format!(
            "analyze: max |R| = {:.4}, max |theta_x| = {:.4} rad, lift-off {:?}, stabilized {}",
            r.max_abs_index, r.max_abs_roll, r.lift_off_intervals, r.stabilized
        )
    });
    let mut out = Artifacts::new(cfg)?;
    out.trajectory("closed_loop", &closed_loop_rows(&run))?;
    out.finish(report)
}

/// Fits `φ3` for every fishhook in `[steering] sweep` and writes the
/// maneuver-to-gain table `lut.csv`. Members run concurrently, each in its
/// own directory `sweep-NNN`.
pub fn run_sweep(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome, RunError> {
    cfg.validate()?;
    if cfg.steering.sweep.is_empty() {
        return Err(RunError::Config("[steering] sweep is empty".into()));
    }
    let base = cfg.scenario(opts.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.solver.parallelism)
        .build()
        .map_err(|e| RunError::Config(format!("[solver] parallelism: {e}")))?;
    let members: Vec<Result<(LutRow, Vec<PathBuf>), RunError>> = pool.install(|| {
        cfg.steering
            .sweep
            .par_iter()
            .enumerate()
            .map(|(k, p)| {
                let steering = SteeringProfile::fishhook(p)?;
                let mut member = cfg.clone();
                member.steering = super::SteeringSection { fishhook: Some(p.clone()), ..Default::default() };
                let scenario = ScenarioConfig { forces: force_mode(ForceKind::Phi3), ..base.clone() };
                let fit = {
                    let mut f = resynthesize_phi3(&cfg.vehicle, &steering, &scenario, &Sqp::new(cfg.solver()))?;
                    annotate(&mut f.solution)?;
                    f
                };
                progress(opts, || format!("sweep[{k}]: {}, phi3 = {}", describe(&fit.solution), fit.phi3));
                let mut out = Artifacts::in_dir(&member, cfg.output.dir.join(format!("sweep-{k:03}")))?;
                out.trajectory("trajectory", &solution_rows(&fit.solution))?;
                let row = LutRow {
                    maneuver: format!("fishhook-{k:03}"),
                    peak_deg: p.peak_deg,
                    reverse_deg: p.reverse_deg,
                    ramp_up: p.ramp_up,
                    reversal: p.reversal,
                    phi3: fit.phi3,
                    objective: fit.solution.objective,
                    converged: fit.solution.report.status == SolveStatus::Converged,
                };
                Ok((row, out.files))
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(members.len());
    let mut files = Vec::new();
    for m in members {
        let (row, f) = m?;
        rows.push(row);
        files.extend(f);
    }
    let mut out = Artifacts::new(cfg)?;
    out.files = files;
    let lut = out.dir.join("lut.csv");
    write_lut(&lut, &rows).map_err(|e| RunError::io(&lut, e))?;
    out.files.push(lut);
    let mut report = Report::new("sweep", cfg, opts.seed);
    report.converged = rows.iter().all(|r| r.converged);
    report.status = if report.converged { "converged" } else { "max-iterations" }.into();
    report.sweep = Some(rows);
    out.finish(report)
}
