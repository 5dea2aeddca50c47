use rollstab::nlp::{SolveStatus, Sqp, SqpOptions};
use rollstab::synthesis::*;
use rollstab::transcription::{ConstraintMode, ForceMode, Grid, ScenarioConfig};
use rollstab::vehicle::state::{ROLL, ROLL_RATE, YAW_RATE};
use rollstab::vehicle::{SteeringProfile, VehicleConfig, VehicleState, INITIAL_SPEED};

fn scenario(forces: ForceMode, n: usize) -> ScenarioConfig {
    ScenarioConfig { forces, grid: Grid::new(0.0, 1.5, n).unwrap(), ..ScenarioConfig::default() }
}

fn solver() -> Sqp {
    Sqp::new(SqpOptions::trajectory())
}

fn moving() -> VehicleState {
    let mut s = VehicleState::initial(&VehicleConfig::default(), INITIAL_SPEED);
    s.0[ROLL] = 0.05;
    s.0[ROLL_RATE] = -0.2;
    s.0[YAW_RATE] = 0.4;
    s
}

#[test]
fn single_gain_ranks_first() {
    let cfg = VehicleConfig::default();
    let r = dominant_term(&cfg, &PhiCoefficients([1.0, 0.0, 0.0, 0.0, 0.0]), &[moving()]);
    assert_eq!(r.leader(), Some(0));
    assert_eq!(r.terms[0].name, "theta_x");
    assert_eq!(r.terms[0].rms, 0.05);
    assert_eq!(r.terms[0].max_abs, 0.05);
}

#[test]
fn zero_gains_are_a_tie() {
    let cfg = VehicleConfig::default();
    let r = dominant_term(&cfg, &PhiCoefficients::default(), &[moving(), moving()]);
    assert!(r.tie);
    assert_eq!(r.leader(), None);
    assert!(r.terms.iter().all(|t| t.rms == 0.0 && t.max_abs == 0.0));
}

#[test]
fn terms_sum_to_the_force() {
    let cfg = VehicleConfig::default();
    let phi = PhiCoefficients([-916.5607, -2102.4, -4799.4, 3.8244e-4, -0.0078]);
    let s = moving();
    let sum: f64 = phi.terms(&cfg, &s).iter().sum();
    assert_eq!(sum, phi.left_force(&cfg, &s));
    assert_eq!(PhiCoefficients::phi3_only(-4796.2).left_force(&cfg, &s), -4796.2 * 0.4);
}

#[test]
fn wrong_force_mode_is_rejected() {
    let cfg = VehicleConfig::default();
    let st = SteeringProfile::straight();
    let err = synthesize(&cfg, &st, &scenario(ForceMode::Phi3, 11), &solver()).unwrap_err();
    assert!(matches!(err, SynthesisError::ForceMode { expected: ForceMode::Phi, .. }));
    let err = resynthesize_phi3(&cfg, &st, &scenario(ForceMode::Free, 11), &solver()).unwrap_err();
    assert!(matches!(err, SynthesisError::ForceMode { expected: ForceMode::Phi3, .. }));
}

#[test]
fn straight_run_needs_no_gains() {
    let cfg = VehicleConfig::default();
    let st = SteeringProfile::straight();
    let (phi, sol) = synthesize(&cfg, &st, &scenario(ForceMode::Phi, 21), &solver()).unwrap();
    assert_eq!(sol.report.status, SolveStatus::Converged, "{:?}", sol.report);
    assert!(sol.objective.abs() < 1e-12);
    assert!(phi.0.iter().all(|p| p.abs() < 1e-6), "{phi:?}");
}

#[test]
fn straight_run_leaves_phi3_unidentifiable() {
    let cfg = VehicleConfig::default();
    let st = SteeringProfile::straight();
    let mut sc = scenario(ForceMode::Phi3, 21);
    sc.phi_guess[2] = -4796.2;
    let fit = resynthesize_phi3(&cfg, &st, &sc, &solver()).unwrap();
    assert!(fit.solution.objective.abs() < 1e-12);
    assert!(!fit.identifiable);
}

#[test]
fn phi3_fit_is_negative_reproducible_and_consistent() {
    let cfg = VehicleConfig::default();
    let st = SteeringProfile::named("fishhook").unwrap();
    for mode in [ConstraintMode::Disjunctive, ConstraintMode::Conservative] {
        let mut sc = scenario(ForceMode::Phi3, 151);
        sc.constraints = mode;
        let zero = resynthesize_phi3(&cfg, &st, &sc, &solver()).unwrap();
        sc.phi_guess[2] = -1000.0;
        let active = resynthesize_phi3(&cfg, &st, &sc, &solver()).unwrap();
        assert_eq!(zero.solution.report.status, SolveStatus::Converged);
        assert_eq!(active.solution.report.status, SolveStatus::Converged);
        assert!(zero.identifiable);
        assert!(zero.phi3 < 0.0, "{mode:?}: {}", zero.phi3);
        let spread = (zero.phi3 - active.phi3).abs() / zero.phi3.abs();
        assert!(spread <= 0.05, "{mode:?}: {} vs {}", zero.phi3, active.phi3);
        for (u, s) in zero.solution.forces.iter().zip(&zero.solution.states) {
            assert!((u.left - zero.phi3 * s.yaw_rate()).abs() <= 1e-8 * (1.0 + u.left.abs()));
            assert_eq!(u.right, -u.left);
        }
    }
}

#[test]
fn lookup_table_round_trips() {
    let rows = vec![
        LutRow {
            maneuver: "fishhook".into(),
            peak_deg: 4.0,
            reverse_deg: 4.0,
            ramp_up: 0.25,
            reversal: 0.35,
            phi3: -750.102_060_218_492_9,
            objective: 4.835e-3,
            converged: true,
        },
        LutRow {
            maneuver: "fishhook x1.25".into(),
            peak_deg: 5.0,
            reverse_deg: 5.0,
            ramp_up: 0.25,
            reversal: 0.35,
            phi3: 1.0 / 3.0,
            objective: 0.1,
            converged: false,
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lut.csv");
    write_lut(&path, &rows).unwrap();
    assert_eq!(read_lut(&path).unwrap(), rows);
    let header = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "maneuver,peak_deg,reverse_deg,ramp_up,reversal,phi3,objective,converged");
}
