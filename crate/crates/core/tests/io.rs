use std::collections::BTreeSet;

use proptest::prelude::*;
use rollstab::io::*;
use rollstab::synthesis::read_lut;

fn config(text: &str, dir: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::from_toml(text).unwrap();
    cfg.output.dir = dir.to_path_buf();
    cfg
}

fn quiet() -> RunOptions {
    RunOptions { seed: 7, quiet: true }
}

fn keys(path: &std::path::Path) -> BTreeSet<String> {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object().unwrap().keys().cloned().collect()
}

#[test]
fn defaults_parse_from_an_empty_file() {
    let cfg = RunConfig::from_toml("").unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(cfg.grid().unwrap().n, 151);
    assert_eq!(cfg.vehicle, rollstab::vehicle::VehicleConfig::default());
}

#[test]
fn config_round_trips_through_toml() {
    let text = r#"
        [vehicle]
        mass = 1600.0
        [simulation]
        nodes = 61
        rho = 0.9
        integrator = "rk4"
        [steering]
        breakpoints = [[0.0, 0.0], [0.5, 3.0], [1.0, -3.0]]
        [scenario]
        constraints = "conservative"
        forces = "anti-symmetric"
        guess = "constant"
        guess_left = -1000.0
        guess_right = 1000.0
        gain = -750.0
        [solver]
        max_iter = 50
        hessian = "bfgs"
        [output]
        plot = false
    "#;
    let cfg = RunConfig::from_toml(text).unwrap();
    assert_eq!(cfg.vehicle.mass, 1600.0);
    assert_eq!(cfg.steering().unwrap().breakpoints().len(), 3);
    assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
}

#[test]
fn invalid_configs_are_config_errors() {
    for text in [
        "[simulation]\nnodes = 1",
        "[simulation]\nrho = 1.0",
        "[steering]\nprofile = \"zigzag\"",
        "[steering]\nprofile = \"fishhook\"\nbreakpoints = [[0.0, 1.0]]",
        "[vehicle]\nmass = -1.0",
        "[scenario]\nforces = \"sideways\"",
        "[output]\ncolour = true",
        "[simulation\nnodes = 3",
    ] {
        let err = RunConfig::from_toml(text).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{text}: {err}");
    }
}

#[test]
fn parse_errors_point_at_the_line() {
    let err = RunConfig::from_toml("[simulation]\nnodes = \"many\"\n").unwrap_err().to_string();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn random_guess_follows_the_seed() {
    let cfg = RunConfig::from_toml("[scenario]\nguess = \"random\"\nguess_amplitude = 500.0").unwrap();
    let a = cfg.scenario(1).unwrap();
    assert_eq!(a, cfg.scenario(1).unwrap());
    assert_ne!(a.guess, cfg.scenario(2).unwrap().guess);
    match a.guess {
        rollstab::transcription::InitialGuess::Constant { left, right } => {
            assert_eq!(left, -right);
            assert!(left.abs() <= 500.0);
            assert_eq!(a.phi_guess[2], left);
        }
        other => panic!("{other:?}"),
    }
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), Just(0.1 + 0.2), Just(-0.0), Just(1e-300)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn trajectory_csv_round_trips_exactly(values in prop::collection::vec(prop::array::uniform20(finite()), 1..5), lambda in any::<bool>()) {
        let rows: Vec<TrajectoryRow> = values
            .iter()
            .map(|v| TrajectoryRow {
                t: v[0], x: v[1], y: v[2], z: v[3], theta_x: v[4], theta_z: v[5], x_dot: v[6], y_dot: v[7],
                z_dot: v[8], theta_x_dot: v[9], theta_z_dot: v[10], f_left: v[11], f_right: v[12],
                lambda_left: lambda.then_some(v[13]), lambda_right: lambda.then_some(v[14]),
                f1: v[15], f2: v[16], f3: v[17], f4: v[18], r: v[19],
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trajectory(&path, &rows).unwrap();
        let back = read_trajectory(&path).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            prop_assert_eq!(a, b);
            prop_assert_eq!(a.t.to_bits(), b.t.to_bits());
        }
    }
}

#[test]
fn closed_loop_artifacts_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let analyze = config("[simulation]\nnodes = 151\n[steering]\nprofile = \"fishhook-severe\"", &dir.path().join("a"));
    let out = run_analyze(&analyze, &quiet()).unwrap();
    assert_eq!(out.exit_code(), 0);
    let r = out.report.rollover.as_ref().unwrap();
    assert!(r.lifted_off() && !r.stabilized, "{r:?}");
    assert_eq!(out.report.phi3, Some(0.0));

    let csv = dir.path().join("a/closed_loop.csv");
    let rows = read_trajectory(&csv).unwrap();
    assert_eq!(rows.len(), 151);
    let header = std::fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, TRAJECTORY_COLUMNS.join(","));
    assert!(rows.iter().all(|r| r.lambda_left.is_none() && r.f_right == -r.f_left));
    assert!(dir.path().join("a/plot_closed_loop.py").exists());

    let validate =
        config("[simulation]\nnodes = 151\n[scenario]\ngain = -750.0\ncompare_gain = -900.0", &dir.path().join("v"));
    let out = run_validate(&validate, &quiet()).unwrap();
    let cl = out.report.closed_loop.as_ref().unwrap();
    assert!(cl.all_satisfied && cl.completed);
    assert!(cl.comparison.is_some());

    let a = keys(&dir.path().join("a/report.json"));
    assert_eq!(a, keys(&dir.path().join("v/report.json")));
    let back = Report::read(&dir.path().join("v/report.json")).unwrap();
    assert_eq!(back.schema, REPORT_SCHEMA);
    assert_eq!(back.config, validate);
}

#[test]
fn optimize_writes_the_documented_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("[simulation]\nnodes = 31\n[scenario]\nforces = \"anti-symmetric\"", dir.path());
    let out = run_optimize(&cfg, &quiet()).unwrap();
    assert_eq!(out.exit_code(), 0, "{:?}", out.report);
    let rows = read_trajectory(&dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(rows.len(), 31);
    assert!(rows.iter().all(|r| r.lambda_left.is_some() && r.r.is_finite()));
    let report = Report::read(&dir.path().join("report.json")).unwrap();
    assert_eq!(report.status, "converged");
    assert!(report.kkt.is_some() && report.objective.is_some());
    assert_eq!(report.phi, None);
    assert_eq!(report.config.vehicle, rollstab::vehicle::VehicleConfig::default());
}

#[test]
fn solver_failure_is_reported_with_status() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("[simulation]\nnodes = 31\n[solver]\nmax_iter = 2", dir.path());
    let out = run_optimize(&cfg, &quiet()).unwrap();
    assert_eq!(out.exit_code(), 3);
    let report = Report::read(&dir.path().join("report.json")).unwrap();
    assert_eq!(report.status, "max-iterations");
    assert!(!report.converged);
}

#[test]
fn sweep_writes_one_table_row_per_maneuver() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        "[simulation]\nnodes = 31\n[steering]\nsweep = [{ peak_deg = 3.0, reverse_deg = 3.0 }, { peak_deg = 4.0, reverse_deg = 4.0 }, { peak_deg = 5.0, reverse_deg = 5.0 }]",
        dir.path(),
    );
    let out = run_sweep(&cfg, &quiet()).unwrap();
    let lut = read_lut(&dir.path().join("lut.csv")).unwrap();
    assert_eq!(lut.len(), 3);
    assert_eq!(lut.iter().map(|r| r.peak_deg).collect::<Vec<_>>(), vec![3.0, 4.0, 5.0]);
    assert_eq!(out.report.sweep.as_deref(), Some(lut.as_slice()));
    for k in 0..3 {
        assert!(dir.path().join(format!("sweep-{k:03}/trajectory.csv")).exists());
    }

    // a gain from the table keeps its own maneuver satisfied
    let p = &cfg.steering.sweep[1];
    let mut v = cfg.clone();
    v.steering = SteeringSection { fishhook: Some(p.clone()), ..Default::default() };
    v.scenario.gain = Some(lut[1].phi3);
    v.output.dir = dir.path().join("validate");
    let out = run_validate(&v, &quiet()).unwrap();
    assert!(out.report.closed_loop.unwrap().all_satisfied);
}

#[test]
fn empty_sweep_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_sweep(&config("", dir.path()), &quiet()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("sweep is empty"));
}

#[test]
fn synthesize_needs_a_gain_mode() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_synthesize(&config("[scenario]\nforces = \"free\"", dir.path()), &quiet()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
