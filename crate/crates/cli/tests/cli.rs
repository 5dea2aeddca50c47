use std::path::Path;
use std::process::{Command, Output};

fn rollstab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rollstab")).args(args).current_dir(dir).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    std::fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn analyze_writes_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", "[simulation]\nnodes = 61\n[steering]\nprofile = \"fishhook-severe\"\n");
    let out = rollstab(&["analyze", "--config", &cfg, "--out", "res", "--quiet"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stderr.is_empty());
    for f in ["closed_loop.csv", "plot_closed_loop.py", "report.json"] {
        assert!(dir.path().join("res").join(f).exists(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("res/report.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "analyze");
    assert_eq!(report["rollover"]["stabilized"], false);
}

#[test]
fn progress_goes_to_stderr_unless_quiet() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", "[simulation]\nnodes = 31\n[scenario]\ngain = -750.0\n");
    let out = rollstab(&["validate", "--config", &cfg, "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wrote"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let n1 = write(dir.path(), "n1.toml", "[simulation]\nnodes = 1\n");
    let unknown = write(dir.path(), "p.toml", "[steering]\nprofile = \"zigzag\"\n");
    let empty = write(dir.path(), "e.toml", "");
    for (verb, cfg) in [("optimize", n1.as_str()), ("validate", unknown.as_str()), ("sweep", empty.as_str())] {
        let out = rollstab(&[verb, "--config", cfg, "--quiet"], dir.path());
        assert_eq!(out.status.code(), Some(2), "{verb} {cfg}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = rollstab(&["optimize", "--config", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = rollstab(&["fly"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", "[simulation]\nnodes = 31\n[solver]\nmax_iter = 2\n");
    let out = rollstab(&["optimize", "--config", &cfg, "--out", "res", "--quiet"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(dir.path().join("res/report.json").exists());
}

#[test]
fn model_singularity_exits_with_four() {
    // zero speed leaves the slip angle undefined
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "z.toml", "[simulation]\nnodes = 31\ninitial_speed = 1e-9\n");
    let out = rollstab(&["analyze", "--config", &cfg, "--out", "res", "--quiet"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
