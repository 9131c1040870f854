use std::process::Command;

fn viscolab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_viscolab"))
}

fn manifest(dir: &std::path::Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn solve_stationary_writes_manifest_and_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let out = viscolab()
        .args(["solve-stationary", "--grid", "32", "--seed", "5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(
        stdout.contains("all required checks passed: true"),
        "{stdout}"
    );
    let m = manifest(dir.path());
    assert_eq!(m["experiment"], "stationary");
    assert_eq!(m["seed"], 5);
    assert_eq!(m["constants"]["n"], serde_json::json!([32]));
    assert!(dir.path().join("solution.csv").exists());
}

#[test]
fn two_dimensional_grid_flag() {
    let dir = tempfile::tempdir().unwrap();
    let status = viscolab()
        .args(["certify", "--grid", "12,16", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        manifest(dir.path())["constants"]["n"],
        serde_json::json!([12, 16])
    );
}

#[test]
fn failed_checks_still_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sublinear.toml");
    std::fs::write(
        &cfg,
        r#"
        [grid]
        dim = 1
        counts = [32]
        [problem.hamiltonian.family]
        kind = "sublinear"
        b = [0.5]
        ell = [{ freq = [1], cos = 1.0 }]
        "#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = viscolab()
        .args(["sweep-eps", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(manifest(&out_dir)["all_required_passed"], false);
}

#[test]
fn bad_input_is_an_error() {
    let status = viscolab()
        .args(["evolve", "--grid", "8,8,8"])
        .status()
        .unwrap();
    assert!(!status.success());
    let status = viscolab()
        .args(["evolve", "--config", "/nonexistent.toml"])
        .status()
        .unwrap();
    assert!(!status.success());
}
