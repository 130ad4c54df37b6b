use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_peercharge"))
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "run", "--m", "8", "--budget", "20", "--reps", "3", "--beta", "0.2,0.5", "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "summary.csv",
        "metadata.json",
        "ows_b0.2_aggregate.csv",
        "owa_b0.5_efficiency.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn spec_file_round_trips_through_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = bin().arg("spec").output().unwrap();
    assert!(spec.status.success());
    let path = dir.path().join("spec.toml");
    std::fs::write(&path, &spec.stdout).unwrap();
    let out = bin()
        .arg("run")
        .arg(&path)
        .args([
            "--m",
            "6",
            "--budget",
            "10",
            "--reps",
            "2",
            "--protocol",
            "swt",
            "--out",
        ])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out").join("swt_b0.8_aggregate.csv").exists());
}

#[test]
fn bad_config_exits_1() {
    let out = bin().args(["run", "--m", "1", "--reps", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["run", "--beta", "1.5", "--reps", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unreachable_budget_exits_2() {
    // a single pair balances in one step, after which nothing is useful
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "run",
            "--m",
            "2",
            "--budget",
            "5",
            "--reps",
            "1",
            "--protocol",
            "ows",
            "--beta",
            "0",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_exit_codes() {
    let ok = bin().args(["verify", "adversarial"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("[PASS] adversarial"));
    let contraction = bin()
        .args(["verify", "contraction", "--instances", "20"])
        .output()
        .unwrap();
    assert_eq!(contraction.status.code(), Some(0));
    let drift = bin().args(["verify", "drift", "--instances", "12"]).output().unwrap();
    assert_eq!(drift.status.code(), Some(3));
}

#[test]
fn once_dumps_every_useful_interaction() {
    let out = bin()
        .args(["once", "--m", "10", "--budget", "25", "--protocol", "owa"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 26);
}
