use std::path::Path;
use std::process::Command;

fn scbf(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_scbf"))
        .args(args)
        .env("SCBF_THREADS", "1")
        .current_dir(dir)
        .output()
        .unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn simulate_writes_metrics_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.toml", "T = 0.2\nsamples = 5\n");
    let (code, err) = scbf(dir.path(), &["simulate", "--config", &cfg, "--paths", "16", "--seed", "9", "--out", "a"]);
    assert_eq!(code, 0, "{err}");
    let (code, _) = scbf(dir.path(), &["simulate", "--config", &cfg, "--paths", "16", "--seed", "9", "--out", "b"]);
    assert_eq!(code, 0);
    for f in ["simulate.csv", "metrics.json", "experiment.toml", "checkpoint.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between reruns");
    }
    let csv = std::fs::read_to_string(dir.path().join("a/simulate.csv")).unwrap();
    assert!(csv.starts_with("series,t,value,stderr\n"));
    assert!(csv.contains("energy_residual,"));
}

#[test]
fn format_flag_restricts_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = scbf(dir.path(), &["simulate", "--paths", "1", "--format", "json", "--out", "o"]);
    assert_eq!(code, 0, "{err}");
    assert!(dir.path().join("o/metrics.json").exists());
    assert!(!dir.path().join("o/simulate.csv").exists());
}

#[test]
fn config_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "T = 1\nvelocity = 3\n");
    let (code, err) = scbf(dir.path(), &["simulate", "--config", &bad]);
    assert_eq!(code, 4);
    assert!(err.contains("velocity"), "{err}");

    let contradiction = write(dir.path(), "c.toml", "regime = \"critical\"\nr = 5\n");
    assert_eq!(scbf(dir.path(), &["harnack", "--config", &contradiction]).0, 4);

    assert_eq!(scbf(dir.path(), &["simulate", "--format", "xml"]).0, 4);
    assert_eq!(scbf(dir.path(), &["frobnicate"]).0, 4);
    let missing = dir.path().join("nope.toml");
    assert_eq!(scbf(dir.path(), &["simulate", "--config", missing.to_str().unwrap()]).0, 4);
}

#[test]
fn blowup_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // explicit damping with a huge step and start diverges immediately
    let cfg = write(
        dir.path(),
        "blow.toml",
        "dt = 0.5\nT = 5\nr = 5\nbeta = 10\n[initial]\nkind = \"random\"\nnorm = 100\n",
    );
    let (code, err) = scbf(dir.path(), &["simulate", "--config", &cfg, "--paths", "1"]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn failing_verdict_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    // too few paths for the contraction fit to resolve the rate at this tolerance
    let cfg = write(
        dir.path(),
        "fail.toml",
        "T = 0.4\ntimes = [0.1, 0.2, 0.3, 0.4]\nmode = \"tilted\"\ndistance = 0.1\nrate_factor = 50.0\n",
    );
    let (code, err) = scbf(dir.path(), &["couple", "--config", &cfg, "--paths", "4"]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("FAIL"));
}
