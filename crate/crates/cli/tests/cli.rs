use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
    "ground_truth": {"d": 8, "r_star": 2, "sigmas": [1.4142135623730951, 1.0]},
    "ensemble": {"m": 300},
    "grid": {"mu": [0.05], "r_hat": [8], "t_max": [400]},
    "references": {"ranks": [1, 2], "max_iters": 50000},
    "outputs": {"stride": 5},
    "verify": {"samples": 100, "pairs": 5, "probes": 20}
}"#;

fn msense(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msense"))
        .args(args)
        .env("MSENSE_OUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn with(patch: &str) -> String {
    let mut base: serde_json::Value = serde_json::from_str(SMALL).unwrap();
    let patch: serde_json::Value = serde_json::from_str(patch).unwrap();
    for (k, v) in patch.as_object().unwrap() {
        for (kk, vv) in v.as_object().unwrap() {
            base[k][kk] = vv.clone();
        }
    }
    base.to_string()
}

#[test]
fn run_writes_into_the_override_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = dir.path().join("results");
    let o = msense(&["run", &cfg], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["summary.json", "run_000.csv", "run_000_rel_err.svg", "ground_truth.json", "best_rank_s1.json", "best_rank_s2.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(!dir.path().join("out").exists());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("run_000.csv"));
}

#[test]
fn empty_grid_exits_with_validation_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &with(r#"{"grid": {"alpha": []}}"#));
    let out = dir.path().join("results");
    let o = msense(&["run", &cfg], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.alpha"));
    assert!(!out.exists());
}

#[test]
fn bad_inputs_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let unknown = write_config(dir.path(), "u.json", r#"{"grid": {"alpha": [0.001], "beta": 1}}"#);
    assert_eq!(msense(&["run", &unknown], &out).status.code(), Some(1));
    let broken = write_config(dir.path(), "b.json", "{not json");
    assert_eq!(msense(&["verify", &broken], &out).status.code(), Some(1));
    let missing = dir.path().join("nope.json");
    assert_eq!(msense(&["run", missing.to_str().unwrap()], &out).status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn divergent_run_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &with(r#"{"grid": {"alpha": [1.0], "mu": [50.0]}}"#));
    let out = dir.path().join("results");
    let o = msense(&["run", &cfg], &out);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["per_run"][0]["status"], "diverged");
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let exact = write_config(dir.path(), "fo.json", &with(r#"{"ensemble": {"kind": "full_observation"}}"#));
    let o = msense(&["verify", &exact, "--suite", "all"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 assertion failures"));

    // Four measurements cannot pin down a unique minimizer, so restarts disagree.
    let starved = write_config(dir.path(), "m4.json", &with(r#"{"ensemble": {"m": 4}}"#));
    let o = msense(&["verify", &starved, "--suite", "landscape"], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL [Landscape] restart agreement"));
}

#[test]
fn plot_and_best_rank() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = dir.path().join("results");
    assert_eq!(msense(&["run", &cfg], &out).status.code(), Some(0));

    let svg = dir.path().join("dist.svg");
    let csv = out.join("run_000.csv");
    let o = msense(&["plot", "--kind", "distances", "--out", svg.to_str().unwrap(), csv.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0));
    assert!(fs::read_to_string(&svg).unwrap().contains("<polyline"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t,loss,bogus\n0,1,2\n").unwrap();
    let o = msense(&["plot", "--kind", "rel_err", "--out", svg.to_str().unwrap(), bad.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));

    let o = msense(&["best-rank", &cfg, "--s", "1"], &out);
    assert_eq!(o.status.code(), Some(0));
    let printed: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(printed["s"], 1);
    let stored = fs::read_to_string(out.join("best_rank_s1.json")).unwrap();
    assert_eq!(serde_json::from_str::<serde_json::Value>(&stored).unwrap(), printed);

    assert_eq!(msense(&["best-rank", &cfg, "--s", "3"], &out).status.code(), Some(1));
}

#[test]
fn profile_flag_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = dir.path().join("results");
    let o = msense(&["--threads", "2", "--profile", "desk", "best-rank", &cfg, "--s", "2"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = msense(&["--profile", "nonsense", "run", &cfg], &out);
    assert_ne!(o.status.code(), Some(0));
}
