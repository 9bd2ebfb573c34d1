use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pkrg(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pkrg"));
    c.current_dir(dir).args(args);
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("PKRG_")) {
        c.env_remove(k);
    }
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("spawn pkrg")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = r#"
[run]
stages = ["solve", "analyze", "cover", "dimension"]
output_dir = "run"
seed = 3

[solver]
alpha = 1.2
grid_points = 16
dt_seconds = 0.001
t_end_seconds = 0.01
initial_condition = "random-band"
initial_band = 1
snapshot_every = 2

[analysis]
epsilon = 0.01
bands = [1]
cube_centers = [[0.5, 0.5, 0.5], [0.2, 0.7, 0.4]]
packet_cube_level = 1

[covering]
levels = [1, 2]
barrier_points = 10

[dimension]
box_levels = 4
"#;

#[test]
fn admissible_epsilon_is_accepted_and_empty_pipeline_has_no_stages() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("c.toml"),
        "[run]\nstages = []\noutput_dir = \"out\"\n[solver]\nalpha = 1.2\n[analysis]\nepsilon = 0.01\n",
    )
    .unwrap();
    let o = pkrg(d.path(), &["--config", "c.toml", "run"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: Value = serde_json::from_str(&fs::read_to_string(d.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["stages"].as_array().unwrap().len(), 0);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn epsilon_above_the_cap_is_a_usage_error() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("c.toml"),
        "[run]\nstages = []\n[solver]\nalpha = 1.2\n[analysis]\nepsilon = 0.06\n",
    )
    .unwrap();
    let o = pkrg(d.path(), &["--config", "c.toml", "run"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("analysis.epsilon"), "{}", stderr(&o));
}

#[test]
fn environment_overrides_reach_validation() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("c.toml"), "[run]\nstages = []\n").unwrap();
    let o = pkrg(d.path(), &["--config", "c.toml", "run"], &[("PKRG_SOLVER__ALPHA", "1.6")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("solver.alpha"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_are_rejected() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("c.toml"), "[solver]\nt_end = 1.0\n").unwrap();
    let o = pkrg(d.path(), &["--config", "c.toml", "run"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_suite() {
    let d = tempfile::tempdir().unwrap();
    let o = pkrg(d.path(), &["verify", "nosuch"], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown suite"));
}

#[test]
fn passing_suites_exit_zero_with_results_file() {
    let d = tempfile::tempdir().unwrap();
    for suite in ["bounds", "geometry"] {
        let o = pkrg(d.path(), &["verify", suite, "--results", "r.json"], &[]);
        assert!(o.status.success(), "{suite}: {}", stderr(&o));
        let r: Value = serde_json::from_str(&fs::read_to_string(d.path().join("r.json")).unwrap()).unwrap();
        assert_eq!(r[0]["name"], suite);
        assert_eq!(r[0]["passed"], true);
    }
}

#[test]
fn stage_failure_names_the_stage() {
    let d = tempfile::tempdir().unwrap();
    fs::write(
        d.path().join("c.toml"),
        "[run]\nstages = [\"dimension\"]\noutput_dir = \"empty\"\n",
    )
    .unwrap();
    let o = pkrg(d.path(), &["--config", "c.toml", "run"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stage 'dimension'"), "{}", stderr(&o));
}

fn digests(dir: &Path) -> Vec<(String, String)> {
    let m: Value = serde_json::from_str(&fs::read_to_string(dir.join("run/manifest.json")).unwrap()).unwrap();
    m["stages"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|s| s["artifacts"].as_array().unwrap().clone())
        .map(|a| (a["path"].as_str().unwrap().to_string(), a["sha256"].as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn pipeline_is_deterministic() {
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let d = tempfile::tempdir().unwrap();
            fs::write(d.path().join("c.toml"), TINY).unwrap();
            let o = pkrg(d.path(), &["--threads", "1", "--config", "c.toml", "run"], &[]);
            assert!(o.status.success(), "{}", stderr(&o));
            d
        })
        .collect();
    let a = digests(runs[0].path());
    assert_eq!(a, digests(runs[1].path()));
    let paths: Vec<&str> = a.iter().map(|p| p.0.as_str()).collect();
    for want in [
        "trajectory.json",
        "energy.csv",
        "packets.csv",
        "estimates.csv",
        "goodness.csv",
        "covers.json",
        "barriers.json",
        "dimension.json",
        "dimension.csv",
    ] {
        assert!(paths.contains(&want), "missing {want} in {paths:?}");
    }
    let o = pkrg(runs[0].path(), &["report", "--run", "run"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rep: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(rep["solve"]["energy_report"]["worst_defect"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn subcommands_chain() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let ok = |o: Output| assert!(o.status.success(), "{}", stderr(&o));
    ok(pkrg(
        p,
        &["solve", "--alpha", "1.2", "--n", "16", "--dt", "1e-3", "--t-end", "0.004", "--ic", "taylor-green", "--out", "r"],
        &[],
    ));
    ok(pkrg(p, &["analyze", "--run", "r", "--bands", "1"], &[]));
    ok(pkrg(p, &["cover", "--run", "r", "--j", "2", "--eta", "2e-4", "--window", "0:1", "--barrier-points", "5"], &[]));
    ok(pkrg(p, &["dimension", "--covers", "r/covers.json", "--out", "r"], &[]));
    let covers: Value = serde_json::from_str(&fs::read_to_string(p.join("r/covers.json")).unwrap()).unwrap();
    let fams = covers["families"].as_array().unwrap();
    assert!(fams.iter().any(|f| f["provenance"]["kind"] == "c" && f["level"] == 2));
    assert_eq!(covers["eta"], 2e-4);
    let est = fs::read_to_string(p.join("r/estimates.csv")).unwrap();
    // every row carries the finite-difference packet rate
    assert!(est.lines().skip(1).all(|l| !l.split(',').nth(12).unwrap().is_empty()));
    let o = pkrg(p, &["solve", "--ic", "vortex", "--out", "s"], &[]);
    assert_eq!(o.status.code(), Some(2));
}
