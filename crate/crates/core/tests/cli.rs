use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crossing_sim::config::ScenarioConfig;
use crossing_sim::error::{RunError, StatsError};
use crossing_sim::runner::{self, execute_sweep, EPISODE_COLUMNS, MINUTE_COLUMNS};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crossing"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_scenario(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("scenario.json");
    fs::write(&p, body).unwrap();
    p
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn run_writes_the_three_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let scen = scenarios().join("paper_demand.json");
    let o = run(&[
        "run",
        "--scenario",
        scen.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(header(&out.join("episodes.csv")), EPISODE_COLUMNS.join(","));
    assert_eq!(header(&out.join("minutes.csv")), MINUTE_COLUMNS.join(","));
    let minutes = fs::read_to_string(out.join("minutes.csv")).unwrap();
    assert_eq!(minutes.lines().count(), 1 + 73);

    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 1);
    assert_eq!(summary["config"]["curb_band_cells"], 4);
    let expect = runner::sha256_hex(&fs::read(&scen).unwrap());
    assert_eq!(summary["scenario_sha256"], expect.as_str());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = write_scenario(tmp.path(), r#"{"duration": 10}"#);
    for dir in ["a", "b"] {
        let out = tmp.path().join(dir);
        let o = run(&[
            "run",
            "--scenario",
            scen.to_str().unwrap(),
            "--seed",
            "5",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    for f in ["episodes.csv", "minutes.csv", "summary.json"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn zero_demand_gives_empty_episodes_and_zero_minutes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let scen = scenarios().join("zero_demand.json");
    let o = run(&[
        "run",
        "--scenario",
        scen.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let episodes = fs::read_to_string(out.join("episodes.csv")).unwrap();
    assert_eq!(episodes.lines().count(), 1);
    let minutes = fs::read_to_string(out.join("minutes.csv")).unwrap();
    let rows: Vec<&str> = minutes.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(*r, format!("{i},0,0,0,"));
    }
}

#[test]
fn missing_scenario_fails_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(&[
        "run",
        "--scenario",
        tmp.path().join("nope.json").to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));
    assert!(!out.exists());
}

#[test]
fn invalid_scenario_names_the_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = write_scenario(tmp.path(), r#"{"crosswalk_position": 200, "road_length": 100}"#);
    let o = run(&[
        "run",
        "--scenario",
        scen.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("crosswalk"));

    let scen = write_scenario(tmp.path(), r#"{"lanes": 2}"#);
    let o = run(&[
        "run",
        "--scenario",
        scen.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("lanes"));
}

#[test]
fn json_format_writes_one_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = write_scenario(tmp.path(), r#"{"duration": 3}"#);
    let out = tmp.path().join("out");
    let o = run(&[
        "run",
        "--scenario",
        scen.to_str().unwrap(),
        "--seed",
        "2",
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    let bundle: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(bundle["minutes"].as_array().unwrap().len(), 3);
    assert!(bundle["episodes"].is_array());
    assert!(!out.join("episodes.csv").exists());
}

#[test]
fn batch_rejects_duplicate_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = write_scenario(tmp.path(), r#"{"duration": 2}"#);
    let out = tmp.path().join("out");
    let o = run(&[
        "batch",
        "--scenario",
        scen.to_str().unwrap(),
        "--seeds",
        "1,2,1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("duplicate seed 1"));
    assert!(!out.exists());
}

#[test]
fn single_seed_batch_equals_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = write_scenario(tmp.path(), r#"{"duration": 10}"#);
    let batch = runner::run_batch(&scen, &[7], &tmp.path().join("batch")).unwrap();
    let single = runner::run_scenario(&scen, 7, &tmp.path().join("run"), Default::default()).unwrap();
    let nc = batch.pct_noncompliant.unwrap();
    assert_eq!(nc.n, 1);
    assert_eq!(nc.sd, 0.0);
    assert!((nc.mean - 100.0 * single.summary.compliance.nc_fraction().unwrap()).abs() < 1e-12);
    assert_eq!(
        fs::read(tmp.path().join("batch/seed_7/episodes.csv")).unwrap(),
        fs::read(tmp.path().join("run/episodes.csv")).unwrap()
    );
}

#[test]
fn sweep_and_calibrate_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let scen = write_scenario(tmp.path(), r#"{"duration": 15}"#);
    let out = tmp.path().join("sweep");
    let o = run(&[
        "sweep",
        "--scenario",
        scen.to_str().unwrap(),
        "--veh-rates",
        "10,20",
        "--ped-rates",
        "4,8",
        "--seeds",
        "1,2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pooled = fs::read_to_string(out.join("pooled_minutes.csv")).unwrap();
    assert_eq!(pooled.lines().count(), 1 + 2 * 2 * 2 * 15);
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("sweep_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"], 8);
    assert_eq!(summary["regression"]["fit"]["beta"].as_array().unwrap().len(), 3);

    let out = tmp.path().join("cal");
    let o = run(&[
        "calibrate",
        "--scenario",
        scen.to_str().unwrap(),
        "--target",
        "0.0",
        "--seeds",
        "1,2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("forced floor"));

    let o = run(&[
        "calibrate",
        "--scenario",
        scen.to_str().unwrap(),
        "--target",
        "0.5",
        "--seeds",
        "1,2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let cal: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("calibration.json")).unwrap()).unwrap();
    let p = cal["overall"]["p_deliberate"].as_f64().unwrap();
    assert!(p > 0.0 && p < 1.0);
}

#[test]
fn degenerate_sweep_surfaces_regression_error() {
    let cfg = ScenarioConfig {
        duration: 5,
        ..Default::default()
    };
    // no pedestrians means no episodes, so no minute has a response value
    let err = execute_sweep(&cfg, &[10.0], &[0.0], &[1, 2], "x").unwrap_err();
    assert!(matches!(err, RunError::Stats(StatsError::InsufficientData { .. })));
    let err = execute_sweep(&cfg, &[], &[1.0], &[1], "x").unwrap_err();
    assert!(matches!(err, RunError::Empty(_)));
}
