use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(rel)
        .to_string_lossy()
        .into_owned()
}

fn avp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avp-vv")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn out_dir(t: &tempfile::TempDir, name: &str) -> String {
    t.path().join(name).to_string_lossy().into_owned()
}

#[test]
fn nominal_run_passes() {
    let t = tempfile::tempdir().unwrap();
    let o = avp(&[
        "run", "--scenario", &data("scenarios/nominal.json"), "--config", &data("configs/default.json"),
        "--out", &out_dir(&t, "r"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(t.path().join("r/manifest.json").exists());
    assert!(t.path().join("r/nominal-s0.report.json").exists());
}

#[test]
fn adversarial_run_without_aeb_violates_the_safety_goal() {
    let t = tempfile::tempdir().unwrap();
    let o = avp(&[
        "run", "--scenario", &data("scenarios/crossing.json"), "--config", &data("configs/aeb_off.json"),
        "--out", &out_dir(&t, "r"),
    ]);
    assert_eq!(code(&o), 2);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.contains("SAFETY-GOAL") && l.contains("VIOLATED")), "{stdout}");
}

#[test]
fn missing_files_are_tool_errors() {
    let t = tempfile::tempdir().unwrap();
    let o = avp(&["run", "--scenario", "does/not/exist.json", "--out", &out_dir(&t, "r")]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("exist.json"));
    let o = avp(&["monitor", "nope.csv"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn monitor_on_the_shipped_trace_passes() {
    let o = avp(&["monitor", &data("traces/nominal.csv"), "--requirements", &data("requirements.stl")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn search_budget_below_population_is_rejected() {
    let t = tempfile::tempdir().unwrap();
    let o = avp(&["search", "--budget", "10", "--pop", "20", "--out", &out_dir(&t, "s")]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("pop"));
}

#[test]
fn mine_on_the_fixture_store_reproduces_the_worked_thresholds() {
    let t = tempfile::tempdir().unwrap();
    let o = avp(&[
        "mine", &data("fixtures/trigger_distance.jsonl"), "--param", "ped1.trigger_distance",
        "--out", &out_dir(&t, "m"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mined: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(t.path().join("m/mined.json")).unwrap()).unwrap();
    assert_eq!(mined[0]["threshold"], 6.0);
    assert_eq!(mined[0]["margin"], 2.0);
    assert_eq!(mined[0]["separable"], true);

    let o = avp(&[
        "mine", &data("fixtures/walk_speed.jsonl"), "--space", &data("fixtures/walk_speed_space.json"),
        "--out", &out_dir(&t, "w"),
    ]);
    assert_eq!(code(&o), 0);
    let p: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(t.path().join("w/proposal.json")).unwrap()).unwrap();
    let hi = p["parameters"][0]["proposed"][1].as_f64().unwrap();
    assert!((hi - 1.6).abs() < 0.05, "cap {hi}");
}

#[test]
fn search_is_identical_across_worker_counts_and_reports_aggregate() {
    let t = tempfile::tempdir().unwrap();
    let mut manifests = Vec::new();
    for w in ["1", "3"] {
        let dir = out_dir(&t, &format!("s{w}"));
        let o = avp(&[
            "search", "--config", &data("configs/aeb_off.json"), "--budget", "40", "--pop", "20",
            "--seed", "2", "--workers", w, "--out", &dir,
        ]);
        assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
        manifests.push(std::fs::read(PathBuf::from(&dir).join("manifest.json")).unwrap());
    }
    assert_eq!(manifests[0], manifests[1]);

    let o = avp(&["report", &t.path().to_string_lossy(), "--out", &out_dir(&t, "rep")]);
    assert_eq!(code(&o), 0);
    let fronts = std::fs::read_to_string(t.path().join("rep/fronts.csv")).unwrap();
    assert!(fronts.starts_with("archive,index,min_ped_distance"));
    assert!(fronts.lines().count() > 1);
}
