use std::path::Path;
use std::process::{Command, Output};

fn resvsim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resvsim"))
        .args(args)
        .env("RESVSIM_OUT_DIR", out)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn missing_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = resvsim(&["run", "--config", "no/such/file.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("not found"));
}

#[test]
fn bad_field_is_reported_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"name": "x", "horizon_s": -5}"#).unwrap();
    let o = resvsim(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("horizon_s"), "{}", text(&o.stderr));
}

#[test]
fn run_is_deterministic_and_writes_reports_to_env_dir() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["run", "--config", "mono_ref", "--seed", "42", "--quick", "--replications", "2"];
    assert!(resvsim(&args, a.path()).status.success());
    assert!(resvsim(&args, b.path()).status.success());
    for f in ["mono_ref.json", "mono_ref.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between identical runs");
    }
    let doc = read_json(&a.path().join("mono_ref.json"));
    assert_eq!(doc["result"]["seeds"], serde_json::json!([42, 43]));
}

#[test]
fn out_dir_flag_beats_the_environment() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let o = resvsim(
        &[
            "run",
            "--config",
            "micro_ref",
            "--quick",
            "--replications",
            "1",
            "--out-dir",
            flag_dir.path().to_str().unwrap(),
        ],
        env_dir.path(),
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(flag_dir.path().join("micro_ref.csv").exists());
    assert!(!env_dir.path().join("micro_ref.csv").exists());
}

#[test]
fn override_shows_up_in_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = resvsim(
        &["run", "--config", "mono_ref", "--quick", "--replications", "1", "--override", "workload.base_rate=50"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    let doc = read_json(&dir.path().join("mono_ref.json"));
    assert_eq!(doc["config"]["workload"]["profile"]["base_rate"], 50.0);
    assert!(doc["config"]["workload"]["users"].is_null());
}

#[test]
fn unknown_override_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = resvsim(&["run", "--config", "mono_ref", "--override", "workload.nope=1"], dir.path());
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("nope"));
}

#[test]
fn compare_of_identical_configs_gives_unit_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let o = resvsim(&["compare", "--config", "micro_ref", "micro_ref", "--quick", "--replications", "2"], dir.path());
    assert!(o.status.success(), "{}", text(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("compare_micro_ref_micro_ref.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let ratio_col = header.iter().position(|h| *h == "ratio").unwrap();
    for line in csv.lines().skip(1) {
        let ratio = line.split(',').nth(ratio_col).unwrap();
        if !ratio.is_empty() {
            assert_eq!(ratio.parse::<f64>().unwrap(), 1.0, "{line}");
        }
    }
}

#[test]
fn sweep_writes_a_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = resvsim(
        &[
            "sweep",
            "--config",
            "sweep_users",
            "--param",
            "workload.users",
            "--values",
            "500,1000",
            "--quick",
            "--replications",
            "1",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sweep_sweep_users.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("workload.users,"));
}

#[test]
fn sweep_without_values_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = resvsim(&["sweep", "--config", "sweep_users", "--param", "workload.users"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn validate_quick_reports_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = resvsim(&["validate", "--quick"], dir.path());
    assert!(o.status.success(), "{}", text(&o.stdout));
    let out = text(&o.stdout);
    assert_eq!(out.lines().filter(|l| l.starts_with("[PASS]")).count(), 6);
    assert!(out.lines().all(|l| l.contains("tolerance") && l.contains("measured")));
}

#[test]
fn forecast_eval_scores_all_models_on_the_shipped_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = resvsim(&["forecast-eval"], dir.path());
    assert!(o.status.success(), "{}", text(&o.stderr));
    let out = text(&o.stdout);
    for m in ["seasonal-naive", "ar-ls", "tree-ensemble"] {
        assert!(out.contains(m), "{out}");
    }
}

#[test]
fn calibrate_with_no_tunables_echoes_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"targets": [{"kpi": "mean_response_s", "value": 1.5}], "tunables": [], "replications": 1}"#,
    )
    .unwrap();
    let o = resvsim(&["calibrate", "--config", "mono_ref", "--quick", "--spec", spec.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", text(&o.stderr));
    let tuned = read_json(&dir.path().join("mono_ref_calibrated.json"));
    assert_eq!(tuned["topology"]["monolith"]["servers"], 122);
}
