use resvsim::runner::{
    calibrate, compare, forecast_eval, load_series, report_csv, run_replications, sweep, validate, write_experiment,
    CalibrationSpec, EvalOptions, ScenarioConfig, Target, Tunable, ValidateOptions, BUILTIN_SCENARIOS,
};
use resvsim::workload::{plan_workload, user_archetypes, write_trace};

/// A reference scenario cut down to a few simulated minutes.
fn short(name: &str, horizon: f64, reps: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::builtin(name).unwrap();
    c.horizon_s = horizon;
    c.replications = reps;
    c.workload.profile.period_s = horizon;
    c
}

#[test]
fn shipped_scenarios_are_named_after_their_keys() {
    for (name, _) in BUILTIN_SCENARIOS {
        let c = ScenarioConfig::builtin(name).unwrap();
        assert_eq!(c.name, name);
        c.validate().unwrap();
    }
}

#[test]
fn base_rate_override_drives_the_offered_load() {
    let base = short("mono_ref", 400.0, 1);
    let run = |rate: f64| {
        let c = base.with_overrides(&[format!("workload.base_rate={rate}")]).unwrap();
        assert_eq!(c.workload.users, None);
        assert_eq!(c.workload.profile.base_rate, rate);
        run_replications(&c).unwrap().reports[0].requests as f64
    };
    let ratio = run(20.0) / run(10.0);
    assert!((ratio - 2.0).abs() < 0.15, "ratio {ratio}");
}

#[test]
fn self_comparison_has_unit_ratios_and_swaps_negate() {
    let c = short("micro_ref", 300.0, 2);
    let a = run_replications(&c).unwrap();
    let b = run_replications(&c).unwrap();
    let cmp = compare(&a, &b);
    for row in &cmp.rows {
        assert_eq!(row.delta, 0.0, "{}", row.kpi);
        if let Some(r) = row.ratio {
            assert_eq!(r, 1.0, "{}", row.kpi);
        }
    }

    let m = run_replications(&short("mono_ref", 300.0, 2)).unwrap();
    let fwd = compare(&m, &a);
    let back = compare(&a, &m);
    for (f, b) in fwd.rows.iter().zip(&back.rows) {
        assert_eq!(f.delta, -b.delta, "{}", f.kpi);
    }
}

#[test]
fn microservices_answer_faster_than_the_monolith_at_peak() {
    let mono = run_replications(&short("mono_ref", 900.0, 2)).unwrap();
    let micro = run_replications(&short("micro_ref", 900.0, 2)).unwrap();
    assert!(micro.mean("mean_response_s").unwrap() < mono.mean("mean_response_s").unwrap());
}

#[test]
fn empty_sweep_is_rejected() {
    assert!(sweep(&short("sweep_users", 300.0, 1), "workload.users", &[]).is_err());
}

#[test]
fn replication_mean_lies_within_its_interval() {
    let res = run_replications(&short("micro_ref", 300.0, 3)).unwrap();
    assert_eq!(res.seeds, vec![42, 43, 44]);
    let s = &res.summary["mean_response_s"];
    let (lo, hi) = s.ci95.unwrap();
    assert!(lo <= s.mean && s.mean <= hi);
    let xs = res.values("mean_response_s");
    let (min, max) = xs.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(min <= s.mean && s.mean <= max);
    assert!(xs.iter().any(|&x| x != xs[0]), "replications should differ through seeds");
}

#[test]
fn single_replication_omits_the_interval() {
    let res = run_replications(&short("micro_ref", 300.0, 1)).unwrap();
    assert!(res.summary["mean_response_s"].ci95.is_none());
}

#[test]
fn csv_header_is_identical_across_scenarios() {
    let a = run_replications(&short("mono_ref", 300.0, 1)).unwrap();
    let b = run_replications(&short("spike_predictive", 300.0, 1)).unwrap();
    let header = |s: String| s.lines().next().unwrap().to_string();
    assert_eq!(header(report_csv(&a)), header(report_csv(&b)));
}

#[test]
fn report_files_carry_config_and_results() {
    let dir = tempfile::tempdir().unwrap();
    let c = short("micro_ref", 300.0, 1);
    let res = run_replications(&c).unwrap();
    let (json, csv) = write_experiment(dir.path(), "r", &c, &res).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(doc["config"]["horizon_s"], 300.0);
    assert_eq!(doc["result"]["reports"].as_array().unwrap().len(), 1);
    assert_eq!(std::fs::read_to_string(csv).unwrap().lines().count(), 2);
}

#[test]
fn calibration_without_tunables_returns_the_input() {
    let c = short("mono_ref", 300.0, 1);
    let spec = CalibrationSpec {
        targets: vec![Target { kpi: "mean_response_s".into(), value: 1.5 }],
        replications: 1,
        ..Default::default()
    };
    let res = calibrate(&c, &spec).unwrap();
    assert_eq!(res.config, c);
    assert_eq!(res.loss, res.initial_loss);
}

#[test]
fn unreachable_target_warns_with_best_effort() {
    let c = short("mono_ref", 300.0, 1);
    let spec = CalibrationSpec {
        targets: vec![Target { kpi: "mean_response_s".into(), value: 0.0 }],
        tunables: vec![Tunable { path: "topology.monolith.servers".into(), min: 100.0, max: 140.0 }],
        rounds: 1,
        steps: 2,
        replications: 1,
    };
    let res = calibrate(&c, &spec).unwrap();
    assert!(res.warning.is_some());
    assert!(res.loss <= res.initial_loss);
    let servers = res.config.topology.monolith.servers;
    assert!((100..=140).contains(&servers));
}

#[test]
fn calibration_reaches_the_monolith_response_target() {
    let c = short("mono_ref", 600.0, 1);
    let spec = CalibrationSpec {
        targets: vec![Target { kpi: "mean_response_s".into(), value: 1.5 }],
        tunables: vec![
            Tunable { path: "workload.base_rate".into(), min: 60.0, max: 110.0 },
            Tunable { path: "topology.monolith.contention.alpha".into(), min: 0.0, max: 0.5 },
        ],
        rounds: 1,
        steps: 6,
        replications: 1,
    };
    let res = calibrate(&c, &spec).unwrap();
    let a = &res.achieved[0];
    assert!(a.relative_error.abs() <= 0.10, "{}", res.table());
}

#[test]
fn unknown_calibration_kpi_is_an_error() {
    let spec = CalibrationSpec {
        targets: vec![Target { kpi: "happiness".into(), value: 1.0 }],
        replications: 1,
        ..Default::default()
    };
    assert!(calibrate(&short("mono_ref", 300.0, 1), &spec).is_err());
}

#[test]
fn validation_suite_passes_and_catches_a_wrong_rate() {
    let quick = ValidateOptions { quick: true, ..Default::default() };
    let checks = validate(&quick).unwrap();
    assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    let mm1 = &checks[0];
    assert_eq!(mm1.tolerance, 0.10);

    let wrong = validate(&ValidateOptions { simulated_mu: 1.1, ..quick }).unwrap();
    assert!(!wrong[0].passed, "M/M/1 check should fail: {:?}", wrong[0]);
}

#[test]
fn forecast_eval_reads_behavior_logs() {
    let dir = tempfile::tempdir().unwrap();
    let c = ScenarioConfig::builtin("micro_ref").unwrap();
    let arche = user_archetypes(c.workload.population, 1);
    let w = plan_workload(&c.workload, 3600.0, 1, "eval", &arche);
    let path = dir.path().join("log.jsonl");
    write_trace(&w.behavior, &path).unwrap();
    let series = load_series(&path, 60.0).unwrap();
    assert!(series.len() >= 59);
    let mut opts = EvalOptions::default();
    opts.params.period = Some(10);
    opts.refit_every = 5;
    let rep = forecast_eval(&series, &opts).unwrap();
    assert_eq!(rep.scores.len(), 3);
    assert!(rep.scores.iter().all(|s| (0.0..=100.0).contains(&s.accuracy_pct)));
}
