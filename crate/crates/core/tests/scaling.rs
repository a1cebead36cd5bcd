use resvsim::autoscale::Trigger;
use resvsim::runner::{run_scenario, ScenarioConfig};

fn scale_ups(cfg: &ScenarioConfig) -> Vec<(f64, f64, Trigger)> {
    let run = run_scenario(cfg, cfg.seed).unwrap();
    run.output
        .scaling_log
        .iter()
        .filter(|a| a.delta() > 0 && a.decided_at_s > 0.0)
        .map(|a| (a.decided_at_s, a.effective_at_s, a.trigger))
        .collect()
}

fn spike(cfg: &ScenarioConfig) -> (f64, f64) {
    let s = cfg.workload.profile.spikes[0];
    (s.start_s, s.duration_s)
}

#[test]
fn oracle_capacity_lands_by_spike_onset() {
    let cfg = ScenarioConfig::builtin("spike_predictive").unwrap().with_overrides(&["forecast.oracle=true"]).unwrap();
    let (start, _) = spike(&cfg);
    let delay = cfg.scaling.provisioning_delay_s;
    let ups = scale_ups(&cfg);
    let early: Vec<_> =
        ups.iter().filter(|(d, _, _)| *d < start && *d >= start - delay - 2.0 * cfg.scaling.interval_s).collect();
    assert!(!early.is_empty(), "{ups:?}");
    for (d, e, t) in &early {
        assert_eq!(*t, Trigger::Predictive);
        assert!((e - d - delay).abs() < 1e-9);
        assert!(*e <= start + cfg.scaling.interval_s);
    }
}

#[test]
fn reactive_capacity_trails_the_spike() {
    let cfg = ScenarioConfig::builtin("spike_reactive").unwrap();
    let (start, dur) = spike(&cfg);
    let ups = scale_ups(&cfg);
    let during: Vec<_> = ups.iter().filter(|(d, _, _)| *d >= start && *d < start + dur).collect();
    assert!(!during.is_empty(), "{ups:?}");
    assert!(during.iter().all(|(_, _, t)| *t == Trigger::Reactive));
    assert!(during.iter().all(|(_, e, _)| *e >= start + cfg.scaling.provisioning_delay_s), "{during:?}");
    // Most stations need the full sustain window of hot intervals first.
    let sustain = cfg.scaling.sustain as f64 * cfg.scaling.interval_s;
    let quick = during.iter().filter(|(d, _, _)| *d < start + sustain).count();
    assert!(quick * 4 < during.len(), "{during:?}");
}

#[test]
fn unscaled_monolith_keeps_its_servers() {
    let cfg = ScenarioConfig::builtin("mono_ref").unwrap();
    let run = run_scenario(&cfg, 1).unwrap();
    assert!(run.output.scaling_log.is_empty());
    let servers = cfg.topology.monolith.servers as f64;
    assert!(run.output.series[0].instances.iter().all(|&n| n as f64 == servers));
}
