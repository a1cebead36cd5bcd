//! Single runs, replications with confidence intervals, paired comparisons,
//! parameter sweeps and load-capacity search.

use std::collections::BTreeMap;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::config::ScenarioConfig;
use crate::analytics::{aggregate, segment_users, DemandForecaster, ForecastParams};
use crate::autoscale::ScalingKind;
use crate::engine::{RngStream, RunOutput, SimInputs, Simulation};
use crate::metrics::{assemble_report, scalability, KpiReport, CSV_COLUMNS};
use crate::topology::build;
use crate::workload::{plan_requests, plan_workload, user_archetypes, ProfileKind, WorkloadConfig};
use crate::{Error, Result};

pub struct RunResult {
    pub seed: u64,
    pub report: KpiReport,
    pub output: RunOutput,
}

/// Forecaster season length in intervals: the diurnal period when there is
/// one, otherwise one run length (history runs repeat the same profile).
fn season_intervals(cfg: &ScenarioConfig) -> usize {
    let p = &cfg.workload.profile;
    let span = match p.kind {
        ProfileKind::Diurnal => p.period_s,
        _ => cfg.horizon_s,
    };
    ((span / cfg.forecast.interval_s).round() as usize).max(1)
}

fn type_mix(w: &WorkloadConfig) -> [f64; 4] {
    let g = &w.grammar;
    [1.0, g.p_view, g.p_book, g.p_book * g.p_pay]
}

fn interval_counts(times: &[f64], cfg: &ScenarioConfig) -> Result<Vec<f64>> {
    Ok(aggregate(times, 0.0, cfg.forecast.interval_s, Some(cfg.horizon_s))?.values())
}

/// Execute one replication of a scenario.
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<RunResult> {
    cfg.validate()?;
    let horizon = cfg.horizon_s;
    let archetypes = user_archetypes(cfg.workload.population, seed);
    let live = plan_requests(&cfg.workload, horizon, seed, "live", &archetypes);
    let topology = build(cfg.architecture, &cfg.topology)?;

    let fc = &cfg.forecast;
    let mut relevance = Vec::new();
    let mut history = Vec::new();
    for d in 0..fc.history_runs {
        let stream = format!("history-{d}");
        let day = if d == 0 {
            plan_workload(&cfg.workload, horizon, seed, &stream, &archetypes)
        } else {
            plan_requests(&cfg.workload, horizon, seed, &stream, &archetypes)
        };
        history.extend(interval_counts(&day.arrival_times(), cfg)?);
        if d == 0 && !day.behavior.is_empty() {
            let mut rng = RngStream::new(seed, "segmentation");
            let seg = segment_users(&day.behavior, &cfg.segmentation, &mut rng)?;
            relevance = (0..cfg.workload.population).map(|u| seg.relevance(u, &cfg.segmentation)).collect();
        }
    }
    let forecaster = if fc.oracle {
        let mut counts = interval_counts(&live.arrival_times(), cfg)?;
        counts.extend(std::iter::repeat_n(0.0, 4));
        Some(DemandForecaster::oracle(counts))
    } else if fc.history_runs > 0 || cfg.scaling.kind == ScalingKind::Predictive {
        let params = ForecastParams {
            period: fc.params.period.or(Some(season_intervals(cfg))),
            seed: fc.params.seed ^ seed,
            ..fc.params.clone()
        };
        Some(DemandForecaster::trained(history, fc.model, params, fc.refit_every)?)
    } else {
        None
    };

    let mut inputs = SimInputs::new(topology, live.requests, horizon);
    inputs.seed = seed;
    inputs.warmup_s = cfg.warmup_s();
    inputs.scaling = cfg.scaling.clone();
    inputs.forecaster = forecaster;
    inputs.forecast_interval_s = fc.interval_s;
    inputs.type_mix = type_mix(&cfg.workload);
    inputs.relevance = relevance;
    inputs.default_relevance = cfg.segmentation.default_relevance;
    inputs.faults = cfg.faults.clone();
    let output = Simulation::new(inputs)?.run()?;
    let report = assemble_report(&output, &cfg.metrics);
    debug!(
        "{} seed {seed}: mean {:.3}s p95 {:.3}s, {} requests",
        cfg.name, report.mean_response_s, report.p95_response_s, report.requests
    );
    Ok(RunResult { seed, report, output })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
    /// 95% Student-t interval; omitted below two replications.
    pub ci95: Option<(f64, f64)>,
}

pub fn summarize(xs: &[f64]) -> Summary {
    let n = xs.len();
    if n == 0 {
        return Summary::default();
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return Summary { mean, sd: 0.0, n, ci95: None };
    }
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("dof >= 1").inverse_cdf(0.975);
    let half = t * sd / (n as f64).sqrt();
    Summary { mean, sd, n, ci95: Some((mean - half, mean + half)) }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub reports: Vec<KpiReport>,
    pub summary: BTreeMap<String, Summary>,
}

impl ExperimentResult {
    pub fn from_reports(scenario: &str, seeds: Vec<u64>, reports: Vec<KpiReport>) -> Self {
        let summary = CSV_COLUMNS
            .iter()
            .filter_map(|&c| {
                let xs: Vec<f64> = reports.iter().filter_map(|r| r.get(c)).collect();
                (!xs.is_empty()).then(|| (c.to_string(), summarize(&xs)))
            })
            .collect();
        ExperimentResult { scenario: scenario.to_string(), seeds, reports, summary }
    }

    pub fn mean(&self, kpi: &str) -> Option<f64> {
        self.summary.get(kpi).map(|s| s.mean)
    }

    pub fn values(&self, kpi: &str) -> Vec<f64> {
        self.reports.iter().filter_map(|r| r.get(kpi)).collect()
    }
}

/// Seeds `seed + i` for each replication, in index order.
pub fn replication_seeds(cfg: &ScenarioConfig) -> Vec<u64> {
    (0..cfg.replications as u64).map(|i| cfg.seed.wrapping_add(i)).collect()
}

/// Run every replication (in parallel) and aggregate. Results are ordered by
/// replication index.
pub fn run_replications(cfg: &ScenarioConfig) -> Result<ExperimentResult> {
    let seeds = replication_seeds(cfg);
    info!("{}: {} replications", cfg.name, seeds.len());
    let reports = seeds.par_iter().map(|&s| run_scenario(cfg, s).map(|r| r.report)).collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult::from_reports(&cfg.name, seeds, reports))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub kpi: String,
    pub a: f64,
    pub b: f64,
    /// b - a
    pub delta: f64,
    /// b / a, when a is non-zero
    pub ratio: Option<f64>,
    pub ratio_ci95: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub rows: Vec<ComparisonRow>,
}

/// KPIs shown in paired comparisons.
pub const COMPARE_KPIS: [&str; 10] = [
    "mean_response_s",
    "p95_response_s",
    "p99_response_s",
    "throughput_rps",
    "peak_throughput_rps",
    "transaction_success_pct",
    "error_rate_pct",
    "mean_latency_s",
    "prediction_accuracy_pct",
    "operational_cost",
];

/// Pair two experiments KPI by KPI. The ratio interval comes from the
/// per-replication ratios when both sides share their seed list.
pub fn compare(a: &ExperimentResult, b: &ExperimentResult) -> Comparison {
    let paired = a.seeds == b.seeds;
    let rows = COMPARE_KPIS
        .iter()
        .filter_map(|&k| {
            let (ma, mb) = (a.mean(k)?, b.mean(k)?);
            let ratio_ci95 = if paired {
                let rs: Vec<f64> = a
                    .reports
                    .iter()
                    .zip(&b.reports)
                    .filter_map(|(x, y)| Some((x.get(k)?, y.get(k)?)))
                    .filter(|(x, _)| *x != 0.0)
                    .map(|(x, y)| y / x)
                    .collect();
                summarize(&rs).ci95
            } else {
                None
            };
            Some(ComparisonRow {
                kpi: k.to_string(),
                a: ma,
                b: mb,
                delta: mb - ma,
                ratio: (ma != 0.0).then(|| mb / ma),
                ratio_ci95,
            })
        })
        .collect();
    Comparison { a: a.scenario.clone(), b: b.scenario.clone(), rows }
}

impl Comparison {
    pub fn table(&self) -> String {
        let mut s = format!("{:<26} {:>14} {:>14} {:>12} {:>8}\n", "kpi", self.a, self.b, "delta", "ratio");
        for r in &self.rows {
            let ratio = r.ratio.map_or_else(|| "n/a".into(), |x| format!("{x:.3}"));
            s += &format!("{:<26} {:>14.4} {:>14.4} {:>12.4} {:>8}\n", r.kpi, r.a, r.b, r.delta, ratio);
        }
        s
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("kpi,a,b,delta,ratio,ratio_ci_low,ratio_ci_high\n");
        for r in &self.rows {
            let (lo, hi) = r.ratio_ci95.map_or((String::new(), String::new()), |(l, h)| (l.to_string(), h.to_string()));
            s += &format!(
                "{},{},{},{},{},{lo},{hi}\n",
                r.kpi,
                r.a,
                r.b,
                r.delta,
                r.ratio.map_or_else(String::new, |x| x.to_string())
            );
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: serde_json::Value,
    pub result: ExperimentResult,
}

/// One experiment per value of the dotted-path parameter.
pub fn sweep(cfg: &ScenarioConfig, param: &str, values: &[serde_json::Value]) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|v| {
            let mut c = cfg.with_overrides(&[format!("{param}={v}")])?;
            c.name = format!("{}[{param}={v}]", cfg.name);
            Ok(SweepPoint { value: v.clone(), result: run_replications(&c)? })
        })
        .collect()
}

pub fn sweep_csv(param: &str, points: &[SweepPoint]) -> String {
    let mut s = param.to_string();
    for c in CSV_COLUMNS {
        s += &format!(",{c},{c}_ci_low,{c}_ci_high");
    }
    s.push('\n');
    for p in points {
        s += p.value.to_string().trim_matches('"');
        for c in CSV_COLUMNS {
            match p.result.summary.get(c) {
                Some(sm) => {
                    let (lo, hi) =
                        sm.ci95.map_or((String::new(), String::new()), |(l, h)| (l.to_string(), h.to_string()));
                    s += &format!(",{},{lo},{hi}", sm.mean);
                }
                None => s += ",,,",
            }
        }
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    /// Largest offered session rate found to meet the SLA.
    pub rate: f64,
    /// Completed requests per second at that rate.
    pub throughput_rps: f64,
    pub instance_seconds: f64,
    pub probes: Vec<(f64, bool)>,
}

fn meets_sla(cfg: &ScenarioConfig, rate: f64, seed: u64) -> Result<(bool, KpiReport)> {
    let mut c = cfg.clone();
    c.horizon_s = cfg.capacity.horizon_s;
    c.workload.users = None;
    c.workload.profile = crate::workload::ArrivalProfile::constant(rate);
    // Constant load needs no history; predictive sizing reads the true counts.
    c.forecast.history_runs = 0;
    c.forecast.oracle = c.scaling.kind == ScalingKind::Predictive;
    let r = run_scenario(&c, seed)?.report;
    let ok =
        r.p95_response_s <= cfg.metrics.sla_p95_s && r.error_rate_pct <= cfg.capacity.max_error_pct && r.completed > 0;
    Ok((ok, r))
}

/// Bisect the constant offered rate for the largest one whose p95 meets the
/// SLA with an error rate within bounds.
pub fn load_capacity(cfg: &ScenarioConfig, seed: u64) -> Result<CapacityResult> {
    let cap = &cfg.capacity;
    let (mut lo, mut hi) = (cap.rate_low, cap.rate_high);
    let mut probes = Vec::new();
    let (ok_lo, mut best) = meets_sla(cfg, lo, seed)?;
    probes.push((lo, ok_lo));
    if !ok_lo {
        return Ok(CapacityResult { rate: 0.0, throughput_rps: 0.0, instance_seconds: best.instance_seconds, probes });
    }
    let (ok_hi, r_hi) = meets_sla(cfg, hi, seed)?;
    probes.push((hi, ok_hi));
    if ok_hi {
        return Ok(CapacityResult {
            rate: hi,
            throughput_rps: r_hi.throughput_rps,
            instance_seconds: r_hi.instance_seconds,
            probes,
        });
    }
    for _ in 0..cap.iterations {
        let mid = 0.5 * (lo + hi);
        let (ok, r) = meets_sla(cfg, mid, seed)?;
        probes.push((mid, ok));
        if ok {
            lo = mid;
            best = r;
        } else {
            hi = mid;
        }
    }
    Ok(CapacityResult {
        rate: lo,
        throughput_rps: best.throughput_rps,
        instance_seconds: best.instance_seconds,
        probes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalabilityResult {
    pub base: CapacityResult,
    pub other: CapacityResult,
    pub load_ratio: f64,
    pub throughput_ratio: f64,
    pub resource_ratio: f64,
    pub scalability_pct: Option<f64>,
}

/// Load capacity of `other` relative to `base`, per resource used.
pub fn scalability_between(base: &ScenarioConfig, other: &ScenarioConfig, seed: u64) -> Result<ScalabilityResult> {
    let b = load_capacity(base, seed)?;
    let o = load_capacity(other, seed)?;
    let ratio = |x: f64, y: f64| if y > 0.0 { x / y } else { 0.0 };
    let load_ratio = ratio(o.rate, b.rate);
    let resource_ratio = ratio(o.instance_seconds, b.instance_seconds);
    Ok(ScalabilityResult {
        load_ratio,
        throughput_ratio: ratio(o.throughput_rps, b.throughput_rps),
        resource_ratio,
        scalability_pct: scalability(load_ratio, resource_ratio),
        base: b,
        other: o,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_ci() {
        let s = summarize(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        let (lo, hi) = s.ci95.unwrap();
        // t(0.975, 2) = 4.3027
        assert!((hi - 2.0 - 4.302653 / 3f64.sqrt()).abs() < 1e-4);
        assert!((2.0 - lo - (hi - 2.0)).abs() < 1e-12);
        assert!(summarize(&[5.0]).ci95.is_none());
    }

    #[test]
    fn swapped_compare_negates_deltas() {
        let mk = |m: f64| {
            let r = KpiReport { mean_response_s: m, ..Default::default() };
            ExperimentResult::from_reports("x", vec![1], vec![r])
        };
        let (a, b) = (mk(1.5), mk(0.8));
        let ab = compare(&a, &b);
        let ba = compare(&b, &a);
        for (x, y) in ab.rows.iter().zip(&ba.rows) {
            assert_eq!(x.delta, -y.delta);
        }
    }
}
