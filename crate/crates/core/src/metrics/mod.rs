//! KPI formulas over run traces, and the per-run report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analytics::accuracy;
use crate::engine::{Outcome, RequestRecord, RunOutput, RunTrace};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Leading fraction of the run excluded from every KPI.
    pub warmup_fraction: f64,
    pub unit_cost: f64,
    pub throughput_window_s: f64,
    pub sla_p95_s: f64,
    pub forecast_band: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            warmup_fraction: 0.1,
            unit_cost: 0.0001,
            throughput_window_s: 10.0,
            sla_p95_s: 3.0,
            forecast_band: 0.2,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::config(format!("{path}.warmup_fraction"), "must lie in [0, 1)"));
        }
        if !(self.unit_cost >= 0.0) {
            return Err(Error::config(format!("{path}.unit_cost"), "must be >= 0"));
        }
        if !(self.throughput_window_s > 0.0) || !(self.sla_p95_s > 0.0) || !(self.forecast_band > 0.0) {
            return Err(Error::config(path, "windows, SLA and band must be > 0"));
        }
        Ok(())
    }
}

pub fn response_time(r: &RequestRecord) -> Option<f64> {
    r.response_time()
}

/// Transport component only: gateway overhead plus synchronous network hops.
pub fn latency(r: &RequestRecord) -> f64 {
    r.latency_s
}

/// Linear-interpolated percentile of sorted samples; 0 when empty.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

/// Percentile of successful response times among requests arriving in `[from, to)`.
pub fn window_percentile(trace: &RunTrace, from: f64, to: f64, q: f64) -> f64 {
    let mut xs: Vec<f64> = trace
        .requests
        .iter()
        .filter(|r| r.arrival_s >= from && r.arrival_s < to)
        .filter_map(|r| r.response_time())
        .collect();
    xs.sort_by(f64::total_cmp);
    percentile(&xs, q)
}

pub fn throughput(completed: usize, window_s: f64) -> f64 {
    if window_s <= 0.0 {
        0.0
    } else {
        completed as f64 / window_s
    }
}

/// Highest completions-per-second over consecutive windows in `[start, end)`.
pub fn peak_throughput(completion_times: &[f64], start: f64, end: f64, window_s: f64) -> f64 {
    if end <= start || window_s <= 0.0 {
        return 0.0;
    }
    let n = ((end - start) / window_s).floor().max(1.0) as usize;
    let mut counts = vec![0usize; n];
    for &t in completion_times {
        if t >= start {
            let i = ((t - start) / window_s) as usize;
            if i < n {
                counts[i] += 1;
            }
        }
    }
    counts.into_iter().max().unwrap_or(0) as f64 / window_s
}

/// Percentage of `[start, end]` not covered by any outage interval.
pub fn availability(outages: &[(f64, f64)], start: f64, end: f64) -> f64 {
    if end <= start {
        return 100.0;
    }
    let mut iv: Vec<(f64, f64)> =
        outages.iter().map(|&(a, b)| (a.max(start), b.min(end))).filter(|(a, b)| b > a).collect();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut down = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in iv {
        cur = match cur {
            Some((ca, cb)) if a <= cb => Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                down += cb - ca;
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((a, b)) = cur {
        down += b - a;
    }
    100.0 * (1.0 - down / (end - start))
}

pub fn error_rate(failed: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::InsufficientData("no finished requests".into()));
    }
    Ok(100.0 * failed as f64 / total as f64)
}

pub fn success_rate(succeeded: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::InsufficientData("no finished transactions".into()));
    }
    Ok(100.0 * succeeded as f64 / total as f64)
}

/// Load-capacity growth factor per resource growth factor, in percent.
/// Ratios are new/old; `None` when resources did not change.
pub fn scalability(load_ratio: f64, resource_ratio: f64) -> Option<f64> {
    ((resource_ratio - 1.0).abs() > 1e-12 && resource_ratio > 0.0).then(|| 100.0 * load_ratio / resource_ratio)
}

pub fn operational_cost(instance_seconds: f64, unit_cost: f64) -> f64 {
    instance_seconds * unit_cost
}

/// Synthetic 1-10 score from tail latency and recommendation relevance.
pub fn satisfaction(p95_s: f64, hit_rate: f64) -> f64 {
    let speed = (1.0 - p95_s / 3.0).max(0.0);
    (1.0 + 9.0 * (0.6 * speed + 0.4 * hit_rate.clamp(0.0, 1.0))).clamp(1.0, 10.0)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LittleCheck {
    pub station: String,
    /// Time-average number in system.
    pub l: f64,
    pub lambda: f64,
    pub w: f64,
    pub relative_error: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub requests: usize,
    pub completed: usize,
    pub failed: usize,
    pub in_flight: usize,
    pub mean_response_s: f64,
    pub max_response_s: f64,
    pub p50_response_s: f64,
    pub p95_response_s: f64,
    pub p99_response_s: f64,
    pub throughput_rps: f64,
    pub peak_throughput_rps: f64,
    pub availability_pct: f64,
    pub error_rate_pct: f64,
    pub transaction_success_pct: f64,
    pub transaction_error_pct: f64,
    pub mean_latency_s: f64,
    pub prediction_accuracy_pct: Option<f64>,
    pub scalability_pct: Option<f64>,
    pub instance_seconds: f64,
    pub operational_cost: f64,
    pub cost_per_transaction: Option<f64>,
    pub recommendation_hit_rate: f64,
    pub satisfaction: f64,
    pub cache_hit_ratio: Option<f64>,
    pub scaling_actions: usize,
    pub utilization: BTreeMap<String, f64>,
    pub failures: BTreeMap<String, usize>,
    pub little: Vec<LittleCheck>,
}

/// Scalar KPI columns of the flat CSV, in order.
pub const CSV_COLUMNS: [&str; 22] = [
    "requests",
    "completed",
    "failed",
    "mean_response_s",
    "max_response_s",
    "p50_response_s",
    "p95_response_s",
    "p99_response_s",
    "throughput_rps",
    "peak_throughput_rps",
    "availability_pct",
    "error_rate_pct",
    "transaction_success_pct",
    "transaction_error_pct",
    "mean_latency_s",
    "prediction_accuracy_pct",
    "scalability_pct",
    "instance_seconds",
    "operational_cost",
    "cost_per_transaction",
    "recommendation_hit_rate",
    "satisfaction",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

impl KpiReport {
    pub fn csv_values(&self) -> Vec<String> {
        vec![
            self.requests.to_string(),
            self.completed.to_string(),
            self.failed.to_string(),
            self.mean_response_s.to_string(),
            self.max_response_s.to_string(),
            self.p50_response_s.to_string(),
            self.p95_response_s.to_string(),
            self.p99_response_s.to_string(),
            self.throughput_rps.to_string(),
            self.peak_throughput_rps.to_string(),
            self.availability_pct.to_string(),
            self.error_rate_pct.to_string(),
            self.transaction_success_pct.to_string(),
            self.transaction_error_pct.to_string(),
            self.mean_latency_s.to_string(),
            opt(self.prediction_accuracy_pct),
            opt(self.scalability_pct),
            self.instance_seconds.to_string(),
            self.operational_cost.to_string(),
            opt(self.cost_per_transaction),
            self.recommendation_hit_rate.to_string(),
            self.satisfaction.to_string(),
        ]
    }

    /// Scalar KPI by CSV column name.
    pub fn get(&self, name: &str) -> Option<f64> {
        let i = CSV_COLUMNS.iter().position(|c| *c == name)?;
        self.csv_values()[i].parse().ok()
    }
}

/// Compute every KPI over the post-warmup part of a run.
pub fn assemble_report(out: &RunOutput, cfg: &MetricsConfig) -> KpiReport {
    let end = out.horizon_s;
    let start = (cfg.warmup_fraction * end).max(out.warmup_s.min(end));
    let measured: Vec<&RequestRecord> = out.trace.requests.iter().filter(|r| r.arrival_s >= start).collect();

    let mut times: Vec<f64> = measured.iter().filter_map(|r| r.response_time()).collect();
    times.sort_by(f64::total_cmp);
    let completed = times.len();
    let failed = measured.iter().filter(|r| matches!(r.outcome, Outcome::Failure(_))).count();
    let in_flight = measured.len() - completed - failed;

    let mut failures = BTreeMap::new();
    for r in &measured {
        if let Outcome::Failure(reason) = r.outcome {
            *failures.entry(reason.as_str().to_string()).or_insert(0) += 1;
        }
    }

    let tx_done: Vec<&&RequestRecord> =
        measured.iter().filter(|r| r.kind.is_transaction() && r.outcome != Outcome::InFlight).collect();
    let tx_ok = tx_done.iter().filter(|r| r.outcome == Outcome::Success).count();
    let success = success_rate(tx_ok, tx_done.len()).unwrap_or(100.0);

    let completion_times: Vec<f64> =
        out.trace.requests.iter().filter(|r| r.outcome == Outcome::Success).filter_map(|r| r.response_s).collect();
    let in_window = completion_times.iter().filter(|&&t| t >= start && t <= end).count();

    let sync_outages: Vec<(f64, f64)> =
        out.outages.iter().filter(|o| o.on_sync_path).map(|o| (o.start_s, o.end_s)).collect();

    let successes: Vec<&&RequestRecord> = measured.iter().filter(|r| r.outcome == Outcome::Success).collect();
    let mean_latency = if successes.is_empty() {
        0.0
    } else {
        successes.iter().map(|r| latency(r)).sum::<f64>() / successes.len() as f64
    };

    let hit_rate = if out.recommendation_views == 0 {
        0.0
    } else {
        out.recommendation_hits as f64 / out.recommendation_views as f64
    };
    let p95 = percentile(&times, 0.95);

    let n_full = out.one_step_forecast.len();
    let first_measured = (start / out.demand.interval_s).ceil() as usize;
    let prediction_accuracy_pct = (n_full > first_measured)
        .then(|| {
            let actual: Vec<f64> = out.demand.values()[first_measured..n_full].to_vec();
            accuracy(&out.one_step_forecast[first_measured..n_full], &actual, cfg.forecast_band).ok()
        })
        .flatten();

    let window = end - start;
    let mut utilization = BTreeMap::new();
    let mut little = Vec::new();
    for (i, name) in out.trace.stations.iter().enumerate() {
        let (a, b) = (&out.warmup_snapshots[i], &out.final_snapshots[i]);
        let active = b.active_server_time - a.active_server_time;
        let busy = b.busy_time - a.busy_time;
        utilization.insert(name.clone(), if active > 0.0 { (busy / active).clamp(0.0, 1.0) } else { 0.0 });
        let span = b.at - a.at;
        if span > 0.0 {
            let l = (b.in_system_time - a.in_system_time) / span;
            let lambda = (b.arrivals - a.arrivals) as f64 / span;
            let w = if b.window_completions > 0 { b.window_sojourn_sum / b.window_completions as f64 } else { 0.0 };
            little.push(LittleCheck {
                station: name.clone(),
                l,
                lambda,
                w,
                relative_error: (l > 0.0).then(|| (l - lambda * w).abs() / l),
            });
        }
    }

    let instance_seconds = out.instance_seconds();
    let cost = operational_cost(instance_seconds, cfg.unit_cost);
    let total_tx_ok =
        out.trace.requests.iter().filter(|r| r.kind.is_transaction() && r.outcome == Outcome::Success).count();
    let lookups = out.cache_hits + out.cache_misses;

    KpiReport {
        requests: measured.len(),
        completed,
        failed,
        in_flight,
        mean_response_s: if completed == 0 { 0.0 } else { times.iter().sum::<f64>() / completed as f64 },
        max_response_s: times.last().copied().unwrap_or(0.0),
        p50_response_s: percentile(&times, 0.5),
        p95_response_s: p95,
        p99_response_s: percentile(&times, 0.99),
        throughput_rps: throughput(in_window, window),
        peak_throughput_rps: peak_throughput(&completion_times, start, end, cfg.throughput_window_s),
        availability_pct: availability(&sync_outages, start, end),
        error_rate_pct: error_rate(failed, completed + failed).unwrap_or(0.0),
        transaction_success_pct: success,
        transaction_error_pct: 100.0 - success,
        mean_latency_s: mean_latency,
        prediction_accuracy_pct,
        scalability_pct: None,
        instance_seconds,
        operational_cost: cost,
        cost_per_transaction: (total_tx_ok > 0).then(|| cost / total_tx_ok as f64),
        recommendation_hit_rate: hit_rate,
        satisfaction: satisfaction(p95, hit_rate),
        cache_hit_ratio: (lookups > 0).then(|| out.cache_hits as f64 / lookups as f64),
        scaling_actions: out.scaling_log.len(),
        utilization,
        failures,
        little,
    }
}
