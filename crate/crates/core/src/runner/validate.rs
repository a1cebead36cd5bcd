//! Analytic self-checks of the simulator and the analytics stack.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::analytics::{fit_forecaster, kmeans_fit, ForecastParams, Forecaster, ForecasterKind};
use crate::engine::RequestType;
use crate::engine::{Outcome, RngStream, ServiceDist, SimInputs, Simulation, StationSpec};
use crate::topology::{Architecture, Flow, FlowHop, HopMode, RetryPolicy, ServiceTopology, StationPolicy};
use crate::workload::{generate_arrivals, ArrivalProfile, PlannedRequest, Spike};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub expected: f64,
    pub measured: f64,
    /// Relative tolerance, or the critical value for statistical tests.
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn relative(name: &str, expected: f64, measured: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            expected,
            measured,
            tolerance,
            passed: ((measured - expected) / expected).abs() <= tolerance,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {:<28} expected {:>12} measured {:>12} tolerance {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            num(self.expected),
            num(self.measured),
            num(self.tolerance)
        )
    }
}

fn num(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.3e}")
    } else {
        format!("{x:.6}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidateOptions {
    pub quick: bool,
    /// Service rate actually simulated in the queueing checks; the oracles
    /// always assume 1.0. Only useful to demonstrate the checks bite.
    pub simulated_mu: f64,
    pub seed: u64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions { quick: false, simulated_mu: 1.0, seed: 1 }
    }
}

/// Erlang-C probability that an arrival waits, for offered load `a` on `c` servers.
pub fn erlang_c(c: u32, a: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..c {
        term *= a / f64::from(k);
        sum += term;
    }
    let last = term * a / f64::from(c) * f64::from(c) / (f64::from(c) - a);
    last / (sum + last)
}

fn single_station(servers: u32, mu: f64) -> ServiceTopology {
    let hop = FlowHop { station: 0, mode: HopMode::Synchronous, network: false, cached: false };
    ServiceTopology {
        architecture: Architecture::Monolith,
        stations: vec![StationSpec::new("queue", servers, ServiceDist::Exponential { mean_s: 1.0 / mu })],
        policies: vec![StationPolicy { cache: None, breaker: None, min_instances: servers, max_instances: servers }],
        flows: RequestType::ALL.iter().map(|_| Flow { hops: vec![hop] }).collect(),
        gateway_overhead_s: 0.0,
        network_hop_latency_s: 0.0,
        broker_latency_s: 0.0,
        retry: RetryPolicy::default(),
    }
}

fn poisson_requests(rate: f64, horizon: f64, seed: u64) -> Vec<PlannedRequest> {
    let mut rng = RngStream::new(seed, "validate/arrivals");
    generate_arrivals(&ArrivalProfile::constant(rate), horizon, &mut rng)
        .into_iter()
        .enumerate()
        .map(|(i, t)| PlannedRequest { time: t, kind: RequestType::Search, session: i as u64, user: 0, key: 0 })
        .collect()
}

struct QueueStats {
    sojourn: f64,
    wait: f64,
    l: f64,
    lambda: f64,
}

fn simulate_queue(servers: u32, lambda: f64, mu: f64, horizon: f64, seed: u64) -> Result<QueueStats> {
    let warmup = 0.05 * horizon;
    let mut inputs = SimInputs::new(single_station(servers, mu), poisson_requests(lambda, horizon, seed), horizon);
    inputs.seed = seed;
    inputs.warmup_s = warmup;
    let out = Simulation::new(inputs)?.run()?;
    let done: Vec<_> =
        out.trace.requests.iter().filter(|r| r.arrival_s >= warmup && r.outcome == Outcome::Success).collect();
    let n = done.len().max(1) as f64;
    let sojourn = done.iter().filter_map(|r| r.response_time()).sum::<f64>() / n;
    let wait = done.iter().map(|r| r.hops[0].start_s.unwrap_or(r.arrival_s) - r.hops[0].enqueue_s).sum::<f64>() / n;
    let (a, b) = (&out.warmup_snapshots[0], &out.final_snapshots[0]);
    let span = b.at - a.at;
    Ok(QueueStats {
        sojourn,
        wait,
        l: (b.in_system_time - a.in_system_time) / span,
        lambda: (b.arrivals - a.arrivals) as f64 / span,
    })
}

fn thinning_check(seed: u64, horizon: f64) -> Check {
    let profile = ArrivalProfile::diurnal(4.0, 0.6, horizon / 2.0).with_spikes(vec![Spike {
        start_s: 0.3 * horizon,
        duration_s: 0.05 * horizon,
        multiplier: 2.5,
    }]);
    let mut rng = RngStream::new(seed, "validate/thinning");
    let times = generate_arrivals(&profile, horizon, &mut rng);
    let bins = 50;
    let width = horizon / bins as f64;
    let mut counts = vec![0.0; bins];
    for t in times {
        counts[((t / width) as usize).min(bins - 1)] += 1.0;
    }
    let stat: f64 = (0..bins)
        .map(|i| {
            let e = profile.expected_count(i as f64 * width, (i + 1) as f64 * width);
            (counts[i] - e).powi(2) / e
        })
        .sum();
    let critical = ChiSquared::new(bins as f64).expect("dof > 0").inverse_cdf(0.999);
    Check {
        name: "thinning chi-square".into(),
        expected: bins as f64,
        measured: stat,
        tolerance: critical,
        passed: stat <= critical,
    }
}

fn kmeans_check(seed: u64) -> Result<Check> {
    let pts = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 10.0], vec![10.0, 11.0]];
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << pts.len()) - 1 {
        let mut sse = 0.0;
        for side in [true, false] {
            let members: Vec<&Vec<f64>> =
                pts.iter().enumerate().filter(|(i, _)| (mask >> i & 1 == 1) == side).map(|(_, p)| p).collect();
            let n = members.len() as f64;
            let cx = members.iter().map(|p| p[0]).sum::<f64>() / n;
            let cy = members.iter().map(|p| p[1]).sum::<f64>() / n;
            sse += members.iter().map(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sum::<f64>();
        }
        best = best.min(sse);
    }
    let mut rng = RngStream::new(seed, "validate/kmeans");
    let m = kmeans_fit(&pts, 2, &mut rng)?;
    Ok(Check {
        name: "k-means brute force".into(),
        expected: best,
        measured: m.inertia,
        tolerance: 1e-12,
        passed: (m.inertia - best).abs() <= 1e-12,
    })
}

fn least_squares_check(seed: u64) -> Result<Check> {
    let mut rng = RngStream::new(seed, "validate/ar");
    let mut y = vec![50.0, 52.0];
    for t in 2..300 {
        let e = (rng.open01() - 0.5) * 10.0;
        y.push(20.0 + 0.5 * y[t - 1] + 0.2 * y[t - 2] + e);
    }
    let lags = 2;
    let m = fit_forecaster(&y, 0, ForecasterKind::ArLs, &ForecastParams { lags, ..Default::default() })?;
    let Forecaster::ArLs { intercept, coefficients, .. } = m else { unreachable!("ar-ls fit returns ar-ls") };
    let resid: Vec<f64> = (lags..y.len())
        .map(|t| y[t] - intercept - (0..lags).map(|j| coefficients[j] * y[t - 1 - j]).sum::<f64>())
        .collect();
    let rnorm = resid.iter().map(|r| r * r).sum::<f64>().sqrt();
    let mut worst: f64 = resid.iter().sum::<f64>().abs() / (rnorm * (resid.len() as f64).sqrt());
    for j in 0..lags {
        let col: Vec<f64> = (lags..y.len()).map(|t| y[t - 1 - j]).collect();
        let cnorm = col.iter().map(|c| c * c).sum::<f64>().sqrt();
        let dot: f64 = resid.iter().zip(&col).map(|(r, c)| r * c).sum();
        worst = worst.max(dot.abs() / (rnorm * cnorm));
    }
    Ok(Check {
        name: "least-squares orthogonality".into(),
        expected: 0.0,
        measured: worst,
        tolerance: 1e-6,
        passed: worst < 1e-6,
    })
}

/// Run every check; the caller decides how to report failures.
pub fn validate(opts: &ValidateOptions) -> Result<Vec<Check>> {
    let (tol, h1, h2) = if opts.quick { (0.10, 50_000.0, 50_000.0) } else { (0.05, 1_000_000.0, 1_000_000.0) };
    let mu = opts.simulated_mu;
    let mut checks = Vec::new();

    let mm1 = simulate_queue(1, 0.8, mu, h1, opts.seed)?;
    checks.push(Check::relative("M/M/1 time in system", 1.0 / (1.0 - 0.8), mm1.sojourn, tol));

    let mmc = simulate_queue(2, 1.5, mu, h2, opts.seed + 1)?;
    let wq = erlang_c(2, 1.5) / (2.0 - 1.5);
    checks.push(Check::relative("M/M/2 mean wait (Erlang-C)", wq, mmc.wait, tol));
    checks.push(Check::relative("Little's law L = lambda W", mmc.l, mmc.lambda * mmc.sojourn, tol));

    checks.push(thinning_check(opts.seed, if opts.quick { 5_000.0 } else { 20_000.0 }));
    checks.push(kmeans_check(opts.seed)?);
    checks.push(least_squares_check(opts.seed)?);
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erlang_c_hand_value() {
        // a = 1.5, c = 2: (a^2/2 * 2/(2-a)) / (1 + a + that) = 4.5 / 7
        assert!((erlang_c(2, 1.5) - 4.5 / 7.0).abs() < 1e-12);
        assert!((erlang_c(1, 0.8) - 0.8).abs() < 1e-12);
    }
}
