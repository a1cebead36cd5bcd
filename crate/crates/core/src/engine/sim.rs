//! A full run: planned requests flowing through a service topology, with
//! resilience policies, fault windows, metric ticks and the autoscaler.

use serde::{Deserialize, Serialize};

use super::queue::{run_until, Model, Scheduled, Scheduler};
use super::rng::RngStream;
use super::station::{Admission, Job, Started, Station, StationSnapshot};
use super::time::SimTime;
use super::trace::{FailureReason, HopRecord, Outcome, RequestRecord, RequestType, RunTrace};
use crate::analytics::{aggregate, DemandForecaster, DemandSeries};
use crate::autoscale::{
    predictive_decide, reactive_decide, sizing, utilization, RateForecast, ScalingAction, ScalingKind, ScalingPolicy,
    StationState, Trigger,
};
use crate::topology::{BreakerState, Broker, Cache, CallResult, HopMode, Lookup, ServiceTopology};
use crate::workload::PlannedRequest;
use crate::{Error, Result};

const ASYNC_TOKEN: u64 = u64::MAX;

/// A station outage window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fault {
    pub station: String,
    pub start_s: f64,
    pub duration_s: f64,
}

pub struct SimInputs {
    pub topology: ServiceTopology,
    /// Sorted by time.
    pub requests: Vec<PlannedRequest>,
    pub horizon_s: f64,
    pub warmup_s: f64,
    pub seed: u64,
    pub scaling: ScalingPolicy,
    /// Required for predictive scaling; also produces one-step forecasts.
    pub forecaster: Option<DemandForecaster>,
    pub forecast_interval_s: f64,
    /// Expected share of each request type, for per-station load estimates.
    pub type_mix: [f64; 4],
    /// Recommendation hit probability indexed by user id.
    pub relevance: Vec<f64>,
    pub default_relevance: f64,
    pub faults: Vec<Fault>,
}

impl SimInputs {
    pub fn new(topology: ServiceTopology, requests: Vec<PlannedRequest>, horizon_s: f64) -> Self {
        SimInputs {
            topology,
            requests,
            horizon_s,
            warmup_s: 0.0,
            seed: 0,
            scaling: ScalingPolicy::default(),
            forecaster: None,
            forecast_interval_s: 60.0,
            type_mix: [0.25; 4],
            relevance: Vec::new(),
            default_relevance: 0.5,
            faults: Vec::new(),
        }
    }
}

/// Per-tick measurements of one station.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StationSeries {
    pub station: String,
    pub times_s: Vec<f64>,
    pub utilization: Vec<f64>,
    pub instances: Vec<u32>,
    pub queue_len: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outage {
    pub station: String,
    pub on_sync_path: bool,
    pub start_s: f64,
    pub end_s: f64,
}

pub struct RunOutput {
    pub trace: RunTrace,
    pub horizon_s: f64,
    pub warmup_s: f64,
    pub series: Vec<StationSeries>,
    pub scaling_log: Vec<ScalingAction>,
    pub demand: DemandSeries,
    /// One-step-ahead forecast for each full interval of `demand`.
    pub one_step_forecast: Vec<f64>,
    pub outages: Vec<Outage>,
    pub recommendation_views: u64,
    pub recommendation_hits: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub async_published: u64,
    pub async_failed: u64,
    pub warmup_snapshots: Vec<StationSnapshot>,
    pub final_snapshots: Vec<StationSnapshot>,
    pub events_executed: u64,
}

impl RunOutput {
    /// Instance-seconds summed over every station.
    pub fn instance_seconds(&self) -> f64 {
        self.final_snapshots.iter().map(|s| s.instance_time).sum()
    }
}

#[derive(Clone, Copy, Debug)]
enum Ev {
    Arrival(usize),
    Hop { req: usize, token: u64 },
    CacheHit { req: usize, token: u64 },
    Complete { station: usize, instance: usize },
    Timeout { req: usize, token: u64 },
    Deliver { station: usize, req: usize },
    ScaleEffective { station: usize },
    Tick,
    IntervalEnd,
    Fault { station: usize, down: bool },
    WarmupEnd,
}

#[derive(Clone, Copy, Debug, Default)]
struct Progress {
    hop: usize,
    token: u64,
    hop_attempts: u32,
}

struct State {
    topo: ServiceTopology,
    requests: Vec<PlannedRequest>,
    horizon_s: f64,
    scaling: ScalingPolicy,
    stations: Vec<Station>,
    caches: Vec<Option<Cache>>,
    hit_times: Vec<f64>,
    breakers: Vec<Option<BreakerState>>,
    broker: Broker,
    records: Vec<RequestRecord>,
    progress: Vec<Progress>,
    next_token: u64,
    rec_rng: RngStream,
    relevance: Vec<f64>,
    default_relevance: f64,
    recommendation_views: u64,
    recommendation_hits: u64,
    async_failed: u64,
    // control
    visits: Vec<f64>,
    mean_service: Vec<f64>,
    pending_up: Vec<u32>,
    last_action: Vec<Option<f64>>,
    util_history: Vec<Vec<f64>>,
    prev_snap: Vec<StationSnapshot>,
    series: Vec<StationSeries>,
    scaling_log: Vec<ScalingAction>,
    forecaster: Option<DemandForecaster>,
    interval_s: f64,
    interval_arrivals: u64,
    one_step: Vec<f64>,
    full_intervals: usize,
    warmup_snapshots: Vec<StationSnapshot>,
}

pub struct Simulation {
    state: State,
    sched: Scheduler<Ev>,
    warmup_s: f64,
    outages: Vec<Outage>,
}

fn at(t: f64) -> SimTime {
    SimTime::new(t)
}

impl Simulation {
    pub fn new(inputs: SimInputs) -> Result<Self> {
        let SimInputs {
            topology: topo,
            requests,
            horizon_s,
            warmup_s,
            seed,
            scaling,
            forecaster,
            forecast_interval_s,
            type_mix,
            relevance,
            default_relevance,
            faults,
        } = inputs;
        topo.validate()?;
        scaling.validate("scaling")?;
        if !(horizon_s >= 0.0 && horizon_s.is_finite()) {
            return Err(Error::InvalidArgument("horizon must be finite and >= 0".into()));
        }
        if !(forecast_interval_s > 0.0) {
            return Err(Error::InvalidArgument("forecast interval must be > 0".into()));
        }
        if scaling.kind == ScalingKind::Predictive && forecaster.is_none() {
            return Err(Error::config("scaling.kind", "predictive scaling needs a forecaster"));
        }
        if requests.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(Error::InvalidArgument("requests must be sorted by time".into()));
        }

        let n = topo.stations.len();
        let stations: Vec<Station> = topo
            .stations
            .iter()
            .map(|spec| Station::new(spec.clone(), RngStream::new(seed, format!("station/{}", spec.id))))
            .collect();
        let caches = topo.policies.iter().map(|p| p.cache.as_ref().map(Cache::from_policy)).collect();
        let hit_times = topo.policies.iter().map(|p| p.cache.as_ref().map_or(0.0, |c| c.hit_service_time_s)).collect();
        let breakers = topo.policies.iter().map(|p| p.breaker.map(|_| BreakerState::default())).collect();

        let mix_total: f64 = type_mix.iter().sum();
        let mut visits = vec![0.0; n];
        for kind in RequestType::ALL {
            for h in &topo.flow(kind).hops {
                visits[h.station] += type_mix[kind.index()] / mix_total.max(f64::MIN_POSITIVE);
            }
        }
        let mean_service = topo
            .stations
            .iter()
            .map(|s| {
                let kinds = s.per_kind_steps.as_ref().map_or(1, Vec::len);
                (0..kinds).map(|k| s.mean_service(k) * if kinds > 1 { type_mix[k] / mix_total } else { 1.0 }).sum()
            })
            .collect();

        let mut outages = Vec::new();
        let mut sched = Scheduler::new();
        for f in &faults {
            let station = topo
                .station_index(&f.station)
                .ok_or_else(|| Error::config("faults.station", format!("unknown station `{}`", f.station)))?;
            if !(f.start_s >= 0.0 && f.duration_s > 0.0) {
                return Err(Error::config("faults", "need start_s >= 0 and duration_s > 0"));
            }
            sched.schedule(at(f.start_s), Ev::Fault { station, down: true })?;
            sched.schedule(at(f.start_s + f.duration_s), Ev::Fault { station, down: false })?;
            outages.push(Outage {
                station: f.station.clone(),
                on_sync_path: topo.on_sync_path(station),
                start_s: f.start_s.min(horizon_s),
                end_s: (f.start_s + f.duration_s).min(horizon_s),
            });
        }

        if let Some(r) = requests.first() {
            sched.schedule(at(r.time), Ev::Arrival(0))?;
        }
        sched.schedule(at(scaling.interval_s), Ev::Tick)?;
        sched.schedule(at(forecast_interval_s), Ev::IntervalEnd)?;
        if warmup_s > 0.0 {
            sched.schedule(at(warmup_s), Ev::WarmupEnd)?;
        }

        let series =
            topo.stations.iter().map(|s| StationSeries { station: s.id.clone(), ..Default::default() }).collect();
        let mut state = State {
            broker: Broker::new(topo.broker_latency_s),
            requests,
            horizon_s,
            scaling,
            stations,
            caches,
            hit_times,
            breakers,
            records: Vec::new(),
            progress: Vec::new(),
            next_token: 0,
            rec_rng: RngStream::new(seed, "recommendation"),
            relevance,
            default_relevance,
            recommendation_views: 0,
            recommendation_hits: 0,
            async_failed: 0,
            visits,
            mean_service,
            pending_up: vec![0; n],
            last_action: vec![None; n],
            util_history: vec![Vec::new(); n],
            prev_snap: vec![StationSnapshot::default(); n],
            series,
            scaling_log: Vec::new(),
            forecaster,
            interval_s: forecast_interval_s,
            interval_arrivals: 0,
            one_step: Vec::new(),
            full_intervals: (horizon_s / forecast_interval_s + 1e-9).floor() as usize,
            warmup_snapshots: Vec::new(),
            topo,
        };
        state.record_one_step()?;
        if state.scaling.kind == ScalingKind::Predictive {
            state.initial_sizing()?;
        }
        Ok(Simulation { state, sched, warmup_s, outages })
    }

    /// Execute the run to its horizon and collect everything measured.
    pub fn run(mut self) -> Result<RunOutput> {
        let end = at(self.state.horizon_s);
        run_until(&mut self.state, &mut self.sched, end)?;
        let mut s = self.state;
        let horizon = s.horizon_s;
        let final_snapshots: Vec<StationSnapshot> = s.stations.iter_mut().map(|st| st.snapshot(horizon)).collect();
        let times: Vec<f64> = s.requests.iter().map(|r| r.time).filter(|&t| t <= horizon).collect();
        let demand = aggregate(&times, 0.0, s.interval_s, Some(horizon.max(s.interval_s)))?;
        let (cache_hits, cache_misses) =
            s.caches.iter().flatten().fold((0, 0), |(h, m), c| (h + c.hits(), m + c.misses()));
        let mut one_step = s.one_step;
        one_step.truncate(s.full_intervals);
        let warmup_snapshots = if s.warmup_snapshots.is_empty() {
            vec![StationSnapshot::default(); s.stations.len()]
        } else {
            s.warmup_snapshots
        };
        Ok(RunOutput {
            trace: RunTrace {
                stations: s.topo.stations.iter().map(|st| st.id.clone()).collect(),
                requests: s.records,
                end_s: horizon,
            },
            horizon_s: horizon,
            warmup_s: self.warmup_s,
            series: s.series,
            scaling_log: s.scaling_log,
            demand,
            one_step_forecast: one_step,
            outages: self.outages,
            recommendation_views: s.recommendation_views,
            recommendation_hits: s.recommendation_hits,
            cache_hits,
            cache_misses,
            async_published: s.broker.published(),
            async_failed: s.async_failed,
            warmup_snapshots,
            final_snapshots,
            events_executed: self.sched.executed(),
        })
    }
}

impl State {
    fn token(&mut self) -> u64 {
        self.next_token += 1;
        self.next_token
    }

    fn hop_latency(&self, network: bool) -> f64 {
        if network {
            self.topo.network_hop_latency_s
        } else {
            0.0
        }
    }

    fn start_service(&mut self, station: usize, s: &Started, now: f64, sched: &mut Scheduler<Ev>) -> Result<()> {
        let j = &s.job;
        if let Some(h) = self.records.get_mut(j.request as usize).and_then(|r| r.hops.get_mut(j.hop as usize)) {
            h.start_s = Some(now);
        }
        sched.schedule(at(now + s.service_time), Ev::Complete { station, instance: s.instance })?;
        Ok(())
    }

    /// Move the request on from its current flow position: publish async
    /// steps, send the next synchronous hop, or finish.
    fn advance(&mut self, req: usize, now: f64, sched: &mut Scheduler<Ev>) -> Result<()> {
        let kind = self.records[req].kind;
        loop {
            let pos = self.progress[req].hop;
            let Some(&hop) = self.topo.flow(kind).hops.get(pos) else {
                let rec = &mut self.records[req];
                rec.outcome = Outcome::Success;
                rec.response_s = Some(now);
                if kind == RequestType::View {
                    self.recommendation_views += 1;
                    let user = rec.user as usize;
                    let p = self.relevance.get(user).copied().unwrap_or(self.default_relevance);
                    if self.rec_rng.open01() < p {
                        self.recommendation_hits += 1;
                    }
                }
                return Ok(());
            };
            match hop.mode {
                HopMode::Asynchronous => {
                    let d = self.broker.publish(hop.station, req, at(now));
                    sched.schedule(d.at, Ev::Deliver { station: d.topic, req: d.message })?;
                    self.progress[req].hop += 1;
                }
                HopMode::Synchronous => {
                    let lat = self.hop_latency(hop.network);
                    self.records[req].latency_s += lat;
                    let token = self.token();
                    let p = &mut self.progress[req];
                    p.token = token;
                    p.hop_attempts = 0;
                    sched.schedule(at(now + lat), Ev::Hop { req, token })?;
                    return Ok(());
                }
            }
        }
    }

    fn attempt_failed(&mut self, req: usize, reason: FailureReason, now: f64, sched: &mut Scheduler<Ev>) -> Result<()> {
        let kind = self.records[req].kind;
        let hop = self.topo.flow(kind).hops[self.progress[req].hop];
        let token = self.token();
        self.progress[req].token = token;
        match self.topo.retry.next_backoff(self.progress[req].hop_attempts, reason) {
            Some(backoff) => {
                let lat = self.hop_latency(hop.network);
                self.records[req].latency_s += lat;
                sched.schedule(at(now + backoff + lat), Ev::Hop { req, token })?;
            }
            None => {
                let rec = &mut self.records[req];
                rec.outcome = Outcome::Failure(reason);
                rec.response_s = Some(now);
            }
        }
        Ok(())
    }

    fn report(&mut self, station: usize, result: CallResult, now: f64) {
        if let (Some(b), Some(cfg)) = (self.breakers[station].as_mut(), self.topo.policies[station].breaker.as_ref()) {
            b.on_result(result, now, cfg);
        }
    }

    fn live(&self, req: usize, token: u64) -> bool {
        self.progress[req].token == token && self.records[req].outcome == Outcome::InFlight
    }

    fn on_hop(&mut self, req: usize, token: u64, now: f64, sched: &mut Scheduler<Ev>) -> Result<()> {
        if !self.live(req, token) {
            return Ok(());
        }
        let kind = self.records[req].kind;
        let hop = self.topo.flow(kind).hops[self.progress[req].hop];
        let st = hop.station;
        self.records[req].attempts += 1;
        self.progress[req].hop_attempts += 1;

        if hop.cached {
            let key = self.requests[req].key;
            if let Some(cache) = self.caches[st].as_mut() {
                if cache.lookup(key, now) == Lookup::Hit {
                    self.records[req].hops.push(HopRecord {
                        station: st as u16,
                        cache_hit: true,
                        asynchronous: false,
                        enqueue_s: now,
                        start_s: Some(now),
                        done_s: None,
                    });
                    sched.schedule(at(now + self.hit_times[st]), Ev::CacheHit { req, token })?;
                    return Ok(());
                }
            }
        }
        if let Some(b) = self.breakers[st].as_mut() {
            if !b.allow(now) {
                return self.attempt_failed(req, FailureReason::BreakerOpen, now, sched);
            }
        }
        self.records[req].hops.push(HopRecord {
            station: st as u16,
            cache_hit: false,
            asynchronous: false,
            enqueue_s: now,
            start_s: None,
            done_s: None,
        });
        let job = Job {
            request: req as u64,
            token,
            kind: kind.index(),
            hop: (self.records[req].hops.len() - 1) as u32,
            enqueued_at: now,
        };
        match self.stations[st].offer(job, now) {
            Admission::Started(s) => self.start_service(st, &s, now, sched)?,
            Admission::Queued { .. } => {}
            Admission::Rejected(reason) => {
                self.report(st, CallResult::Failure, now);
                return self.attempt_failed(req, reason, now, sched);
            }
        }
        if let Some(t) = self.topo.stations[st].timeout_s {
            sched.schedule(at(now + t), Ev::Timeout { req, token })?;
        }
        Ok(())
    }

    fn on_complete(&mut self, station: usize, instance: usize, now: f64, sched: &mut Scheduler<Ev>) -> Result<()> {
        let c = self.stations[station].complete(instance, now);
        if let Some(next) = &c.next {
            self.start_service(station, next, now, sched)?;
        }
        let job = c.job;
        let req = job.request as usize;
        if let Some(h) = self.records[req].hops.get_mut(job.hop as usize) {
            h.done_s = Some(now);
        }
        if job.token == ASYNC_TOKEN || !self.live(req, job.token) {
            return Ok(());
        }
        self.report(station, CallResult::Success, now);
        let kind = self.records[req].kind;
        if self.topo.flow(kind).hops[self.progress[req].hop].cached {
            let key = self.requests[req].key;
            if let Some(cache) = self.caches[station].as_mut() {
                cache.put(key, now);
            }
        }
        self.progress[req].hop += 1;
        self.advance(req, now, sched)
    }

    fn on_deliver(&mut self, station: usize, req: usize, now: f64, sched: &mut Scheduler<Ev>) -> Result<()> {
        self.broker.mark_delivered();
        self.records[req].hops.push(HopRecord {
            station: station as u16,
            cache_hit: false,
            asynchronous: true,
            enqueue_s: now,
            start_s: None,
            done_s: None,
        });
        let job = Job {
            request: req as u64,
            token: ASYNC_TOKEN,
            kind: self.records[req].kind.index(),
            hop: (self.records[req].hops.len() - 1) as u32,
            enqueued_at: now,
        };
        match self.stations[station].offer(job, now) {
            Admission::Started(s) => self.start_service(station, &s, now, sched)?,
            Admission::Queued { .. } => {}
            Admission::Rejected(_) => self.async_failed += 1,
        }
        Ok(())
    }

    fn scalable(&self, s: usize) -> bool {
        let (lo, hi) = self.bounds(s);
        lo < hi
    }

    fn bounds(&self, s: usize) -> (u32, u32) {
        let p = &self.topo.policies[s];
        if p.min_instances == p.max_instances {
            return (p.min_instances, p.max_instances);
        }
        let lo = self.scaling.min_instances.unwrap_or(p.min_instances);
        let hi = self.scaling.max_instances.unwrap_or(p.max_instances);
        (lo, hi.max(lo))
    }

    fn station_state(&self, s: usize) -> StationState {
        let (min, max) = self.bounds(s);
        StationState {
            current: self.stations[s].active_servers() + self.pending_up[s],
            min,
            max,
            last_action_at: self.last_action[s],
        }
    }

    fn apply(&mut self, s: usize, action: ScalingAction, now: f64, sched: &mut Scheduler<Ev>) -> Result<()> {
        if action.to > action.from {
            for _ in action.from..action.to {
                if action.effective_at_s <= now {
                    if let Some(started) = self.stations[s].scale_up(now) {
                        self.start_service(s, &started, now, sched)?;
                    }
                } else {
                    self.pending_up[s] += 1;
                    sched.schedule(at(action.effective_at_s), Ev::ScaleEffective { station: s })?;
                }
            }
        } else {
            for _ in action.to..action.from {
                self.stations[s].scale_down(now);
            }
        }
        self.last_action[s] = Some(now);
        self.scaling_log.push(action);
        Ok(())
    }

    /// Per-second arrival-rate forecast starting at the current interval.
    fn rate_forecast(&self, now: f64) -> Result<RateForecast> {
        let f = self.forecaster.as_ref().ok_or_else(|| Error::InsufficientData("missing forecast".into()))?;
        let start_s = f.observed() as f64 * self.interval_s;
        let ahead = now + self.scaling.provisioning_delay_s + self.interval_s;
        let horizon = ((ahead - start_s) / self.interval_s).ceil().max(1.0) as usize + 1;
        let counts = f.forecast(horizon)?;
        Ok(RateForecast {
            start_s,
            interval_s: self.interval_s,
            rates: counts.iter().map(|c| c / self.interval_s).collect(),
        })
    }

    fn station_forecast(&self, total: &RateForecast, s: usize) -> RateForecast {
        RateForecast { rates: total.rates.iter().map(|r| r * self.visits[s]).collect(), ..total.clone() }
    }

    fn initial_sizing(&mut self) -> Result<()> {
        let total = self.rate_forecast(0.0)?;
        let window = self.scaling.provisioning_delay_s + self.interval_s;
        let mut dummy = Scheduler::new();
        for s in 0..self.stations.len() {
            if !self.scalable(s) {
                continue;
            }
            let st = self.station_state(s);
            let rate = self.station_forecast(&total, s).peak(0.0, window)?;
            let to = sizing(rate, self.mean_service[s], self.scaling.target_utilization, st.min, st.max);
            if to != st.current {
                let action = ScalingAction {
                    station: self.topo.stations[s].id.clone(),
                    decided_at_s: 0.0,
                    effective_at_s: 0.0,
                    from: st.current,
                    to,
                    trigger: Trigger::Predictive,
                    forecast_value: Some(rate),
                };
                self.apply(s, action, 0.0, &mut dummy)?;
                self.last_action[s] = None;
            }
        }
        Ok(())
    }

    fn on_tick(&mut self, now: f64, sched: &mut Scheduler<Ev>) -> Result<()> {
        for s in 0..self.stations.len() {
            let snap = self.stations[s].snapshot(now);
            let prev = self.prev_snap[s];
            let u = utilization(snap.busy_time - prev.busy_time, snap.active_server_time - prev.active_server_time);
            self.prev_snap[s] = snap;
            self.util_history[s].push(u);
            let ser = &mut self.series[s];
            ser.times_s.push(now);
            ser.utilization.push(u);
            ser.instances.push(self.stations[s].provisioned());
            ser.queue_len.push(self.stations[s].queue_len());
        }
        match self.scaling.kind {
            ScalingKind::None => {}
            ScalingKind::Reactive => {
                for s in 0..self.stations.len() {
                    if !self.scalable(s) {
                        continue;
                    }
                    let st = self.station_state(s);
                    let id = self.topo.stations[s].id.clone();
                    if let Some(a) = reactive_decide(&self.scaling, &id, &st, &self.util_history[s], now) {
                        self.apply(s, a, now, sched)?;
                    }
                }
            }
            ScalingKind::Predictive => {
                let total = self.rate_forecast(now)?;
                for s in 0..self.stations.len() {
                    if !self.scalable(s) {
                        continue;
                    }
                    let st = self.station_state(s);
                    let id = self.topo.stations[s].id.clone();
                    let f = self.station_forecast(&total, s);
                    if let Some(a) = predictive_decide(&self.scaling, &id, &st, &f, self.mean_service[s], now)? {
                        if a.to < a.from && self.pending_up[s] > 0 {
                            continue;
                        }
                        self.apply(s, a, now, sched)?;
                    }
                }
            }
        }
        sched.schedule(at(now + self.scaling.interval_s), Ev::Tick)?;
        Ok(())
    }

    fn record_one_step(&mut self) -> Result<()> {
        if let Some(f) = &self.forecaster {
            if self.one_step.len() < self.full_intervals {
                self.one_step.push(f.forecast(1)?[0]);
            }
        }
        Ok(())
    }

    fn on_interval_end(&mut self, now: f64, sched: &mut Scheduler<Ev>) -> Result<()> {
        let count = std::mem::take(&mut self.interval_arrivals) as f64;
        if let Some(f) = self.forecaster.as_mut() {
            f.observe(count)?;
        }
        self.record_one_step()?;
        sched.schedule(at(now + self.interval_s), Ev::IntervalEnd)?;
        Ok(())
    }

    fn on_arrival(&mut self, i: usize, now: f64, sched: &mut Scheduler<Ev>) -> Result<()> {
        let r = self.requests[i];
        self.interval_arrivals += 1;
        self.records.push(RequestRecord {
            id: i as u64,
            kind: r.kind,
            session: r.session,
            user: r.user,
            arrival_s: now,
            response_s: None,
            outcome: Outcome::InFlight,
            latency_s: self.topo.gateway_overhead_s,
            attempts: 0,
            hops: Vec::new(),
        });
        self.progress.push(Progress::default());
        if let Some(next) = self.requests.get(i + 1) {
            sched.schedule(at(next.time), Ev::Arrival(i + 1))?;
        }
        // The gateway overhead delays the first hop.
        self.advance(i, now + self.topo.gateway_overhead_s, sched)
    }
}

impl Model for State {
    type Event = Ev;

    fn handle(&mut self, ev: Scheduled<Ev>, sched: &mut Scheduler<Ev>) -> Result<()> {
        let now = ev.time.as_secs();
        match ev.event {
            Ev::Arrival(i) => self.on_arrival(i, now, sched),
            Ev::Hop { req, token } => self.on_hop(req, token, now, sched),
            Ev::CacheHit { req, token } => {
                if !self.live(req, token) {
                    return Ok(());
                }
                if let Some(h) = self.records[req].hops.last_mut() {
                    h.done_s = Some(now);
                }
                self.progress[req].hop += 1;
                self.advance(req, now, sched)
            }
            Ev::Complete { station, instance } => self.on_complete(station, instance, now, sched),
            Ev::Timeout { req, token } => {
                if !self.live(req, token) {
                    return Ok(());
                }
                let kind = self.records[req].kind;
                let st = self.topo.flow(kind).hops[self.progress[req].hop].station;
                self.report(st, CallResult::Failure, now);
                self.attempt_failed(req, FailureReason::Timeout, now, sched)
            }
            Ev::Deliver { station, req } => self.on_deliver(station, req, now, sched),
            Ev::ScaleEffective { station } => {
                self.pending_up[station] = self.pending_up[station].saturating_sub(1);
                if let Some(started) = self.stations[station].scale_up(now) {
                    self.start_service(station, &started, now, sched)?;
                }
                Ok(())
            }
            Ev::Tick => self.on_tick(now, sched),
            Ev::IntervalEnd => self.on_interval_end(now, sched),
            Ev::Fault { station, down } => {
                self.stations[station].set_down(now, down);
                Ok(())
            }
            Ev::WarmupEnd => {
                self.warmup_snapshots = self
                    .stations
                    .iter_mut()
                    .map(|s| {
                        s.begin_window(now);
                        s.snapshot(now)
                    })
                    .collect();
                Ok(())
            }
        }
    }
}
