use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::dist::ServiceDist;
use super::rng::RngStream;
use super::trace::FailureReason;
use crate::topology::{route, RoundRobinCursor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BalancerKind {
    RoundRobin,
    LeastConnections,
}

/// Soft degradation knee: service times are multiplied by
/// `1 + alpha * max(0, n - knee) / knee` where `n` is the number of requests
/// in the station.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contention {
    pub alpha: f64,
    pub knee: f64,
}

impl Contention {
    pub fn new(alpha: f64, knee: f64) -> Result<Self> {
        let c = Contention { alpha, knee };
        c.validate("contention")?;
        Ok(c)
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::config(format!("{path}.alpha"), "alpha must be >= 0"));
        }
        if !(self.knee.is_finite() && self.knee >= 1.0) {
            return Err(Error::config(format!("{path}.knee"), "knee must be >= 1"));
        }
        Ok(())
    }

    pub fn factor(&self, in_system: usize) -> f64 {
        let excess = (in_system as f64 - self.knee).max(0.0);
        1.0 + self.alpha * excess / self.knee
    }
}

/// Static description of a queueing station.
#[derive(Clone, Debug, PartialEq)]
pub struct StationSpec {
    pub id: String,
    /// Initial instance count; each instance is one server.
    pub servers: u32,
    pub service: ServiceDist,
    /// Per-request-type step lists whose samples are summed instead of
    /// drawing from `service` (used by the monolith).
    pub per_kind_steps: Option<Vec<Vec<ServiceDist>>>,
    /// Waiting-room size. Shared queue: whole station. Balanced: per instance.
    pub queue_capacity: Option<usize>,
    pub timeout_s: Option<f64>,
    /// `None` means one shared FIFO feeding every server (M/M/c).
    pub balancer: Option<BalancerKind>,
    pub contention: Option<Contention>,
}

impl StationSpec {
    pub fn new(id: impl Into<String>, servers: u32, service: ServiceDist) -> Self {
        StationSpec {
            id: id.into(),
            servers,
            service,
            per_kind_steps: None,
            queue_capacity: None,
            timeout_s: None,
            balancer: None,
            contention: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = format!("stations.{}", self.id);
        if self.servers < 1 {
            return Err(Error::config(format!("{p}.servers"), "servers must be >= 1"));
        }
        self.service.validate(&format!("{p}.service"))?;
        if let Some(kinds) = &self.per_kind_steps {
            for steps in kinds {
                for d in steps {
                    d.validate(&format!("{p}.steps"))?;
                }
            }
        }
        if let Some(t) = self.timeout_s {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::config(format!("{p}.timeout_s"), "timeout must be > 0"));
            }
        }
        if let Some(c) = &self.contention {
            c.validate(&format!("{p}.contention"))?;
        }
        Ok(())
    }

    /// Mean uncontended service time for a request of type index `kind`.
    pub fn mean_service(&self, kind: usize) -> f64 {
        match &self.per_kind_steps {
            Some(k) => k[kind].iter().map(ServiceDist::mean).sum(),
            None => self.service.mean(),
        }
    }
}

/// A unit of work waiting in or being served by a station.
#[derive(Clone, Debug, PartialEq)]
pub struct Job {
    pub request: u64,
    /// Attempt token of the owning request; async jobs carry `u64::MAX`.
    pub token: u64,
    pub kind: usize,
    /// Index of the hop record this job belongs to.
    pub hop: u32,
    pub enqueued_at: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Started {
    pub instance: usize,
    pub job: Job,
    pub started_at: f64,
    pub service_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Admission {
    Started(Started),
    Queued { position: usize },
    Rejected(FailureReason),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub job: Job,
    pub next: Option<Started>,
}

#[derive(Clone, Debug, Default)]
struct Instance {
    alive: bool,
    retiring: bool,
    current: Option<Job>,
    queue: VecDeque<Job>,
}

impl Instance {
    fn load(&self) -> usize {
        usize::from(self.current.is_some()) + self.queue.len()
    }
}

/// Cumulative accounting, integrated piecewise between state changes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StationSnapshot {
    pub at: f64,
    pub busy_time: f64,
    pub active_server_time: f64,
    pub instance_time: f64,
    pub in_system_time: f64,
    pub arrivals: u64,
    pub rejections: u64,
    pub completions: u64,
    /// Sum of sojourn times (enqueue to completion) of completed jobs that
    /// arrived after the current window start.
    pub window_sojourn_sum: f64,
    pub window_completions: u64,
}

pub struct Station {
    spec: StationSpec,
    rng: RngStream,
    instances: Vec<Instance>,
    shared_queue: VecDeque<Job>,
    pending_retire: u32,
    cursor: RoundRobinCursor,
    down: bool,
    in_system: usize,
    window_start: f64,
    acc: StationSnapshot,
}

impl Station {
    pub fn new(spec: StationSpec, rng: RngStream) -> Self {
        let instances = (0..spec.servers).map(|_| Instance { alive: true, ..Instance::default() }).collect();
        Station {
            spec,
            rng,
            instances,
            shared_queue: VecDeque::new(),
            pending_retire: 0,
            cursor: RoundRobinCursor::default(),
            down: false,
            in_system: 0,
            window_start: 0.0,
            acc: StationSnapshot::default(),
        }
    }

    pub fn spec(&self) -> &StationSpec {
        &self.spec
    }

    pub fn id(&self) -> &str {
        &self.spec.id
    }

    /// Servers accepting new work.
    pub fn active_servers(&self) -> u32 {
        let accepting = self.instances.iter().filter(|i| i.alive && !i.retiring).count() as u32;
        accepting - self.pending_retire
    }

    /// Instances still provisioned, including ones draining their last job.
    pub fn provisioned(&self) -> u32 {
        self.instances.iter().filter(|i| i.alive).count() as u32
    }

    pub fn busy(&self) -> u32 {
        self.instances.iter().filter(|i| i.current.is_some()).count() as u32
    }

    pub fn queue_len(&self) -> usize {
        self.shared_queue.len() + self.instances.iter().map(|i| i.queue.len()).sum::<usize>()
    }

    pub fn in_system(&self) -> usize {
        self.in_system
    }

    pub fn is_down(&self) -> bool {
        self.down
    }

    fn accumulate(&mut self, now: f64) {
        let dt = now - self.acc.at;
        if dt > 0.0 {
            self.acc.busy_time += dt * f64::from(self.busy());
            self.acc.active_server_time += dt * f64::from(self.active_servers());
            self.acc.instance_time += dt * f64::from(self.provisioned());
            self.acc.in_system_time += dt * self.in_system as f64;
        }
        self.acc.at = self.acc.at.max(now);
    }

    pub fn snapshot(&mut self, now: f64) -> StationSnapshot {
        self.accumulate(now);
        self.acc
    }

    /// Start a fresh measurement window for sojourn statistics.
    pub fn begin_window(&mut self, now: f64) {
        self.accumulate(now);
        self.window_start = now;
        self.acc.window_sojourn_sum = 0.0;
        self.acc.window_completions = 0;
    }

    pub fn set_down(&mut self, now: f64, down: bool) {
        self.accumulate(now);
        self.down = down;
    }

    fn sample_service(&mut self, kind: usize) -> f64 {
        let base = match &self.spec.per_kind_steps {
            Some(kinds) => kinds[kind].iter().map(|d| d.sample(&mut self.rng)).sum(),
            None => self.spec.service.sample(&mut self.rng),
        };
        match &self.spec.contention {
            Some(c) => base * c.factor(self.in_system),
            None => base,
        }
    }

    fn start(&mut self, instance: usize, job: Job, now: f64) -> Started {
        let service_time = self.sample_service(job.kind);
        debug_assert!(self.instances[instance].current.is_none());
        self.instances[instance].current = Some(job.clone());
        Started { instance, job, started_at: now, service_time }
    }

    fn idle_server(&self) -> Option<usize> {
        if self.active_servers() == 0 {
            return None;
        }
        self.instances.iter().position(|i| i.alive && !i.retiring && i.current.is_none())
    }

    /// Offer a job: start it on a free server, queue it, or reject it.
    pub fn offer(&mut self, job: Job, now: f64) -> Admission {
        self.accumulate(now);
        if self.down {
            self.acc.rejections += 1;
            return Admission::Rejected(FailureReason::Outage);
        }
        let cap = self.spec.queue_capacity.unwrap_or(usize::MAX);
        let admission = match self.spec.balancer {
            None => {
                if let Some(i) = self.idle_server() {
                    self.in_system += 1;
                    Admission::Started(self.start(i, job, now))
                } else if self.shared_queue.len() < cap {
                    self.in_system += 1;
                    self.shared_queue.push_back(job);
                    Admission::Queued { position: self.shared_queue.len() }
                } else {
                    Admission::Rejected(FailureReason::QueueOverflow)
                }
            }
            Some(kind) => {
                let candidates: Vec<usize> = (0..self.instances.len())
                    .filter(|&i| self.instances[i].alive && !self.instances[i].retiring)
                    .collect();
                let loads: Vec<usize> = candidates.iter().map(|&i| self.instances[i].load()).collect();
                match route(kind, &loads, &mut self.cursor) {
                    Err(_) => Admission::Rejected(FailureReason::QueueOverflow),
                    Ok(pick) => {
                        let i = candidates[pick];
                        if self.instances[i].current.is_none() {
                            self.in_system += 1;
                            Admission::Started(self.start(i, job, now))
                        } else if self.instances[i].queue.len() < cap {
                            self.in_system += 1;
                            self.instances[i].queue.push_back(job);
                            Admission::Queued { position: self.instances[i].queue.len() }
                        } else {
                            Admission::Rejected(FailureReason::QueueOverflow)
                        }
                    }
                }
            }
        };
        match admission {
            Admission::Rejected(_) => self.acc.rejections += 1,
            _ => self.acc.arrivals += 1,
        }
        admission
    }

    /// The job on `instance` finished. Frees the server and pulls the next
    /// queued job onto it unless the server is being retired.
    pub fn complete(&mut self, instance: usize, now: f64) -> Completion {
        self.accumulate(now);
        let job = self.instances[instance].current.take().expect("completion for an idle server");
        self.in_system -= 1;
        self.acc.completions += 1;
        if job.enqueued_at >= self.window_start {
            self.acc.window_sojourn_sum += now - job.enqueued_at;
            self.acc.window_completions += 1;
        }
        let next = match self.spec.balancer {
            None => {
                if self.pending_retire > 0 {
                    self.pending_retire -= 1;
                    self.instances[instance].alive = false;
                    None
                } else {
                    self.shared_queue.pop_front().map(|j| self.start(instance, j, now))
                }
            }
            Some(_) => {
                let inst = &mut self.instances[instance];
                match inst.queue.pop_front() {
                    Some(j) => Some(self.start(instance, j, now)),
                    None => {
                        if inst.retiring {
                            inst.alive = false;
                            inst.retiring = false;
                        }
                        None
                    }
                }
            }
        };
        Completion { job, next }
    }

    /// Add one server. In shared mode a pending retirement is cancelled
    /// first; otherwise a queued job may start on the new server.
    pub fn scale_up(&mut self, now: f64) -> Option<Started> {
        self.accumulate(now);
        if self.pending_retire > 0 {
            self.pending_retire -= 1;
            return None;
        }
        let slot = match self.instances.iter().position(|i| !i.alive) {
            Some(s) => s,
            None => {
                self.instances.push(Instance::default());
                self.instances.len() - 1
            }
        };
        self.instances[slot] = Instance { alive: true, ..Instance::default() };
        if self.spec.balancer.is_none() {
            if let Some(j) = self.shared_queue.pop_front() {
                return Some(self.start(slot, j, now));
            }
        }
        None
    }

    /// Remove one server. An idle server goes immediately; otherwise the next
    /// server to free up is retired (it takes no new work). Never drops the
    /// station below one accepting server. Returns whether anything changed.
    pub fn scale_down(&mut self, now: f64) -> bool {
        self.accumulate(now);
        if self.active_servers() <= 1 {
            return false;
        }
        let idle =
            self.instances.iter().rposition(|i| i.alive && !i.retiring && i.current.is_none() && i.queue.is_empty());
        if let Some(i) = idle {
            self.instances[i].alive = false;
            return true;
        }
        match self.spec.balancer {
            None => self.pending_retire += 1,
            Some(_) => {
                let pick = (0..self.instances.len())
                    .filter(|&i| self.instances[i].alive && !self.instances[i].retiring)
                    .min_by_key(|&i| (self.instances[i].load(), std::cmp::Reverse(i)))
                    .expect("at least two accepting instances");
                self.instances[pick].retiring = true;
            }
        }
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(id: u64, t: f64) -> Job {
        Job { request: id, token: 0, kind: 0, hop: 0, enqueued_at: t }
    }

    fn station(servers: u32, cap: Option<usize>) -> Station {
        let mut spec = StationSpec::new("s", servers, ServiceDist::Deterministic { value_s: 1.0 });
        spec.queue_capacity = cap;
        Station::new(spec, RngStream::new(1, "s"))
    }

    #[test]
    fn idle_station_starts_immediately() {
        let mut s = station(1, None);
        match s.offer(job(1, 0.0), 0.0) {
            Admission::Started(st) => {
                assert_eq!(st.started_at, 0.0);
                assert_eq!(st.service_time, 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn busy_without_waiting_room_rejects() {
        let mut s = station(1, Some(0));
        s.offer(job(1, 0.0), 0.0);
        assert_eq!(s.offer(job(2, 0.0), 0.0), Admission::Rejected(FailureReason::QueueOverflow));
    }

    #[test]
    fn fifo_position() {
        let mut s = station(1, Some(5));
        s.offer(job(1, 0.0), 0.0);
        s.offer(job(2, 0.0), 0.0);
        s.offer(job(3, 0.0), 0.0);
        assert_eq!(s.queue_len(), 2);
        assert_eq!(s.offer(job(4, 0.0), 0.0), Admission::Queued { position: 3 });
        let c = s.complete(0, 1.0);
        assert_eq!(c.job.request, 1);
        assert_eq!(c.next.unwrap().job.request, 2);
    }

    #[test]
    fn contention_factor_knee() {
        let c = Contention::new(1.0, 50.0).unwrap();
        assert_eq!(c.factor(100), 2.0);
        assert_eq!(c.factor(50), 1.0);
        assert_eq!(c.factor(10), 1.0);
        assert_eq!(Contention::new(0.0, 50.0).unwrap().factor(1000), 1.0);
        assert!(Contention::new(-0.1, 50.0).is_err());
        assert!(Contention::new(1.0, 0.5).is_err());
    }

    #[test]
    fn scale_down_drains_busy_server() {
        let mut s = station(2, None);
        s.offer(job(1, 0.0), 0.0);
        s.offer(job(2, 0.0), 0.0);
        s.offer(job(3, 0.0), 0.0);
        assert!(s.scale_down(0.5));
        assert_eq!(s.provisioned(), 2);
        assert_eq!(s.active_servers(), 1);
        // first server to free retires and does not take job 3
        let c = s.complete(0, 1.0);
        assert!(c.next.is_none());
        assert_eq!(s.provisioned(), 1);
        let c = s.complete(1, 1.0);
        assert_eq!(c.next.unwrap().job.request, 3);
    }

    #[test]
    fn scale_up_starts_queued_work() {
        let mut s = station(1, None);
        s.offer(job(1, 0.0), 0.0);
        s.offer(job(2, 0.0), 0.0);
        let st = s.scale_up(0.2).unwrap();
        assert_eq!(st.job.request, 2);
        assert_eq!(s.busy(), 2);
    }

    #[test]
    fn utilization_accounting() {
        let mut s = station(2, None);
        s.offer(job(1, 0.0), 0.0);
        s.complete(0, 5.0);
        let snap = s.snapshot(10.0);
        assert_eq!(snap.busy_time, 5.0);
        assert_eq!(snap.active_server_time, 20.0);
    }

    #[test]
    fn balanced_least_connections_spreads_work() {
        let mut spec = StationSpec::new("b", 3, ServiceDist::Deterministic { value_s: 1.0 });
        spec.balancer = Some(BalancerKind::LeastConnections);
        let mut s = Station::new(spec, RngStream::new(1, "b"));
        for i in 0..3 {
            assert!(matches!(s.offer(job(i, 0.0), 0.0), Admission::Started(_)));
        }
        assert_eq!(s.busy(), 3);
        assert_eq!(s.offer(job(9, 0.0), 0.0), Admission::Queued { position: 1 });
    }

    #[test]
    fn down_station_rejects_with_outage() {
        let mut s = station(1, None);
        s.set_down(0.0, true);
        assert_eq!(s.offer(job(1, 0.0), 0.0), Admission::Rejected(FailureReason::Outage));
    }
}
