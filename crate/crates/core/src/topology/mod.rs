//! The two architectures under test, built from a scenario's topology
//! section: a single contended monolith station, or a graph of independently
//! scaled services with caching, balancing, retries, breakers and an async
//! broker.

mod balancer;
mod breaker;
mod broker;
mod cache;
mod retry;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use balancer::{route, RoundRobinCursor};
pub use breaker::{breaker_on_result, BreakerConfig, BreakerState, BreakerStatus, CallResult, ALLOWED_TRANSITIONS};
pub use broker::{broker_publish, Broker, Delivery};
pub use cache::{cache_lookup, Cache, CachePolicy, Lookup};
pub use retry::{retry_wrap, Attempt, RetryOutcome, RetryPolicy};

use crate::engine::{BalancerKind, Contention, RequestType, ServiceDist, StationSpec};
use crate::{Error, Result};

/// Services every microservices deployment must define.
pub const REQUIRED_SERVICES: [&str; 7] =
    ["gateway", "search", "booking", "payment", "user-profile", "recommendation", "notification"];

pub const MONOLITH_STATION: &str = "monolith";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Monolith,
    Microservices,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HopMode {
    Synchronous,
    Asynchronous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowStep {
    pub station: String,
    #[serde(default, rename = "async", skip_serializing_if = "std::ops::Not::not")]
    pub asynchronous: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub cached: bool,
}

impl FlowStep {
    fn sync(station: &str) -> Self {
        FlowStep { station: station.into(), asynchronous: false, cached: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonolithConfig {
    pub servers: u32,
    pub queue_capacity: Option<usize>,
    pub timeout_s: Option<f64>,
    pub contention: Contention,
    pub retry: RetryPolicy,
}

impl Default for MonolithConfig {
    fn default() -> Self {
        MonolithConfig {
            servers: 48,
            queue_capacity: Some(600),
            timeout_s: Some(8.0),
            contention: Contention { alpha: 0.5, knee: 96.0 },
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub instances: u32,
    pub min_instances: u32,
    pub max_instances: u32,
    pub queue_capacity: Option<usize>,
    pub timeout_s: Option<f64>,
    pub balancer: Option<BalancerKind>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            instances: 2,
            min_instances: 1,
            max_instances: 60,
            queue_capacity: Some(50),
            timeout_s: Some(2.0),
            balancer: Some(BalancerKind::LeastConnections),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicroservicesConfig {
    pub services: BTreeMap<String, ServiceConfig>,
    pub cache: CachePolicy,
    pub breaker: Option<BreakerConfig>,
    pub retry: RetryPolicy,
}

impl Default for MicroservicesConfig {
    fn default() -> Self {
        MicroservicesConfig {
            services: REQUIRED_SERVICES.iter().map(|s| (s.to_string(), ServiceConfig::default())).collect(),
            cache: CachePolicy::default(),
            breaker: Some(BreakerConfig { threshold: 20, cooldown_s: 5.0 }),
            retry: RetryPolicy { max_attempts: 3, backoff_s: 0.1 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    /// Mean per-step work of each service, shared by both architectures.
    pub service_times: BTreeMap<String, ServiceDist>,
    pub gateway_overhead_s: f64,
    pub network_hop_latency_s: f64,
    pub broker_latency_s: f64,
    pub flows: BTreeMap<RequestType, Vec<FlowStep>>,
    pub monolith: MonolithConfig,
    pub microservices: MicroservicesConfig,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        let service_times = [
            ("search", 0.12),
            ("booking", 0.20),
            ("payment", 0.25),
            ("user-profile", 0.08),
            ("recommendation", 0.15),
            ("notification", 0.05),
            ("gateway", 0.01),
        ]
        .into_iter()
        .map(|(k, m)| (k.to_string(), ServiceDist::exponential_mean(m)))
        .collect();
        TopologyConfig {
            service_times,
            gateway_overhead_s: 0.01,
            network_hop_latency_s: 0.02,
            broker_latency_s: 0.05,
            flows: default_flows(),
            monolith: MonolithConfig::default(),
            microservices: MicroservicesConfig::default(),
        }
    }
}

pub fn default_flows() -> BTreeMap<RequestType, Vec<FlowStep>> {
    let notify = FlowStep { station: "notification".into(), asynchronous: true, cached: false };
    let mut flows = BTreeMap::new();
    flows.insert(
        RequestType::Search,
        vec![FlowStep::sync("gateway"), FlowStep { station: "search".into(), asynchronous: false, cached: true }],
    );
    flows.insert(
        RequestType::View,
        vec![FlowStep::sync("gateway"), FlowStep::sync("user-profile"), FlowStep::sync("recommendation")],
    );
    flows.insert(
        RequestType::Book,
        vec![FlowStep::sync("gateway"), FlowStep::sync("booking"), FlowStep::sync("payment"), notify.clone()],
    );
    flows.insert(RequestType::Pay, vec![FlowStep::sync("gateway"), FlowStep::sync("payment"), notify]);
    flows
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowHop {
    pub station: usize,
    pub mode: HopMode,
    /// Crosses the network (adds hop latency) rather than an in-process call.
    pub network: bool,
    pub cached: bool,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Flow {
    pub hops: Vec<FlowHop>,
}

impl Flow {
    pub fn sync_hops(&self) -> impl Iterator<Item = &FlowHop> {
        self.hops.iter().filter(|h| h.mode == HopMode::Synchronous)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationPolicy {
    pub cache: Option<CachePolicy>,
    pub breaker: Option<BreakerConfig>,
    pub min_instances: u32,
    pub max_instances: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServiceTopology {
    pub architecture: Architecture,
    pub stations: Vec<StationSpec>,
    pub policies: Vec<StationPolicy>,
    /// Indexed by [`RequestType::index`].
    pub flows: Vec<Flow>,
    pub gateway_overhead_s: f64,
    pub network_hop_latency_s: f64,
    pub broker_latency_s: f64,
    pub retry: RetryPolicy,
}

impl ServiceTopology {
    pub fn station_index(&self, id: &str) -> Option<usize> {
        self.stations.iter().position(|s| s.id == id)
    }

    pub fn flow(&self, kind: RequestType) -> &Flow {
        &self.flows[kind.index()]
    }

    /// Whether the station is on some request's synchronous path.
    pub fn on_sync_path(&self, station: usize) -> bool {
        self.flows.iter().any(|f| f.sync_hops().any(|h| h.station == station))
    }

    /// Transport latency of a request that takes its flow with one attempt per hop.
    pub fn nominal_latency(&self, kind: RequestType) -> f64 {
        self.gateway_overhead_s
            + self.flow(kind).sync_hops().filter(|h| h.network).count() as f64 * self.network_hop_latency_s
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.stations {
            s.validate()?;
        }
        for (kind, flow) in RequestType::ALL.iter().zip(&self.flows) {
            let mut seen = Vec::new();
            for h in flow.sync_hops() {
                if h.station >= self.stations.len() {
                    return Err(Error::config(format!("topology.flows.{kind}"), "flow references an unknown station"));
                }
                if seen.contains(&h.station) {
                    return Err(Error::config(
                        format!("topology.flows.{kind}"),
                        format!("synchronous hops revisit `{}` (cycle)", self.stations[h.station].id),
                    ));
                }
                seen.push(h.station);
            }
        }
        for (s, p) in self.stations.iter().zip(&self.policies) {
            if p.min_instances < 1 || p.min_instances > p.max_instances {
                return Err(Error::config(
                    format!("topology.microservices.services.{}", s.id),
                    "need 1 <= min_instances <= max_instances",
                ));
            }
            if s.servers < p.min_instances || s.servers > p.max_instances {
                return Err(Error::config(
                    format!("topology.microservices.services.{}.instances", s.id),
                    "initial instances must lie within [min, max]",
                ));
            }
        }
        Ok(())
    }
}

fn flow_steps(cfg: &TopologyConfig, kind: RequestType) -> Result<&[FlowStep]> {
    cfg.flows
        .get(&kind)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::config(format!("topology.flows.{kind}"), "missing flow"))
}

fn service_time<'a>(cfg: &'a TopologyConfig, id: &str) -> Result<&'a ServiceDist> {
    cfg.service_times.get(id).ok_or_else(|| Error::MissingService(id.to_string()))
}

/// Each service becomes an independently scaled station; notification is
/// reached only through the broker.
pub fn build_microservices(cfg: &TopologyConfig) -> Result<ServiceTopology> {
    let mcfg = &cfg.microservices;
    for name in REQUIRED_SERVICES {
        if !mcfg.services.contains_key(name) {
            return Err(Error::MissingService(name.to_string()));
        }
        service_time(cfg, name)?;
    }
    mcfg.retry.validate("topology.microservices.retry")?;
    mcfg.cache.validate("topology.microservices.cache")?;
    if let Some(b) = &mcfg.breaker {
        b.validate("topology.microservices.breaker")?;
    }

    let mut stations = Vec::new();
    let mut policies = Vec::new();
    let mut cached_stations = Vec::new();
    for kind in RequestType::ALL {
        for step in flow_steps(cfg, kind)? {
            if step.cached && !cached_stations.contains(&step.station) {
                cached_stations.push(step.station.clone());
            }
        }
    }
    for (name, sc) in &mcfg.services {
        let mut spec = StationSpec::new(name.clone(), sc.instances, service_time(cfg, name)?.clone());
        spec.queue_capacity = sc.queue_capacity;
        spec.timeout_s = sc.timeout_s;
        spec.balancer = sc.balancer;
        stations.push(spec);
        policies.push(StationPolicy {
            cache: (mcfg.cache.enabled && cached_stations.contains(name)).then(|| mcfg.cache.clone()),
            breaker: mcfg.breaker,
            min_instances: sc.min_instances,
            max_instances: sc.max_instances,
        });
    }

    let mut flows = Vec::new();
    for kind in RequestType::ALL {
        let mut hops = Vec::new();
        for step in flow_steps(cfg, kind)? {
            let station = stations
                .iter()
                .position(|s| s.id == step.station)
                .ok_or_else(|| Error::MissingService(step.station.clone()))?;
            hops.push(FlowHop {
                station,
                mode: if step.asynchronous { HopMode::Asynchronous } else { HopMode::Synchronous },
                network: true,
                cached: step.cached && mcfg.cache.enabled,
            });
        }
        flows.push(Flow { hops });
    }

    let topo = ServiceTopology {
        architecture: Architecture::Microservices,
        stations,
        policies,
        flows,
        gateway_overhead_s: cfg.gateway_overhead_s,
        network_hop_latency_s: cfg.network_hop_latency_s,
        broker_latency_s: cfg.broker_latency_s,
        retry: mcfg.retry,
    };
    topo.validate()?;
    Ok(topo)
}

/// One station doing every step of a request in-process, with service time
/// equal to the sum of the step times scaled by the contention factor.
pub fn build_monolith(cfg: &TopologyConfig) -> Result<ServiceTopology> {
    let m = &cfg.monolith;
    m.contention.validate("topology.monolith.contention")?;
    m.retry.validate("topology.monolith.retry")?;
    let mut per_kind = Vec::new();
    for kind in RequestType::ALL {
        let steps = flow_steps(cfg, kind)?
            .iter()
            .map(|s| service_time(cfg, &s.station).cloned())
            .collect::<Result<Vec<_>>>()?;
        per_kind.push(steps);
    }
    let mean_all: f64 =
        per_kind.iter().map(|k| k.iter().map(ServiceDist::mean).sum::<f64>()).sum::<f64>() / per_kind.len() as f64;
    let mut spec =
        StationSpec::new(MONOLITH_STATION, m.servers, ServiceDist::exponential_mean(mean_all.max(f64::MIN_POSITIVE)));
    spec.per_kind_steps = Some(per_kind);
    spec.queue_capacity = m.queue_capacity;
    spec.timeout_s = m.timeout_s;
    spec.contention = Some(m.contention);
    let hop = FlowHop { station: 0, mode: HopMode::Synchronous, network: false, cached: false };
    let topo = ServiceTopology {
        architecture: Architecture::Monolith,
        stations: vec![spec],
        policies: vec![StationPolicy {
            cache: None,
            breaker: None,
            min_instances: m.servers,
            max_instances: m.servers,
        }],
        flows: RequestType::ALL.iter().map(|_| Flow { hops: vec![hop] }).collect(),
        gateway_overhead_s: cfg.gateway_overhead_s,
        network_hop_latency_s: cfg.network_hop_latency_s,
        broker_latency_s: cfg.broker_latency_s,
        retry: m.retry,
    };
    topo.validate()?;
    Ok(topo)
}

pub fn build(arch: Architecture, cfg: &TopologyConfig) -> Result<ServiceTopology> {
    match arch {
        Architecture::Monolith => build_monolith(cfg),
        Architecture::Microservices => build_microservices(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_microservices_has_seven_stations() {
        let t = build_microservices(&TopologyConfig::default()).unwrap();
        assert_eq!(t.stations.len(), 7);
        let search = t.flow(RequestType::Search);
        assert_eq!(search.sync_hops().count(), 2);
        let search_station = t.station_index("search").unwrap();
        assert!(search.hops.iter().any(|h| h.station == search_station && h.cached));
        assert!(t.policies[search_station].cache.is_some());
    }

    #[test]
    fn notification_is_async_only() {
        let t = build_microservices(&TopologyConfig::default()).unwrap();
        let n = t.station_index("notification").unwrap();
        assert!(!t.on_sync_path(n));
        let book = t.flow(RequestType::Book);
        assert!(book.hops.iter().any(|h| h.station == n && h.mode == HopMode::Asynchronous));
    }

    #[test]
    fn missing_notification_is_a_config_error() {
        let mut cfg = TopologyConfig::default();
        cfg.microservices.services.remove("notification");
        match build_microservices(&cfg) {
            Err(Error::MissingService(s)) => assert_eq!(s, "notification"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn monolith_sums_step_times() {
        let mut cfg = TopologyConfig::default();
        cfg.monolith.contention.alpha = 0.0;
        let t = build_monolith(&cfg).unwrap();
        assert_eq!(t.stations.len(), 1);
        let book = t.stations[0].mean_service(RequestType::Book.index());
        assert!((book - (0.01 + 0.20 + 0.25 + 0.05)).abs() < 1e-12);
        assert_eq!(t.nominal_latency(RequestType::Book), cfg.gateway_overhead_s);
    }

    #[test]
    fn monolith_rejects_bad_contention() {
        let mut cfg = TopologyConfig::default();
        cfg.monolith.contention.alpha = -1.0;
        assert!(build_monolith(&cfg).is_err());
        let mut cfg = TopologyConfig::default();
        cfg.monolith.contention.knee = 0.0;
        assert!(build_monolith(&cfg).is_err());
    }

    #[test]
    fn search_latency_two_hops() {
        let t = build_microservices(&TopologyConfig::default()).unwrap();
        assert!((t.nominal_latency(RequestType::Search) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn cyclic_sync_flow_rejected() {
        let mut cfg = TopologyConfig::default();
        cfg.flows.insert(RequestType::View, vec![FlowStep::sync("gateway"), FlowStep::sync("gateway")]);
        assert!(build_microservices(&cfg).is_err());
    }
}
