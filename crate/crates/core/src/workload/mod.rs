//! Synthetic demand: session arrivals, funnel expansion into typed requests,
//! and the behavior log the analytics pipeline trains on.

mod behavior;
mod profile;
mod session;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Zipf};
use serde::{Deserialize, Serialize};

pub use behavior::{read_raw_trace, read_trace, write_trace, Action, BehaviorRecord, RawRecord};
pub use profile::{generate_arrivals, ArrivalProfile, ProfileKind, ReplayRates, Spike};
pub use session::{expand_session, FlowGrammar, Session};

use crate::engine::{RequestType, RngStream};
use crate::{Error, Result};

pub const DESTINATIONS: [&str; 3] = ["domestic", "international", "holiday"];
pub const PAYMENT_CHANNELS: [&str; 3] = ["card", "wallet", "bank-transfer"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub profile: ArrivalProfile,
    /// Concurrent users; when set, replaces `profile.base_rate` with
    /// `users / session_cycle_s` sessions per second.
    pub users: Option<f64>,
    /// Mean time between the starts of one user's consecutive sessions.
    pub session_cycle_s: f64,
    pub grammar: FlowGrammar,
    /// Distinct user accounts sessions are drawn from.
    pub population: u32,
    /// Distinct search keys, drawn Zipf-distributed.
    pub destinations: u32,
    pub zipf_exponent: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            profile: ArrivalProfile::constant(1.0),
            users: None,
            session_cycle_s: 60.0,
            grammar: FlowGrammar::default(),
            population: 5000,
            destinations: 1000,
            zipf_exponent: 1.0,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        self.profile.validate("workload.profile")?;
        self.grammar.validate("workload.grammar")?;
        if let Some(u) = self.users {
            if !(u.is_finite() && u >= 0.0) {
                return Err(Error::config("workload.users", "users must be >= 0"));
            }
            if !(self.session_cycle_s > 0.0) {
                return Err(Error::config("workload.session_cycle_s", "must be > 0"));
            }
        }
        if self.population < 1 || self.destinations < 1 {
            return Err(Error::config("workload.population", "population and destinations must be >= 1"));
        }
        if !(self.zipf_exponent >= 0.0) {
            return Err(Error::config("workload.zipf_exponent", "must be >= 0"));
        }
        Ok(())
    }

    pub fn effective_profile(&self) -> ArrivalProfile {
        let mut p = self.profile.clone();
        if let Some(users) = self.users {
            p.base_rate = users_to_rate(users, self.session_cycle_s);
        }
        p
    }
}

/// Offered session rate for a number of concurrent users.
pub fn users_to_rate(users: f64, session_cycle_s: f64) -> f64 {
    users / session_cycle_s
}

/// A typed request as offered to the system's front door.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannedRequest {
    pub time: f64,
    pub kind: RequestType,
    pub session: u64,
    pub user: u32,
    /// Cache key (destination id).
    pub key: u32,
}

/// Latent preference profile of a user.
#[derive(Clone, Copy, Debug)]
struct Archetype {
    weight: f64,
    destination: [f64; 3],
    price_median: f64,
    payment: [f64; 3],
}

const ARCHETYPES: [Archetype; 3] = [
    // business
    Archetype { weight: 0.25, destination: [0.3, 0.6, 0.1], price_median: 600.0, payment: [0.8, 0.15, 0.05] },
    // leisure
    Archetype { weight: 0.45, destination: [0.2, 0.2, 0.6], price_median: 350.0, payment: [0.3, 0.6, 0.1] },
    // budget
    Archetype { weight: 0.30, destination: [0.7, 0.1, 0.2], price_median: 120.0, payment: [0.2, 0.3, 0.5] },
];

fn pick(probs: &[f64], rng: &mut RngStream) -> usize {
    let u = rng.open01() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Latent archetype per user id. Derived from the seed alone so that history
/// and live workloads share one population.
pub fn user_archetypes(population: u32, seed: u64) -> Vec<u8> {
    let mut rng = RngStream::new(seed, "population");
    let weights: Vec<f64> = ARCHETYPES.iter().map(|a| a.weight).collect();
    (0..population).map(|_| pick(&weights, &mut rng) as u8).collect()
}

#[derive(Clone, Debug, Default)]
pub struct Workload {
    pub sessions: Vec<Session>,
    /// Sorted by time; only requests offered within the horizon.
    pub requests: Vec<PlannedRequest>,
    /// Sorted by timestamp.
    pub behavior: Vec<BehaviorRecord>,
}

impl Workload {
    pub fn arrival_times(&self) -> Vec<f64> {
        self.requests.iter().map(|r| r.time).collect()
    }
}

/// Generate sessions over [0, horizon] and expand them into requests and
/// behavior records. `stream` namespaces the random streams so history days
/// and the live run draw independently.
pub fn plan_workload(cfg: &WorkloadConfig, horizon: f64, seed: u64, stream: &str, archetypes: &[u8]) -> Workload {
    plan(cfg, horizon, seed, stream, archetypes, true)
}

/// As [`plan_workload`] but without behavior records.
pub fn plan_requests(cfg: &WorkloadConfig, horizon: f64, seed: u64, stream: &str, archetypes: &[u8]) -> Workload {
    plan(cfg, horizon, seed, stream, archetypes, false)
}

fn plan(
    cfg: &WorkloadConfig,
    horizon: f64,
    seed: u64,
    stream: &str,
    archetypes: &[u8],
    with_behavior: bool,
) -> Workload {
    let profile = cfg.effective_profile();
    let mut arrivals_rng = RngStream::new(seed, format!("{stream}/arrivals"));
    let mut session_rng = RngStream::new(seed, format!("{stream}/sessions"));
    let mut user_rng = RngStream::new(seed, format!("{stream}/users"));
    let mut attr_rng = RngStream::new(seed, format!("{stream}/attributes"));
    let mut key_rng = RngStream::new(seed, format!("{stream}/keys"));
    let zipf = Zipf::new(f64::from(cfg.destinations), cfg.zipf_exponent).expect("validated zipf");

    let starts = generate_arrivals(&profile, horizon, &mut arrivals_rng);
    let mut sessions = Vec::with_capacity(starts.len());
    let mut requests = Vec::new();
    let mut behavior = Vec::new();
    for (i, &t) in starts.iter().enumerate() {
        let user = user_rng.random_range(0..archetypes.len() as u32);
        let arch = &ARCHETYPES[archetypes[user as usize] as usize];
        let s = expand_session(i as u64, user, t, &cfg.grammar, &mut session_rng);
        let dest = pick(&arch.destination, &mut attr_rng);
        let price = LogNormal::new(arch.price_median.ln(), 0.3).expect("constant").sample(&mut attr_rng);
        let channel = pick(&arch.payment, &mut attr_rng);
        let key = zipf.sample(&mut key_rng) as u32 - 1;
        for &(kind, at) in &s.steps {
            if at > horizon {
                break;
            }
            requests.push(PlannedRequest { time: at, kind, session: s.id, user, key });
            if !with_behavior {
                continue;
            }
            behavior.push(BehaviorRecord {
                user_id: format!("u{user}"),
                timestamp_s: at,
                action: match kind {
                    RequestType::Search => Action::Search,
                    RequestType::View => Action::View,
                    RequestType::Book => Action::Book,
                    RequestType::Pay => Action::Pay,
                },
                destination: Some(DESTINATIONS[dest].to_string()),
                price: Some((price * 100.0).round() / 100.0),
                payment_channel: (kind == RequestType::Pay).then(|| PAYMENT_CHANNELS[channel].to_string()),
            });
        }
        if s.cancelled && with_behavior {
            if let Some(&(_, last)) = s.steps.last() {
                if last <= horizon {
                    behavior.push(BehaviorRecord {
                        user_id: format!("u{user}"),
                        timestamp_s: last,
                        action: Action::Cancel,
                        destination: Some(DESTINATIONS[dest].to_string()),
                        price: Some((price * 100.0).round() / 100.0),
                        payment_channel: None,
                    });
                }
            }
        }
        sessions.push(s);
    }
    requests.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.session.cmp(&b.session)));
    behavior.sort_by(|a, b| a.timestamp_s.total_cmp(&b.timestamp_s));
    Workload { sessions, requests, behavior }
}
