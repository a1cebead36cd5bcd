//! Per-request records produced by a run, and their JSONL export.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestType {
    Search,
    View,
    Book,
    Pay,
}

impl RequestType {
    pub const ALL: [RequestType; 4] = [RequestType::Search, RequestType::View, RequestType::Book, RequestType::Pay];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RequestType::Search => "search",
            RequestType::View => "view",
            RequestType::Book => "book",
            RequestType::Pay => "pay",
        }
    }

    /// Booking and payment requests count as transactions.
    pub fn is_transaction(self) -> bool {
        matches!(self, RequestType::Book | RequestType::Pay)
    }
}

impl fmt::Display for RequestType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RequestType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RequestType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown request type `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureReason {
    Timeout,
    QueueOverflow,
    BreakerOpen,
    Outage,
}

impl FailureReason {
    pub const ALL: [FailureReason; 4] =
        [FailureReason::Timeout, FailureReason::QueueOverflow, FailureReason::BreakerOpen, FailureReason::Outage];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureReason::Timeout => "timeout",
            FailureReason::QueueOverflow => "queue-overflow",
            FailureReason::BreakerOpen => "breaker-open",
            FailureReason::Outage => "outage",
        }
    }

    /// Failures worth retrying.
    pub fn is_transient(self) -> bool {
        matches!(self, FailureReason::Timeout | FailureReason::QueueOverflow)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failure(FailureReason),
    InFlight,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Failure(r) => r.as_str(),
            Outcome::InFlight => "in-flight",
        }
    }
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// One station visit (or cache hit) of a request.
#[derive(Clone, Debug, PartialEq)]
pub struct HopRecord {
    /// Index into [`RunTrace::stations`].
    pub station: u16,
    pub cache_hit: bool,
    pub asynchronous: bool,
    pub enqueue_s: f64,
    pub start_s: Option<f64>,
    pub done_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RequestRecord {
    pub id: u64,
    pub kind: RequestType,
    pub session: u64,
    pub user: u32,
    pub arrival_s: f64,
    pub response_s: Option<f64>,
    pub outcome: Outcome,
    /// Transport-only component: gateway overhead plus network hops.
    pub latency_s: f64,
    pub attempts: u32,
    pub hops: Vec<HopRecord>,
}

impl RequestRecord {
    pub fn response_time(&self) -> Option<f64> {
        match self.outcome {
            Outcome::Success => self.response_s.map(|r| r - self.arrival_s),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTrace {
    /// Station names; hop records refer to these by index. A `:cache` suffix
    /// marks the cache in front of a station.
    pub stations: Vec<String>,
    pub requests: Vec<RequestRecord>,
    pub end_s: f64,
}

#[derive(Serialize)]
struct HopLine<'a> {
    station: &'a str,
    enqueue_s: f64,
    start_s: Option<f64>,
    done_s: Option<f64>,
    #[serde(rename = "async", skip_serializing_if = "std::ops::Not::not")]
    asynchronous: bool,
}

#[derive(Serialize)]
struct RequestLine<'a> {
    id: u64,
    #[serde(rename = "type")]
    kind: RequestType,
    arrival_s: f64,
    response_s: Option<f64>,
    outcome: Outcome,
    latency_s: f64,
    attempts: u32,
    session: u64,
    user: u32,
    hops: Vec<HopLine<'a>>,
}

impl RunTrace {
    pub fn station_name(&self, hop: &HopRecord) -> String {
        let base = &self.stations[hop.station as usize];
        if hop.cache_hit {
            format!("{base}:cache")
        } else {
            base.clone()
        }
    }

    /// One JSON object per request, in request-id order.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let cache_names: Vec<String> = self.stations.iter().map(|s| format!("{s}:cache")).collect();
        for r in &self.requests {
            let line = RequestLine {
                id: r.id,
                kind: r.kind,
                arrival_s: r.arrival_s,
                response_s: r.response_s,
                outcome: r.outcome,
                latency_s: r.latency_s,
                attempts: r.attempts,
                session: r.session,
                user: r.user,
                hops: r
                    .hops
                    .iter()
                    .map(|h| HopLine {
                        station: if h.cache_hit {
                            &cache_names[h.station as usize]
                        } else {
                            &self.stations[h.station as usize]
                        },
                        enqueue_s: h.enqueue_s,
                        start_s: h.start_s,
                        done_s: h.done_s,
                        asynchronous: h.asynchronous,
                    })
                    .collect(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n").map_err(|e| Error::io("<trace>", e))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_schema() {
        let trace = RunTrace {
            stations: vec!["gateway".into(), "search".into()],
            requests: vec![RequestRecord {
                id: 0,
                kind: RequestType::Search,
                session: 3,
                user: 9,
                arrival_s: 1.0,
                response_s: None,
                outcome: Outcome::Failure(FailureReason::Timeout),
                latency_s: 0.03,
                attempts: 1,
                hops: vec![HopRecord {
                    station: 1,
                    cache_hit: true,
                    asynchronous: false,
                    enqueue_s: 1.0,
                    start_s: Some(1.0),
                    done_s: None,
                }],
            }],
            end_s: 10.0,
        };
        let text = String::from_utf8(trace.to_jsonl()).unwrap();
        let v: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(v["type"], "search");
        assert_eq!(v["outcome"], "timeout");
        assert!(v["response_s"].is_null());
        assert_eq!(v["hops"][0]["station"], "search:cache");
        assert!(v["hops"][0]["done_s"].is_null());
        assert!(v["hops"][0].get("async").is_none());
    }

    #[test]
    fn request_type_parses() {
        for t in RequestType::ALL {
            assert_eq!(t.as_str().parse::<RequestType>().unwrap(), t);
        }
        assert!("refund".parse::<RequestType>().is_err());
    }
}
