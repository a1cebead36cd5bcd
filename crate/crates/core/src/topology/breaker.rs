use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreakerConfig {
    pub threshold: u32,
    pub cooldown_s: f64,
}

impl BreakerConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if self.threshold < 1 {
            return Err(Error::config(format!("{path}.threshold"), "threshold must be >= 1"));
        }
        if !(self.cooldown_s >= 0.0) {
            return Err(Error::config(format!("{path}.cooldown_s"), "cooldown must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BreakerStatus {
    Closed,
    Open,
    HalfOpen,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CallResult {
    Success,
    Failure,
}

/// Transitions a breaker may take; everything else is a bug.
pub const ALLOWED_TRANSITIONS: [(BreakerStatus, BreakerStatus); 5] = [
    (BreakerStatus::Closed, BreakerStatus::Closed),
    (BreakerStatus::Closed, BreakerStatus::Open),
    (BreakerStatus::Open, BreakerStatus::HalfOpen),
    (BreakerStatus::HalfOpen, BreakerStatus::Closed),
    (BreakerStatus::HalfOpen, BreakerStatus::Open),
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BreakerState {
    pub status: BreakerStatus,
    pub consecutive_failures: u32,
    pub open_until: f64,
    probe_in_flight: bool,
}

impl Default for BreakerState {
    fn default() -> Self {
        BreakerState { status: BreakerStatus::Closed, consecutive_failures: 0, open_until: 0.0, probe_in_flight: false }
    }
}

impl BreakerState {
    /// Whether a call may proceed at `now`. An open breaker whose cooldown has
    /// elapsed moves to half-open and lets exactly one probe through.
    pub fn allow(&mut self, now: f64) -> bool {
        match self.status {
            BreakerStatus::Closed => true,
            BreakerStatus::Open => {
                if now >= self.open_until {
                    self.status = BreakerStatus::HalfOpen;
                    self.probe_in_flight = true;
                    true
                } else {
                    false
                }
            }
            BreakerStatus::HalfOpen => {
                if self.probe_in_flight {
                    false
                } else {
                    self.probe_in_flight = true;
                    true
                }
            }
        }
    }

    pub fn on_result(&mut self, result: CallResult, now: f64, cfg: &BreakerConfig) {
        *self = breaker_on_result(*self, result, now, cfg);
    }
}

/// Advance the breaker state machine with the result of a call.
pub fn breaker_on_result(mut state: BreakerState, result: CallResult, now: f64, cfg: &BreakerConfig) -> BreakerState {
    match (state.status, result) {
        (BreakerStatus::Closed, CallResult::Success) => state.consecutive_failures = 0,
        (BreakerStatus::Closed, CallResult::Failure) => {
            state.consecutive_failures += 1;
            if state.consecutive_failures >= cfg.threshold {
                state.status = BreakerStatus::Open;
                state.open_until = now + cfg.cooldown_s;
            }
        }
        // late results from calls admitted before the trip
        (BreakerStatus::Open, _) => {}
        (BreakerStatus::HalfOpen, CallResult::Success) => {
            state.status = BreakerStatus::Closed;
            state.consecutive_failures = 0;
            state.probe_in_flight = false;
        }
        (BreakerStatus::HalfOpen, CallResult::Failure) => {
            state.status = BreakerStatus::Open;
            state.open_until = now + cfg.cooldown_s;
            state.probe_in_flight = false;
        }
    }
    state
}
