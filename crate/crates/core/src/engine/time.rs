use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};

/// Seconds of simulated time. Always finite and non-negative.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Panics on negative or non-finite input; simulated time comes from
    /// arithmetic on validated config values, so this is a logic error.
    pub fn new(secs: f64) -> Self {
        assert!(secs.is_finite() && secs >= 0.0, "simulated time must be finite and non-negative, got {secs}");
        SimTime(secs)
    }

    pub fn as_secs(self) -> f64 {
        self.0
    }

    pub(crate) fn total_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add<f64> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: f64) -> SimTime {
        SimTime::new(self.0 + rhs)
    }
}

impl From<SimTime> for f64 {
    fn from(t: SimTime) -> f64 {
        t.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.0)
    }
}
