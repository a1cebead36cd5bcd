use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::engine::RngStream;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Constant,
    Diurnal,
    SpikeOverlay,
    TraceReplay,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spike {
    pub start_s: f64,
    pub duration_s: f64,
    pub multiplier: f64,
}

impl Spike {
    fn covers(&self, t: f64) -> bool {
        t >= self.start_s && t < self.start_s + self.duration_s
    }
}

/// Piecewise-constant rates, one per interval, repeated past the end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayRates {
    pub interval_s: f64,
    pub rates: Vec<f64>,
}

/// Session arrival intensity over time.
///
/// The base shape is constant (`constant`, `spike-overlay`), the raised
/// cosine `base * (1 - amplitude * cos(2*pi*(t - phase)/period))`
/// (`diurnal`, trough at the phase origin), or replayed rates
/// (`trace-replay`). Spikes multiply whatever the base shape gives, and
/// overlapping spikes compose multiplicatively.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrivalProfile {
    pub kind: ProfileKind,
    /// Sessions per second.
    pub base_rate: f64,
    pub amplitude: f64,
    pub period_s: f64,
    pub phase_s: f64,
    pub spikes: Vec<Spike>,
    pub replay: Option<ReplayRates>,
}

impl Default for ArrivalProfile {
    fn default() -> Self {
        ArrivalProfile {
            kind: ProfileKind::Constant,
            base_rate: 1.0,
            amplitude: 0.0,
            period_s: 86_400.0,
            phase_s: 0.0,
            spikes: Vec::new(),
            replay: None,
        }
    }
}

impl ArrivalProfile {
    pub fn constant(rate: f64) -> Self {
        ArrivalProfile { base_rate: rate, ..Self::default() }
    }

    pub fn diurnal(base_rate: f64, amplitude: f64, period_s: f64) -> Self {
        ArrivalProfile { kind: ProfileKind::Diurnal, base_rate, amplitude, period_s, ..Self::default() }
    }

    pub fn with_spikes(mut self, spikes: Vec<Spike>) -> Self {
        self.spikes = spikes;
        self
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let err = |field: &str, reason: &str| Err(Error::config(format!("{path}.{field}"), reason));
        if !(self.base_rate.is_finite() && self.base_rate >= 0.0) {
            return err("base_rate", "rate must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.amplitude) {
            return err("amplitude", "amplitude must lie in [0, 1]");
        }
        if self.kind == ProfileKind::Diurnal && !(self.period_s.is_finite() && self.period_s > 0.0) {
            return err("period_s", "period must be > 0");
        }
        for s in &self.spikes {
            if !(s.multiplier.is_finite() && s.multiplier >= 1.0) {
                return err("spikes", "spike multiplier must be finite and >= 1");
            }
            if !(s.duration_s.is_finite() && s.duration_s >= 0.0 && s.start_s.is_finite()) {
                return err("spikes", "spike window must be finite");
            }
        }
        if self.kind == ProfileKind::TraceReplay {
            match &self.replay {
                None => return err("replay", "trace-replay needs replay rates"),
                Some(r) => {
                    if !(r.interval_s > 0.0) || r.rates.is_empty() {
                        return err("replay", "replay needs interval_s > 0 and at least one rate");
                    }
                    if r.rates.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                        return err("replay", "replay rates must be finite and >= 0");
                    }
                }
            }
        }
        Ok(())
    }

    fn base(&self, t: f64) -> f64 {
        match self.kind {
            ProfileKind::Constant | ProfileKind::SpikeOverlay => self.base_rate,
            ProfileKind::Diurnal => {
                let x = 2.0 * PI * (t - self.phase_s) / self.period_s;
                self.base_rate * (1.0 - self.amplitude * x.cos())
            }
            ProfileKind::TraceReplay => {
                let r = self.replay.as_ref().expect("validated");
                let i = (t / r.interval_s).floor().max(0.0) as usize % r.rates.len();
                r.rates[i]
            }
        }
    }

    fn base_bound(&self) -> f64 {
        match self.kind {
            ProfileKind::Constant | ProfileKind::SpikeOverlay => self.base_rate,
            ProfileKind::Diurnal => self.base_rate * (1.0 + self.amplitude),
            ProfileKind::TraceReplay => {
                self.replay.as_ref().map(|r| r.rates.iter().copied().fold(0.0, f64::max)).unwrap_or(0.0)
            }
        }
    }

    fn multiplier(&self, t: f64) -> f64 {
        self.spikes.iter().filter(|s| s.covers(t)).map(|s| s.multiplier).product()
    }

    /// Instantaneous intensity λ(t).
    pub fn rate(&self, t: f64) -> f64 {
        (self.base(t) * self.multiplier(t)).max(0.0)
    }

    /// Breakpoints in [0, horizon] where the spike multiplier can change.
    fn segments(&self, horizon: f64) -> Vec<(f64, f64)> {
        let mut cuts = vec![0.0, horizon];
        for s in &self.spikes {
            for c in [s.start_s, s.start_s + s.duration_s] {
                if c > 0.0 && c < horizon {
                    cuts.push(c);
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Expected number of arrivals over [a, b), by midpoint quadrature.
    pub fn expected_count(&self, a: f64, b: f64) -> f64 {
        let n = (((b - a) / 0.5).ceil() as usize).max(1);
        let h = (b - a) / n as f64;
        (0..n).map(|i| self.rate(a + (i as f64 + 0.5) * h) * h).sum()
    }
}

/// Sample a non-homogeneous Poisson process on [0, horizon] by thinning:
/// candidates at a piecewise bounding rate, each kept with probability
/// λ(t)/bound. Output is sorted.
pub fn generate_arrivals(profile: &ArrivalProfile, horizon: f64, rng: &mut RngStream) -> Vec<f64> {
    let mut out = Vec::new();
    if !(horizon > 0.0) {
        return out;
    }
    for (a, b) in profile.segments(horizon) {
        let mid = 0.5 * (a + b);
        let bound = profile.base_bound() * profile.multiplier(mid);
        if !(bound > 0.0) {
            continue;
        }
        let mut t = a;
        loop {
            t += -rng.open01().ln() / bound;
            if t >= b {
                break;
            }
            let accept = profile.rate(t) / bound;
            if rng.open01() <= accept {
                out.push(t);
            }
        }
    }
    out
}
