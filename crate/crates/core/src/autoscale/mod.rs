//! Instance controllers: threshold-driven reactive scaling and
//! forecast-driven predictive sizing, both subject to a provisioning delay.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingKind {
    #[default]
    None,
    Reactive,
    Predictive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingPolicy {
    pub kind: ScalingKind,
    pub target_utilization: f64,
    pub up_threshold: f64,
    pub down_threshold: f64,
    /// Consecutive control intervals a threshold must be crossed.
    pub sustain: usize,
    /// Control (metric tick) interval.
    pub interval_s: f64,
    pub cooldown_s: f64,
    pub provisioning_delay_s: f64,
    /// Override the per-station bounds when set.
    pub min_instances: Option<u32>,
    pub max_instances: Option<u32>,
}

impl Default for ScalingPolicy {
    fn default() -> Self {
        ScalingPolicy {
            kind: ScalingKind::None,
            target_utilization: 0.6,
            up_threshold: 0.7,
            down_threshold: 0.3,
            sustain: 3,
            interval_s: 10.0,
            cooldown_s: 60.0,
            provisioning_delay_s: 30.0,
            min_instances: None,
            max_instances: None,
        }
    }
}

impl ScalingPolicy {
    pub fn validate(&self, path: &str) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.target_utilization) {
            return Err(Error::config(format!("{path}.target_utilization"), "must lie in (0, 1)"));
        }
        if !unit(self.up_threshold) || !unit(self.down_threshold) {
            return Err(Error::config(path, "thresholds must lie in (0, 1)"));
        }
        if self.down_threshold >= self.up_threshold {
            return Err(Error::config(format!("{path}.down_threshold"), "down_threshold must be below up_threshold"));
        }
        if self.sustain == 0 {
            return Err(Error::config(format!("{path}.sustain"), "must be >= 1"));
        }
        if !(self.interval_s > 0.0 && self.interval_s.is_finite()) {
            return Err(Error::config(format!("{path}.interval_s"), "must be > 0"));
        }
        if !(self.cooldown_s >= 0.0) || !(self.provisioning_delay_s >= 0.0) {
            return Err(Error::config(path, "cooldown and provisioning delay must be >= 0"));
        }
        if let (Some(lo), Some(hi)) = (self.min_instances, self.max_instances) {
            if lo > hi {
                return Err(Error::config(format!("{path}.min_instances"), "min must not exceed max"));
            }
        }
        if self.min_instances == Some(0) {
            return Err(Error::config(format!("{path}.min_instances"), "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trigger {
    Reactive,
    Predictive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingAction {
    pub station: String,
    pub decided_at_s: f64,
    pub effective_at_s: f64,
    pub from: u32,
    pub to: u32,
    pub trigger: Trigger,
    /// Arrival rate (per second) the predictive rule sized for.
    pub forecast_value: Option<f64>,
}

impl ScalingAction {
    pub fn delta(&self) -> i64 {
        i64::from(self.to) - i64::from(self.from)
    }
}

/// What the controller knows about one station at a decision point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StationState {
    /// Accepting servers plus scale-ups still being provisioned.
    pub current: u32,
    pub min: u32,
    pub max: u32,
    pub last_action_at: Option<f64>,
}

/// Fraction of server capacity used: busy-server-seconds over
/// server-seconds available, clamped to [0, 1].
pub fn utilization(busy_server_time: f64, server_time: f64) -> f64 {
    if server_time <= 0.0 {
        0.0
    } else {
        (busy_server_time / server_time).clamp(0.0, 1.0)
    }
}

fn cooled(policy: &ScalingPolicy, st: &StationState, now: f64) -> bool {
    st.last_action_at.is_none_or(|t| now - t >= policy.cooldown_s)
}

/// +1 after `sustain` consecutive hot intervals, -1 after as many cold
/// ones, subject to cooldown and the instance bounds.
pub fn reactive_decide(
    policy: &ScalingPolicy,
    station: &str,
    st: &StationState,
    history: &[f64],
    now: f64,
) -> Option<ScalingAction> {
    if history.len() < policy.sustain || !cooled(policy, st, now) {
        return None;
    }
    let recent = &history[history.len() - policy.sustain..];
    let to = if recent.iter().all(|&u| u > policy.up_threshold) && st.current < st.max {
        st.current + 1
    } else if recent.iter().all(|&u| u < policy.down_threshold) && st.current > st.min {
        st.current - 1
    } else {
        return None;
    };
    Some(ScalingAction {
        station: station.to_string(),
        decided_at_s: now,
        effective_at_s: if to > st.current { now + policy.provisioning_delay_s } else { now },
        from: st.current,
        to,
        trigger: Trigger::Reactive,
        forecast_value: None,
    })
}

/// Per-second arrival-rate forecast over consecutive intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct RateForecast {
    pub start_s: f64,
    pub interval_s: f64,
    pub rates: Vec<f64>,
}

impl RateForecast {
    /// Largest rate among the intervals overlapping `[from, to]`.
    pub fn peak(&self, from: f64, to: f64) -> Result<f64> {
        let first = ((from - self.start_s) / self.interval_s).floor().max(0.0) as usize;
        let last = ((to - self.start_s) / self.interval_s).ceil().max(1.0) as usize - 1;
        if last >= self.rates.len() {
            return Err(Error::InsufficientData(format!(
                "forecast covers {} intervals, window needs {}",
                self.rates.len(),
                last + 1
            )));
        }
        Ok(self.rates[first.min(last)..=last].iter().copied().fold(0.0, f64::max))
    }
}

/// Instances needed to hold offered load `rate * mean_service` at the
/// target utilization.
pub fn sizing(rate: f64, mean_service: f64, target: f64, min: u32, max: u32) -> u32 {
    let c = (rate * mean_service / target - 1e-9).ceil();
    (c.max(0.0) as u32).clamp(min, max)
}

/// Size to the forecast peak over the interval after the provisioning delay.
/// Scale-down is one instance at a time and only when capacity would still
/// cover everything from now to the end of that interval.
pub fn predictive_decide(
    policy: &ScalingPolicy,
    station: &str,
    st: &StationState,
    forecast: &RateForecast,
    mean_service: f64,
    now: f64,
) -> Result<Option<ScalingAction>> {
    let d = policy.provisioning_delay_s;
    let ahead = now + d + forecast.interval_s;
    let up_rate = forecast.peak(now + d, ahead)?;
    let up = sizing(up_rate, mean_service, policy.target_utilization, st.min, st.max);
    let (to, rate) = if up > st.current {
        (up, up_rate)
    } else {
        let hold_rate = forecast.peak(now, ahead)?;
        let hold = sizing(hold_rate, mean_service, policy.target_utilization, st.min, st.max);
        if hold < st.current {
            (st.current - 1, hold_rate)
        } else {
            return Ok(None);
        }
    };
    Ok(Some(ScalingAction {
        station: station.to_string(),
        decided_at_s: now,
        effective_at_s: if to > st.current { now + d } else { now },
        from: st.current,
        to,
        trigger: Trigger::Predictive,
        forecast_value: Some(rate),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(current: u32) -> StationState {
        StationState { current, min: 1, max: 10, last_action_at: None }
    }

    #[test]
    fn utilization_examples() {
        assert_eq!(utilization(0.0, 10.0), 0.0);
        assert_eq!(utilization(10.0, 10.0), 1.0);
        assert_eq!(utilization(5.0, 20.0), 0.25);
    }

    #[test]
    fn reactive_rules() {
        let p = ScalingPolicy { kind: ScalingKind::Reactive, ..Default::default() };
        let a = reactive_decide(&p, "s", &st(2), &[0.9, 0.9, 0.9], 100.0).unwrap();
        assert_eq!((a.from, a.to, a.effective_at_s), (2, 3, 130.0));
        assert!(reactive_decide(&p, "s", &st(2), &[0.9, 0.5, 0.9], 100.0).is_none());
        assert!(reactive_decide(&p, "s", &st(10), &[0.9; 3], 100.0).is_none());
        let down = reactive_decide(&p, "s", &st(2), &[0.1; 3], 100.0).unwrap();
        assert_eq!((down.to, down.effective_at_s), (1, 100.0));
        let mut cooling = st(2);
        cooling.last_action_at = Some(60.0);
        assert!(reactive_decide(&p, "s", &cooling, &[0.9; 3], 100.0).is_none());
    }

    #[test]
    fn sizing_examples() {
        assert_eq!(sizing(8.0, 0.25, 0.5, 1, 100), 4);
        assert_eq!(sizing(0.0, 0.25, 0.5, 2, 100), 2);
        assert_eq!(sizing(1000.0, 0.25, 0.5, 1, 10), 10);
    }

    #[test]
    fn predictive_rules() {
        let p = ScalingPolicy {
            kind: ScalingKind::Predictive,
            target_utilization: 0.5,
            provisioning_delay_s: 30.0,
            ..Default::default()
        };
        let f = RateForecast { start_s: 0.0, interval_s: 60.0, rates: vec![8.0, 8.0, 8.0] };
        let a = predictive_decide(&p, "s", &st(2), &f, 0.25, 0.0).unwrap().unwrap();
        assert_eq!((a.to, a.effective_at_s), (4, 30.0));
        assert!(predictive_decide(&p, "s", &st(4), &f, 0.25, 0.0).unwrap().is_none());
        let down = predictive_decide(&p, "s", &st(7), &f, 0.25, 0.0).unwrap().unwrap();
        assert_eq!(down.to, 6);
        let short = RateForecast { rates: vec![8.0], ..f };
        assert!(predictive_decide(&p, "s", &st(2), &short, 0.25, 0.0).is_err());
    }

    #[test]
    fn peak_window_selection() {
        let f = RateForecast { start_s: 0.0, interval_s: 60.0, rates: vec![1.0, 5.0, 2.0] };
        assert_eq!(f.peak(0.0, 60.0).unwrap(), 1.0);
        assert_eq!(f.peak(30.0, 90.0).unwrap(), 5.0);
        assert_eq!(f.peak(120.0, 180.0).unwrap(), 2.0);
    }

    #[test]
    fn invalid_policies() {
        let bad = ScalingPolicy { down_threshold: 0.8, ..Default::default() };
        assert!(bad.validate("scaling").is_err());
        let bad = ScalingPolicy { target_utilization: 1.0, ..Default::default() };
        assert!(bad.validate("scaling").is_err());
    }
}
