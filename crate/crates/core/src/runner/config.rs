//! Scenario files, built-in scenarios and dotted-path overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analytics::{ForecastConfig, SegmentationConfig};
use crate::autoscale::ScalingPolicy;
use crate::engine::sim::Fault;
use crate::metrics::MetricsConfig;
use crate::topology::{Architecture, TopologyConfig};
use crate::workload::WorkloadConfig;
use crate::{Error, Result};

/// Bounds of the offered-rate bisection used for load capacity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacityConfig {
    pub rate_low: f64,
    pub rate_high: f64,
    pub iterations: usize,
    pub horizon_s: f64,
    pub max_error_pct: f64,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        CapacityConfig { rate_low: 1.0, rate_high: 400.0, iterations: 8, horizon_s: 600.0, max_error_pct: 1.0 }
    }
}

/// Default sweep for a scenario: one dotted parameter and its values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub architecture: Architecture,
    pub seed: u64,
    pub horizon_s: f64,
    pub replications: usize,
    pub workload: WorkloadConfig,
    pub topology: TopologyConfig,
    pub scaling: ScalingPolicy,
    pub forecast: ForecastConfig,
    pub segmentation: SegmentationConfig,
    pub metrics: MetricsConfig,
    pub faults: Vec<Fault>,
    pub capacity: CapacityConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "scenario".into(),
            architecture: Architecture::Microservices,
            seed: 42,
            horizon_s: 1800.0,
            replications: 10,
            workload: WorkloadConfig::default(),
            topology: TopologyConfig::default(),
            scaling: ScalingPolicy::default(),
            forecast: ForecastConfig::default(),
            segmentation: SegmentationConfig::default(),
            metrics: MetricsConfig::default(),
            faults: Vec::new(),
            capacity: CapacityConfig::default(),
            sweep: None,
        }
    }
}

/// Scenarios shipped with the crate, by name.
pub const BUILTIN_SCENARIOS: [(&str, &str); 5] = [
    ("mono_ref", include_str!("../../scenarios/mono_ref.json")),
    ("micro_ref", include_str!("../../scenarios/micro_ref.json")),
    ("spike_reactive", include_str!("../../scenarios/spike_reactive.json")),
    ("spike_predictive", include_str!("../../scenarios/spike_predictive.json")),
    ("sweep_users", include_str!("../../scenarios/sweep_users.json")),
];

/// Demand trace shipped for forecaster evaluation.
pub const DIURNAL_SPIKE_TRACE: &str = include_str!("../../scenarios/traces/diurnal_spike.csv");

/// Dotted override keys accepted as shorthand for a longer path.
const ALIASES: [(&str, &str); 3] = [
    ("workload.base_rate", "workload.profile.base_rate"),
    ("workload.amplitude", "workload.profile.amplitude"),
    ("workload.period_s", "workload.profile.period_s"),
];

impl ScenarioConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::config(origin, e.to_string()))?;
        Self::from_value(value, origin)
    }

    fn from_value(value: Value, origin: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_value(value).map_err(|e| Error::config(origin, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        BUILTIN_SCENARIOS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(n, text)| Self::from_json(text, n).expect("shipped scenarios are valid"))
    }

    /// Load from a file path, or a built-in scenario name when no such file exists.
    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_json(&text, &path.display().to_string()),
            Err(e) => {
                let stem = path.to_str().unwrap_or_default().trim_end_matches(".json");
                Self::builtin(stem).ok_or_else(|| Error::io(path, e))
            }
        }
    }

    /// Apply `key=value` overrides; values parse as JSON, falling back to strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = serde_json::to_value(self)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o.split_once('=').ok_or_else(|| Error::config(o, "override must look like key=value"))?;
            let key = key.trim();
            let value: Value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().into()));
            set_path(&mut root, canonical_path(key), value)?;
            if key == "workload.base_rate" {
                set_path(&mut root, "workload.users", Value::Null)?;
            }
        }
        Self::from_value(root, "override")
    }

    pub fn warmup_s(&self) -> f64 {
        self.metrics.warmup_fraction * self.horizon_s
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon_s > 0.0 && self.horizon_s.is_finite()) {
            return Err(Error::config("horizon_s", "must be > 0"));
        }
        if self.replications < 1 {
            return Err(Error::config("replications", "must be >= 1"));
        }
        self.workload.validate()?;
        self.scaling.validate("scaling")?;
        self.forecast.validate("forecast")?;
        self.segmentation.validate("segmentation")?;
        self.metrics.validate("metrics")?;
        if self.warmup_s() >= self.horizon_s {
            return Err(Error::config("metrics.warmup_fraction", "warmup must end before the horizon"));
        }
        let c = &self.capacity;
        if !(c.rate_low > 0.0 && c.rate_high > c.rate_low) || c.horizon_s <= 0.0 {
            return Err(Error::config("capacity", "need 0 < rate_low < rate_high and horizon_s > 0"));
        }
        crate::topology::build(self.architecture, &self.topology)?;
        for f in &self.faults {
            let known = match self.architecture {
                Architecture::Monolith => f.station == crate::topology::MONOLITH_STATION,
                Architecture::Microservices => self.topology.microservices.services.contains_key(&f.station),
            };
            if !known {
                return Err(Error::config("faults.station", format!("unknown station `{}`", f.station)));
            }
        }
        Ok(())
    }
}

/// Full dotted path for a key, expanding shorthand aliases.
pub(crate) fn canonical_path(key: &str) -> &str {
    ALIASES.iter().find(|(a, _)| *a == key).map_or(key, |(_, full)| full)
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if !map.contains_key(*part) {
                    return Err(Error::config(path, format!("unknown key `{part}`")));
                }
                let slot = map.get_mut(*part).expect("checked");
                if last {
                    *slot = value;
                    return Ok(());
                }
                if slot.is_null() {
                    *slot = Value::Object(Default::default());
                }
                slot
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| Error::config(path, format!("`{part}` is not an index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::config(path, format!("index {idx} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::config(path, format!("`{part}` is not inside an object"))),
        };
    }
    Err(Error::config(path, "empty override path"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse() {
        for (name, _) in BUILTIN_SCENARIOS {
            let cfg = ScenarioConfig::builtin(name).unwrap();
            assert_eq!(cfg.name, name);
        }
    }

    #[test]
    fn override_sets_nested_value() {
        let cfg = ScenarioConfig::builtin("mono_ref").unwrap();
        let o = cfg.with_overrides(&["workload.base_rate=50", "seed=7"]).unwrap();
        assert_eq!(o.workload.profile.base_rate, 50.0);
        assert_eq!(o.workload.users, None);
        assert_eq!(o.seed, 7);
    }

    #[test]
    fn unknown_override_is_rejected() {
        let cfg = ScenarioConfig::default();
        let e = cfg.with_overrides(&["workload.nope=1"]).unwrap_err();
        assert!(e.to_string().contains("nope"), "{e}");
    }

    #[test]
    fn bad_field_names_the_path() {
        let e = ScenarioConfig::from_json(r#"{"horizon_s": -1}"#, "x.json").unwrap_err();
        assert!(e.to_string().contains("horizon_s"), "{e}");
        let e = ScenarioConfig::from_json(r#"{"workload": {"grammar": {"p_view": 2}}}"#, "x.json").unwrap_err();
        assert!(e.to_string().contains("p_view"), "{e}");
    }
}
