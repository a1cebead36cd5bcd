//! Coordinate search over config parameters toward target KPI values. This
//! fits free parameters; it says nothing about model validity.

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::{canonical_path, ScenarioConfig};
use super::experiment::run_replications;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tunable {
    pub path: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub kpi: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSpec {
    pub targets: Vec<Target>,
    pub tunables: Vec<Tunable>,
    pub rounds: usize,
    /// Golden-section steps per tunable per round.
    pub steps: usize,
    pub replications: usize,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        CalibrationSpec { targets: Vec::new(), tunables: Vec::new(), rounds: 2, steps: 8, replications: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Achieved {
    pub kpi: String,
    pub target: f64,
    pub achieved: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub config: ScenarioConfig,
    pub values: Vec<(String, f64)>,
    pub achieved: Vec<Achieved>,
    pub loss: f64,
    pub initial_loss: f64,
    pub evaluations: usize,
    pub warning: Option<String>,
}

impl CalibrationResult {
    pub fn table(&self) -> String {
        let mut s = format!("{:<26} {:>12} {:>12} {:>10}\n", "kpi", "target", "achieved", "rel.err");
        for a in &self.achieved {
            s += &format!("{:<26} {:>12.4} {:>12.4} {:>9.1}%\n", a.kpi, a.target, a.achieved, 100.0 * a.relative_error);
        }
        for (p, v) in &self.values {
            s += &format!("{p} = {v}\n");
        }
        s
    }
}

fn integer_path(cfg: &ScenarioConfig, path: &str) -> Result<bool> {
    let v = serde_json::to_value(cfg)?;
    let ptr = format!("/{}", canonical_path(path).replace('.', "/"));
    let slot = v.pointer(&ptr).ok_or_else(|| Error::config(path, "tunable path does not exist"))?;
    Ok(slot.is_u64() || slot.is_i64())
}

fn with_value(cfg: &ScenarioConfig, path: &str, x: f64, integer: bool) -> Result<ScenarioConfig> {
    let v = if integer { format!("{}", x.round() as i64) } else { format!("{x}") };
    cfg.with_overrides(&[format!("{path}={v}")])
}

struct Evaluator<'a> {
    spec: &'a CalibrationSpec,
    evaluations: usize,
}

impl Evaluator<'_> {
    fn achieved(&mut self, cfg: &ScenarioConfig) -> Result<Vec<Achieved>> {
        self.evaluations += 1;
        let mut c = cfg.clone();
        c.replications = self.spec.replications.max(1);
        let res = run_replications(&c)?;
        self.spec
            .targets
            .iter()
            .map(|t| {
                let a =
                    res.mean(&t.kpi).ok_or_else(|| Error::config("targets.kpi", format!("unknown KPI `{}`", t.kpi)))?;
                Ok(Achieved {
                    kpi: t.kpi.clone(),
                    target: t.value,
                    achieved: a,
                    relative_error: (a - t.value) / t.value.abs().max(1e-9),
                })
            })
            .collect()
    }

    fn loss(&mut self, cfg: &ScenarioConfig) -> Result<f64> {
        Ok(self.achieved(cfg)?.iter().map(|a| a.relative_error.powi(2)).sum())
    }
}

/// Minimize the sum of squared relative errors by golden-section line
/// searches along one tunable at a time.
pub fn calibrate(cfg: &ScenarioConfig, spec: &CalibrationSpec) -> Result<CalibrationResult> {
    if spec.targets.is_empty() {
        return Err(Error::InvalidArgument("calibration needs at least one target".into()));
    }
    for t in &spec.tunables {
        if !(t.min < t.max) {
            return Err(Error::config(format!("tunables.{}", t.path), "need min < max"));
        }
    }
    let mut ev = Evaluator { spec, evaluations: 0 };
    let mut best = cfg.clone();
    let initial_loss = ev.loss(&best)?;
    let mut best_loss = initial_loss;
    let mut values = Vec::new();
    let phi = (5f64.sqrt() - 1.0) / 2.0;

    for round in 0..spec.rounds {
        for t in &spec.tunables {
            let integer = integer_path(&best, &t.path)?;
            let (mut a, mut b) = (t.min, t.max);
            let f = |x: f64, ev: &mut Evaluator| -> Result<(f64, ScenarioConfig)> {
                let c = with_value(&best, &t.path, x, integer)?;
                Ok((ev.loss(&c)?, c))
            };
            let mut x1 = b - phi * (b - a);
            let mut x2 = a + phi * (b - a);
            let (mut f1, mut c1) = f(x1, &mut ev)?;
            let (mut f2, mut c2) = f(x2, &mut ev)?;
            for _ in 0..spec.steps {
                if f1 <= f2 {
                    b = x2;
                    (x2, f2, c2) = (x1, f1, c1.clone());
                    x1 = b - phi * (b - a);
                    (f1, c1) = f(x1, &mut ev)?;
                } else {
                    a = x1;
                    (x1, f1, c1) = (x2, f2, c2.clone());
                    x2 = a + phi * (b - a);
                    (f2, c2) = f(x2, &mut ev)?;
                }
            }
            let (fx, cx, x) = if f1 <= f2 { (f1, c1, x1) } else { (f2, c2, x2) };
            if fx < best_loss {
                best_loss = fx;
                best = cx;
                values.retain(|(p, _): &(String, f64)| p != &t.path);
                values.push((t.path.clone(), if integer { x.round() } else { x }));
            }
            info!("round {round}, {}: loss {best_loss:.5}", t.path);
        }
    }

    let achieved = ev.achieved(&best)?;
    let worst = achieved.iter().map(|a| a.relative_error.abs()).fold(0.0, f64::max);
    let warning = if !spec.tunables.is_empty() && best_loss >= initial_loss {
        Some("no improvement within the budget; returning the input configuration".to_string())
    } else if worst > 0.1 {
        Some(format!("targets not reached: worst relative error {:.1}%", 100.0 * worst))
    } else {
        None
    };
    if let Some(w) = &warning {
        warn!("{w}");
    }
    Ok(CalibrationResult {
        config: best,
        values,
        achieved,
        loss: best_loss,
        initial_loss,
        evaluations: ev.evaluations,
        warning,
    })
}
