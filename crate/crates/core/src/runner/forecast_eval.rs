//! Hold-out evaluation of every forecaster on a demand trace.

use std::path::Path;

use serde::Serialize;

use crate::analytics::{accuracy, aggregate, rolling_one_step, DemandSeries, ForecastParams, ForecasterKind};
use crate::workload::read_trace;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub params: ForecastParams,
    pub band: f64,
    pub train_fraction: f64,
    pub refit_every: usize,
    /// Bin width when the input is a behavior log.
    pub interval_s: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            params: ForecastParams { lags: 3, period: Some(24), ..Default::default() },
            band: 0.2,
            train_fraction: 0.7,
            refit_every: 24,
            interval_s: 60.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelScore {
    pub model: ForecasterKind,
    pub accuracy_pct: f64,
    pub mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub points: usize,
    pub train: usize,
    pub band: f64,
    pub scores: Vec<ModelScore>,
}

impl EvalReport {
    pub fn score(&self, model: ForecasterKind) -> Option<f64> {
        self.scores.iter().find(|s| s.model == model).map(|s| s.accuracy_pct)
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "{} points, {} train, band {}\n{:<16} {:>10} {:>10}\n",
            self.points, self.train, self.band, "model", "accuracy", "mae"
        );
        for m in &self.scores {
            s += &format!("{:<16} {:>9.1}% {:>10.2}\n", m.model.as_str(), m.accuracy_pct, m.mae);
        }
        s
    }
}

/// Read a demand series from CSV, or bin a behavior JSONL log.
pub fn load_series(path: &Path, interval_s: f64) -> Result<DemandSeries> {
    let is_jsonl = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e == "jsonl" || e == "json");
    if is_jsonl {
        let recs = read_trace(path)?;
        let times: Vec<f64> = recs.iter().map(|r| r.timestamp_s).collect();
        let start = times.iter().copied().fold(f64::INFINITY, f64::min);
        aggregate(&times, if start.is_finite() { start } else { 0.0 }, interval_s, None)
    } else {
        DemandSeries::read_csv(path)
    }
}

/// Fit on the leading fraction, then score rolling one-step forecasts on the rest.
pub fn forecast_eval(series: &DemandSeries, opts: &EvalOptions) -> Result<EvalReport> {
    let y = series.values();
    let split = (opts.train_fraction * y.len() as f64).round() as usize;
    if split == 0 || split >= y.len() {
        return Err(Error::InsufficientData(format!("{} points cannot be split", y.len())));
    }
    let actual = &y[split..];
    let scores = ForecasterKind::ALL
        .into_iter()
        .map(|kind| {
            let preds = rolling_one_step(&y, 0, split, kind, &opts.params, opts.refit_every)?;
            let mae = preds.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / actual.len() as f64;
            Ok(ModelScore { model: kind, accuracy_pct: accuracy(&preds, actual, opts.band)?, mae })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { points: y.len(), train: split, band: opts.band, scores })
}
