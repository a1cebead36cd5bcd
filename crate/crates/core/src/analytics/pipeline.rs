//! Glue between raw history, the trained models and the running system.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::forecast::{fit_forecaster, predict, ForecastParams, Forecaster, ForecasterKind};
use super::kmeans::{kmeans_fit, segment_assign, ClusterModel};
use super::preprocess::{clean, FeatureMatrix, NormMethod, OneHotEncoder};
use crate::engine::RngStream;
use crate::workload::{Action, BehaviorRecord, RawRecord, DESTINATIONS, PAYMENT_CHANNELS};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    pub model: ForecasterKind,
    pub params: ForecastParams,
    pub interval_s: f64,
    pub refit_every: usize,
    /// Prior runs of the same workload used as training history.
    pub history_runs: usize,
    pub band: f64,
    /// Replace the model with the true planned counts.
    pub oracle: bool,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            model: ForecasterKind::TreeEnsemble,
            params: ForecastParams::default(),
            interval_s: 60.0,
            refit_every: 10,
            history_runs: 3,
            band: 0.2,
            oracle: false,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.interval_s > 0.0 && self.interval_s.is_finite()) {
            return Err(Error::config(format!("{path}.interval_s"), "must be > 0"));
        }
        if !(self.band > 0.0) {
            return Err(Error::config(format!("{path}.band"), "must be > 0"));
        }
        if self.params.lags == 0 {
            return Err(Error::config(format!("{path}.params.lags"), "must be >= 1"));
        }
        if self.refit_every == 0 {
            return Err(Error::config(format!("{path}.refit_every"), "must be >= 1"));
        }
        Ok(())
    }
}

/// Online demand forecast over fixed intervals starting at t = 0.
#[derive(Clone, Debug)]
pub enum DemandForecaster {
    Oracle {
        counts: Vec<f64>,
        observed: usize,
    },
    Model {
        params: ForecastParams,
        kind: ForecasterKind,
        refit_every: usize,
        history: Vec<f64>,
        observed: Vec<f64>,
        model: Box<Forecaster>,
        since_fit: usize,
    },
}

impl DemandForecaster {
    pub fn oracle(counts: Vec<f64>) -> Self {
        DemandForecaster::Oracle { counts, observed: 0 }
    }

    /// Train on `history`, which ends immediately before t = 0.
    pub fn trained(
        history: Vec<f64>,
        kind: ForecasterKind,
        params: ForecastParams,
        refit_every: usize,
    ) -> Result<Self> {
        let start = -(history.len() as i64);
        let model = fit_forecaster(&history, start, kind, &params)?;
        Ok(DemandForecaster::Model {
            params,
            kind,
            refit_every: refit_every.max(1),
            history,
            observed: Vec::new(),
            model: Box::new(model),
            since_fit: 0,
        })
    }

    pub fn observed(&self) -> usize {
        match self {
            DemandForecaster::Oracle { observed, .. } => *observed,
            DemandForecaster::Model { observed, .. } => observed.len(),
        }
    }

    /// Record the count of the interval that just closed.
    pub fn observe(&mut self, count: f64) -> Result<()> {
        match self {
            DemandForecaster::Oracle { observed, .. } => *observed += 1,
            DemandForecaster::Model { params, kind, refit_every, history, observed, model, since_fit } => {
                observed.push(count);
                *since_fit += 1;
                if *since_fit >= *refit_every {
                    let all: Vec<f64> = history.iter().chain(observed.iter()).copied().collect();
                    **model = fit_forecaster(&all, -(history.len() as i64), *kind, params)?;
                    *since_fit = 0;
                }
            }
        }
        Ok(())
    }

    /// Counts for the next `horizon` intervals after the last observed one.
    pub fn forecast(&self, horizon: usize) -> Result<Vec<f64>> {
        match self {
            DemandForecaster::Oracle { counts, observed } => {
                Ok((0..horizon).map(|i| counts.get(observed + i).copied().unwrap_or(0.0)).collect())
            }
            DemandForecaster::Model { history, observed, model, .. } => {
                let all: Vec<f64> = history.iter().chain(observed.iter()).copied().collect();
                Ok(predict(model, &all, observed.len() as i64, horizon)?.predicted)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub k: usize,
    /// Recommendation hit probability per cluster index.
    pub relevance: Vec<f64>,
    /// Hit probability for users never seen in history.
    pub default_relevance: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig { k: 3, relevance: vec![0.8, 0.75, 0.7], default_relevance: 0.5 }
    }
}

impl SegmentationConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config(format!("{path}.k"), "must be >= 1"));
        }
        if self.relevance.len() != self.k {
            return Err(Error::config(format!("{path}.relevance"), "needs one entry per cluster"));
        }
        let bad = |p: f64| !(0.0..=1.0).contains(&p);
        if self.relevance.iter().copied().any(bad) || bad(self.default_relevance) {
            return Err(Error::config(path, "relevance values must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One row per user: destination shares, mean price, payment-channel shares
/// and booking ratio, min-max scaled.
pub fn user_features(records: &[BehaviorRecord]) -> Result<(Vec<String>, FeatureMatrix)> {
    let raw: Vec<RawRecord> = records.iter().cloned().map(RawRecord::from).collect();
    let (cleaned, _) = clean(&raw);
    let dest_enc = OneHotEncoder { categories: DESTINATIONS.iter().map(|s| s.to_string()).collect() };
    let pay_enc = OneHotEncoder { categories: PAYMENT_CHANNELS.iter().map(|s| s.to_string()).collect() };

    #[derive(Default)]
    struct Acc {
        dest: Vec<f64>,
        dest_n: f64,
        price: f64,
        price_n: f64,
        pay: Vec<f64>,
        pay_n: f64,
        searches: f64,
        books: f64,
    }
    let mut per_user: BTreeMap<String, Acc> = BTreeMap::new();
    for r in cleaned.into_iter().filter_map(RawRecord::into_record) {
        let a = per_user.entry(r.user_id.clone()).or_insert_with(|| Acc {
            dest: vec![0.0; DESTINATIONS.len()],
            pay: vec![0.0; PAYMENT_CHANNELS.len()],
            ..Default::default()
        });
        if let Some(d) = &r.destination {
            for (s, x) in a.dest.iter_mut().zip(dest_enc.encode_one(d)) {
                *s += x;
            }
            a.dest_n += 1.0;
        }
        if let Some(p) = r.price {
            a.price += p;
            a.price_n += 1.0;
        }
        if let Some(c) = &r.payment_channel {
            for (s, x) in a.pay.iter_mut().zip(pay_enc.encode_one(c)) {
                *s += x;
            }
            a.pay_n += 1.0;
        }
        match r.action {
            Action::Search => a.searches += 1.0,
            Action::Book => a.books += 1.0,
            _ => {}
        }
    }
    if per_user.is_empty() {
        return Err(Error::InsufficientData("no usable behavior records".into()));
    }
    let mut names: Vec<String> = DESTINATIONS.iter().map(|d| format!("dest_{d}")).collect();
    names.push("mean_price".into());
    names.extend(PAYMENT_CHANNELS.iter().map(|c| format!("pay_{c}")));
    names.push("book_ratio".into());

    let users: Vec<String> = per_user.keys().cloned().collect();
    let rows: Vec<Vec<f64>> = per_user
        .values()
        .map(|a| {
            let mut row: Vec<f64> = a.dest.iter().map(|x| x / a.dest_n.max(1.0)).collect();
            row.push(a.price / a.price_n.max(1.0));
            row.extend(a.pay.iter().map(|x| x / a.pay_n.max(1.0)));
            row.push(a.books / a.searches.max(1.0));
            row
        })
        .collect();
    let mut m = FeatureMatrix { scaling: vec![None; names.len()], columns: names, rows };
    m.normalize_all(NormMethod::MinMax)?;
    Ok((users, m))
}

#[derive(Clone, Debug)]
pub struct Segmentation {
    pub model: ClusterModel,
    pub user_segment: HashMap<String, usize>,
}

pub fn segment_users(
    records: &[BehaviorRecord],
    cfg: &SegmentationConfig,
    rng: &mut RngStream,
) -> Result<Segmentation> {
    let (users, m) = user_features(records)?;
    let k = cfg.k.min(m.rows.len());
    let model = kmeans_fit(&m.rows, k, rng)?;
    let user_segment = users.into_iter().zip(&m.rows).map(|(u, row)| (u, segment_assign(&model, row))).collect();
    Ok(Segmentation { model, user_segment })
}

impl Segmentation {
    /// Hit probability of a recommendation shown to simulated user `user`.
    pub fn relevance(&self, user: u32, cfg: &SegmentationConfig) -> f64 {
        self.user_segment
            .get(&format!("u{user}"))
            .and_then(|&c| cfg.relevance.get(c).copied())
            .unwrap_or(cfg.default_relevance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_reads_ahead() {
        let mut f = DemandForecaster::oracle(vec![1.0, 2.0, 3.0]);
        assert_eq!(f.forecast(2).unwrap(), vec![1.0, 2.0]);
        f.observe(1.0).unwrap();
        assert_eq!(f.forecast(3).unwrap(), vec![2.0, 3.0, 0.0]);
    }

    #[test]
    fn model_refits_on_schedule() {
        let hist: Vec<f64> = (0..30).map(|i| (i % 5) as f64).collect();
        let params = ForecastParams { period: Some(5), ..Default::default() };
        let mut f = DemandForecaster::trained(hist, ForecasterKind::SeasonalNaive, params, 2).unwrap();
        assert_eq!(f.forecast(1).unwrap(), vec![0.0]);
        f.observe(0.0).unwrap();
        assert_eq!(f.forecast(1).unwrap(), vec![1.0]);
    }

    #[test]
    fn features_are_scaled() {
        let rec = |u: &str, d: &str, p: f64| BehaviorRecord {
            user_id: u.into(),
            timestamp_s: 0.0,
            action: Action::Search,
            destination: Some(d.into()),
            price: Some(p),
            payment_channel: None,
        };
        let (users, m) = user_features(&[rec("a", "domestic", 100.0), rec("b", "holiday", 500.0)]).unwrap();
        assert_eq!(users, vec!["a", "b"]);
        assert!(m.rows.iter().flatten().all(|x| (0.0..=1.0).contains(x)));
    }
}
