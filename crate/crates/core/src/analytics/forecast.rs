//! Demand forecasters: seasonal-naive, autoregressive least squares and a
//! bagged regression-tree ensemble.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::RegressionTree;
use crate::engine::RngStream;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForecasterKind {
    SeasonalNaive,
    ArLs,
    TreeEnsemble,
}

impl ForecasterKind {
    pub const ALL: [ForecasterKind; 3] = [Self::SeasonalNaive, Self::ArLs, Self::TreeEnsemble];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SeasonalNaive => "seasonal-naive",
            Self::ArLs => "ar-ls",
            Self::TreeEnsemble => "tree-ensemble",
        }
    }
}

impl std::str::FromStr for ForecasterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown forecaster `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastParams {
    pub lags: usize,
    /// Season length in intervals.
    pub period: Option<usize>,
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForecastParams {
    fn default() -> Self {
        ForecastParams { lags: 3, period: None, trees: 50, max_depth: 4, min_leaf: 1, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum Forecaster {
    SeasonalNaive { period: usize },
    ArLs { intercept: f64, coefficients: Vec<f64>, ridge_lambda: Option<f64> },
    TreeEnsemble { lags: usize, period: Option<usize>, seasonal_lag: bool, trees: Vec<RegressionTree> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Forecast {
    pub horizon: usize,
    pub predicted: Vec<f64>,
    pub model: ForecasterKind,
}

impl Forecaster {
    pub fn kind(&self) -> ForecasterKind {
        match self {
            Forecaster::SeasonalNaive { .. } => ForecasterKind::SeasonalNaive,
            Forecaster::ArLs { .. } => ForecasterKind::ArLs,
            Forecaster::TreeEnsemble { .. } => ForecasterKind::TreeEnsemble,
        }
    }

    /// Shortest history `predict` accepts.
    pub fn min_history(&self) -> usize {
        match self {
            Forecaster::SeasonalNaive { period } => *period,
            Forecaster::ArLs { coefficients, .. } => coefficients.len(),
            Forecaster::TreeEnsemble { lags, period, seasonal_lag, .. } => match (seasonal_lag, period) {
                (true, Some(p)) => (*lags).max(*p),
                _ => *lags,
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn phase(abs_index: i64, period: usize) -> f64 {
    abs_index.rem_euclid(period as i64) as f64 / period as f64
}

/// Lag features for the value at position `t` of `y`, where `y[0]` sits at
/// absolute interval `start_index`.
fn tree_features(
    y: &[f64],
    t: usize,
    start_index: i64,
    lags: usize,
    period: Option<usize>,
    seasonal_lag: bool,
) -> Vec<f64> {
    let mut f: Vec<f64> = (1..=lags).map(|j| y[t - j]).collect();
    if let Some(p) = period {
        f.push(phase(start_index + t as i64, p));
        if seasonal_lag {
            f.push(y[t - p]);
        }
    }
    f
}

fn insufficient(kind: ForecasterKind, need: usize, got: usize) -> Error {
    Error::InsufficientData(format!("{} needs at least {need} points, got {got}", kind.as_str()))
}

/// Fit a forecaster to `y`, whose first value lies at absolute interval
/// `start_index` (used for the seasonal phase feature).
pub fn fit_forecaster(
    y: &[f64],
    start_index: i64,
    kind: ForecasterKind,
    params: &ForecastParams,
) -> Result<Forecaster> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("series must be finite".into()));
    }
    match kind {
        ForecasterKind::SeasonalNaive => {
            let period = params
                .period
                .filter(|&p| p > 0)
                .ok_or_else(|| Error::InvalidArgument("seasonal-naive needs a period".into()))?;
            if y.len() < period {
                return Err(insufficient(kind, period, y.len()));
            }
            Ok(Forecaster::SeasonalNaive { period })
        }
        ForecasterKind::ArLs => fit_ar_ls(y, params.lags),
        ForecasterKind::TreeEnsemble => fit_trees(y, start_index, params),
    }
}

fn fit_ar_ls(y: &[f64], lags: usize) -> Result<Forecaster> {
    if lags == 0 {
        return Err(Error::InvalidArgument("ar-ls needs lags >= 1".into()));
    }
    if y.len() < lags + 2 {
        return Err(insufficient(ForecasterKind::ArLs, lags + 2, y.len()));
    }
    let rows = y.len() - lags;
    let p = lags + 1;
    let x = DMatrix::from_fn(rows, p, |i, j| if j == 0 { 1.0 } else { y[i + lags - j] });
    let target = DVector::from_iterator(rows, y[lags..].iter().copied());
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &target;

    let sv = xtx.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let well_posed = smax > 0.0 && smin / smax > 1e-12;
    let (beta, ridge_lambda) = match well_posed.then(|| xtx.clone().cholesky()).flatten() {
        Some(ch) => (ch.solve(&xty), None),
        None => {
            let lambda = 1e-6 * xtx.trace() / p as f64;
            let lambda = if lambda > 0.0 { lambda } else { 1e-6 };
            let reg = &xtx + DMatrix::identity(p, p) * lambda;
            let beta = reg
                .cholesky()
                .map(|c| c.solve(&xty))
                .ok_or_else(|| Error::InvalidArgument("ridge system not positive definite".into()))?;
            (beta, Some(lambda))
        }
    };
    Ok(Forecaster::ArLs { intercept: beta[0], coefficients: beta.iter().skip(1).copied().collect(), ridge_lambda })
}

fn fit_trees(y: &[f64], start_index: i64, params: &ForecastParams) -> Result<Forecaster> {
    let lags = params.lags;
    if lags == 0 || params.trees == 0 {
        return Err(Error::InvalidArgument("tree-ensemble needs lags >= 1 and trees >= 1".into()));
    }
    if y.len() < 4 * lags {
        return Err(insufficient(ForecasterKind::TreeEnsemble, 4 * lags, y.len()));
    }
    let period = params.period.filter(|&p| p > 0);
    // The seasonal lag only pays off with a few seasons of rows behind it.
    let seasonal_lag = period.is_some_and(|p| y.len() >= 2 * p + 4 * lags);
    let first = match (seasonal_lag, period) {
        (true, Some(p)) => lags.max(p),
        _ => lags,
    };
    let x: Vec<Vec<f64>> =
        (first..y.len()).map(|t| tree_features(y, t, start_index, lags, period, seasonal_lag)).collect();
    let target = &y[first..];
    let n = target.len();
    let all: Vec<usize> = (0..n).collect();
    let mut rng = RngStream::new(params.seed, "tree-ensemble");
    let trees = (0..params.trees)
        .map(|_| {
            // A lone tree sees the full sample; bagging needs at least two.
            let idx: Vec<usize> =
                if params.trees == 1 { all.clone() } else { (0..n).map(|_| rng.random_range(0..n)).collect() };
            RegressionTree::fit(&x, target, &idx, params.max_depth, params.min_leaf)
        })
        .collect();
    Ok(Forecaster::TreeEnsemble { lags, period, seasonal_lag, trees })
}

/// Iterated multi-step forecast from the end of `history`. `next_index` is
/// the absolute interval index of the first predicted step.
pub fn predict(model: &Forecaster, history: &[f64], next_index: i64, horizon: usize) -> Result<Forecast> {
    let need = model.min_history();
    if history.len() < need {
        return Err(insufficient(model.kind(), need, history.len()));
    }
    let mut buf = history.to_vec();
    let base = buf.len();
    let start_index = next_index - base as i64;
    for _ in 0..horizon {
        let t = buf.len();
        let raw = match model {
            Forecaster::SeasonalNaive { period } => buf[t - period],
            Forecaster::ArLs { intercept, coefficients, .. } => {
                intercept + coefficients.iter().enumerate().map(|(j, b)| b * buf[t - 1 - j]).sum::<f64>()
            }
            Forecaster::TreeEnsemble { lags, period, seasonal_lag, trees } => {
                let f = tree_features(&buf, t, start_index, *lags, *period, *seasonal_lag);
                trees.iter().map(|tr| tr.predict(&f)).sum::<f64>() / trees.len() as f64
            }
        };
        buf.push(raw.max(0.0));
    }
    Ok(Forecast { horizon, predicted: buf.split_off(base), model: model.kind() })
}

/// Percentage of predictions within `band * max(actual, 1)` of the actual.
pub fn accuracy(predicted: &[f64], actual: &[f64], band: f64) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::InsufficientData("accuracy of an empty forecast".into()));
    }
    if predicted.len() != actual.len() {
        return Err(Error::InvalidArgument(format!(
            "forecast has {} points, actual {}",
            predicted.len(),
            actual.len()
        )));
    }
    if !(band > 0.0) {
        return Err(Error::InvalidArgument("band must be > 0".into()));
    }
    let correct = predicted.iter().zip(actual).filter(|(p, a)| (*p - *a).abs() <= band * a.max(1.0)).count();
    Ok(100.0 * correct as f64 / predicted.len() as f64)
}

/// Rolling one-step-ahead forecasts over `y[split..]`, refitting every
/// `refit_every` steps on everything seen so far.
pub fn rolling_one_step(
    y: &[f64],
    start_index: i64,
    split: usize,
    kind: ForecasterKind,
    params: &ForecastParams,
    refit_every: usize,
) -> Result<Vec<f64>> {
    let refit_every = refit_every.max(1);
    let mut model = fit_forecaster(&y[..split], start_index, kind, params)?;
    let mut out = Vec::with_capacity(y.len() - split);
    for t in split..y.len() {
        if t > split && (t - split).is_multiple_of(refit_every) {
            model = fit_forecaster(&y[..t], start_index, kind, params)?;
        }
        let f = predict(&model, &y[..t], start_index + t as i64, 1)?;
        out.push(f.predicted[0]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lags: usize) -> ForecastParams {
        ForecastParams { lags, ..Default::default() }
    }

    #[test]
    fn ar_ls_linear_series() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let m = fit_forecaster(&y, 0, ForecasterKind::ArLs, &p(1)).unwrap();
        let f = predict(&m, &y, 5, 3).unwrap();
        for (a, b) in f.predicted.iter().zip([6.0, 7.0, 8.0]) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn ar_ls_constant_series_uses_ridge() {
        let y = [3.0; 10];
        let m = fit_forecaster(&y, 0, ForecasterKind::ArLs, &p(2)).unwrap();
        match &m {
            Forecaster::ArLs { ridge_lambda, .. } => assert!(ridge_lambda.is_some()),
            _ => unreachable!(),
        }
        let f = predict(&m, &y, 10, 1).unwrap();
        assert!((f.predicted[0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn ar_ls_insufficient() {
        let e = fit_forecaster(&[1.0, 2.0], 0, ForecasterKind::ArLs, &p(1));
        assert!(matches!(e, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn seasonal_naive_examples() {
        let params = ForecastParams { period: Some(3), ..Default::default() };
        let y = [10.0, 20.0, 30.0, 10.0, 20.0, 30.0];
        let m = fit_forecaster(&y, 0, ForecasterKind::SeasonalNaive, &params).unwrap();
        assert_eq!(predict(&m, &y, 6, 1).unwrap().predicted, vec![10.0]);

        let m2 = Forecaster::SeasonalNaive { period: 2 };
        assert_eq!(predict(&m2, &[1.0, 4.0, 9.0], 3, 4).unwrap().predicted, vec![4.0, 9.0, 4.0, 9.0]);
    }

    #[test]
    fn single_stump_predicts_mean() {
        let params = ForecastParams { lags: 1, trees: 1, max_depth: 0, ..Default::default() };
        let y = [2.0, 9.0, 4.0, 7.0, 1.0, 6.0];
        let m = fit_forecaster(&y, 0, ForecasterKind::TreeEnsemble, &params).unwrap();
        let mean = y[1..].iter().sum::<f64>() / 5.0;
        let f = predict(&m, &y, 6, 1).unwrap();
        assert!((f.predicted[0] - mean).abs() < 1e-12);
    }

    #[test]
    fn accuracy_band_rule() {
        assert_eq!(accuracy(&[12.0], &[10.0], 0.2).unwrap(), 100.0);
        assert_eq!(accuracy(&[12.5], &[10.0], 0.2).unwrap(), 0.0);
        let pred: Vec<f64> = (0..100).map(|i| if i < 92 { 10.0 } else { 50.0 }).collect();
        assert_eq!(accuracy(&pred, &[10.0; 100], 0.2).unwrap(), 92.0);
        assert!(accuracy(&[], &[], 0.2).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let y: Vec<f64> = (0..40).map(|i| (i % 7) as f64 * 3.0).collect();
        let params = ForecastParams { period: Some(7), trees: 5, ..Default::default() };
        for kind in ForecasterKind::ALL {
            let m = fit_forecaster(&y, 0, kind, &params).unwrap();
            let back = Forecaster::from_json(&m.to_json().unwrap()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn seasonal_naive_perfect_on_periodic() {
        let y: Vec<f64> = (0..60).map(|i| [5.0, 50.0, 20.0, 8.0][i % 4]).collect();
        let params = ForecastParams { period: Some(4), ..Default::default() };
        let preds = rolling_one_step(&y, 0, 20, ForecasterKind::SeasonalNaive, &params, 5).unwrap();
        assert_eq!(accuracy(&preds, &y[20..], 0.2).unwrap(), 100.0);
    }

    proptest! {
        #[test]
        fn ar_ls_residual_orthogonal(y in prop::collection::vec(0.0..100.0f64, 12..40), lags in 1usize..4) {
            let m = fit_forecaster(&y, 0, ForecasterKind::ArLs, &p(lags)).unwrap();
            let Forecaster::ArLs { intercept, coefficients, ridge_lambda } = m else { unreachable!() };
            prop_assume!(ridge_lambda.is_none());
            let resid: Vec<f64> = (lags..y.len())
                .map(|t| y[t] - intercept - (0..lags).map(|j| coefficients[j] * y[t - 1 - j]).sum::<f64>())
                .collect();
            let scale: f64 = y.iter().map(|v| v * v).sum::<f64>().max(1.0);
            let dot0: f64 = resid.iter().sum();
            prop_assert!(dot0.abs() < 1e-6 * scale.sqrt() * (y.len() as f64));
            for j in 0..lags {
                let d: f64 = (lags..y.len()).map(|t| resid[t - lags] * y[t - 1 - j]).sum();
                prop_assert!(d.abs() < 1e-6 * scale, "lag {} dot {}", j + 1, d);
            }
        }

        #[test]
        fn trees_stay_within_target_range(y in prop::collection::vec(0.0..500.0f64, 16..60), seed in 0u64..1000) {
            let params = ForecastParams { lags: 3, period: Some(5), trees: 8, seed, ..Default::default() };
            let m = fit_forecaster(&y, 0, ForecasterKind::TreeEnsemble, &params).unwrap();
            let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let f = predict(&m, &y, y.len() as i64, 10).unwrap();
            for v in f.predicted {
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn bagging_training_error_non_increasing() {
        let y: Vec<f64> = (0..150).map(|i| 50.0 + 30.0 * ((i as f64) * 0.3).sin() + ((i * 37) % 11) as f64).collect();
        let mse = |b: usize| {
            (0..10)
                .map(|seed| {
                    let params = ForecastParams { lags: 3, trees: b, seed, ..Default::default() };
                    let m = fit_forecaster(&y, 0, ForecasterKind::TreeEnsemble, &params).unwrap();
                    let Forecaster::TreeEnsemble { trees, .. } = &m else { unreachable!() };
                    (3..y.len())
                        .map(|t| {
                            let f = tree_features(&y, t, 0, 3, None, false);
                            let p = trees.iter().map(|tr| tr.predict(&f)).sum::<f64>() / trees.len() as f64;
                            (p - y[t]).powi(2)
                        })
                        .sum::<f64>()
                })
                .sum::<f64>()
                / 10.0
        };
        let errs: Vec<f64> = [2, 5, 20, 50].into_iter().map(mse).collect();
        for w in errs.windows(2) {
            assert!(w[1] <= w[0], "{errs:?}");
        }
    }
}
