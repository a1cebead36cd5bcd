//! Cleaning, scaling, encoding and aggregation of raw behavior data.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::workload::RawRecord;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CleanReport {
    pub dropped_missing: usize,
    pub duplicates_removed: usize,
    pub imputed: usize,
}

fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

/// Drop records missing a required field, impute missing prices with the
/// column median, then remove exact duplicates (first occurrence wins).
pub fn clean(records: &[RawRecord]) -> (Vec<RawRecord>, CleanReport) {
    let mut report = CleanReport::default();
    let mut kept: Vec<RawRecord> = records
        .iter()
        .filter(|r| {
            let ok = r.user_id.is_some() && r.timestamp_s.is_some() && r.action.is_some();
            if !ok {
                report.dropped_missing += 1;
            }
            ok
        })
        .cloned()
        .collect();

    let mut prices: Vec<f64> = kept.iter().filter_map(|r| r.price).collect();
    if let Some(m) = median(&mut prices) {
        for r in kept.iter_mut().filter(|r| r.price.is_none()) {
            r.price = Some(m);
            report.imputed += 1;
        }
    }

    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(kept.len());
    for r in kept {
        let key = (
            r.user_id.clone(),
            r.timestamp_s.map(f64::to_bits),
            r.action,
            r.destination.clone(),
            r.price.map(f64::to_bits),
            r.payment_channel.clone(),
        );
        if seen.insert(key) {
            out.push(r);
        } else {
            report.duplicates_removed += 1;
        }
    }
    (out, report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    MinMax,
    ZScore,
}

/// Affine scaling `(x - offset) / scale`; a zero scale marks a constant column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormMeta {
    pub method: NormMethod,
    pub offset: f64,
    pub scale: f64,
}

impl NormMeta {
    pub fn apply(&self, x: f64) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            (x - self.offset) / self.scale
        }
    }

    pub fn invert(&self, y: f64) -> f64 {
        y * self.scale + self.offset
    }
}

/// Scale a column. Min-max maps onto [0, 1]; z-score uses the population
/// standard deviation. Constant columns map to zeros under both.
pub fn normalize(column: &[f64], method: NormMethod) -> Result<(Vec<f64>, NormMeta)> {
    if column.is_empty() {
        return Err(Error::InvalidArgument("cannot normalize an empty column".into()));
    }
    if column.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("column has non-finite values".into()));
    }
    let (offset, scale) = match method {
        NormMethod::MinMax => {
            let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi - lo)
        }
        NormMethod::ZScore => {
            let n = column.len() as f64;
            let mean = column.iter().sum::<f64>() / n;
            let var = column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        }
    };
    let meta = NormMeta { method, offset, scale };
    Ok((column.iter().map(|&x| meta.apply(x)).collect(), meta))
}

/// Indicator encoding with categories fixed at fit time (sorted).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneHotEncoder {
    pub categories: Vec<String>,
}

impl OneHotEncoder {
    pub fn fit<S: AsRef<str>>(values: &[S]) -> Self {
        let set: BTreeSet<&str> = values.iter().map(AsRef::as_ref).collect();
        OneHotEncoder { categories: set.into_iter().map(str::to_string).collect() }
    }

    pub fn encode_one(&self, value: &str) -> Vec<f64> {
        let mut row = vec![0.0; self.categories.len()];
        match self.categories.iter().position(|c| c == value) {
            Some(i) => row[i] = 1.0,
            None => warn!("unseen category `{value}` encoded as all zeros"),
        }
        row
    }

    /// One column per category, in category order.
    pub fn transform<S: AsRef<str>>(&self, values: &[S]) -> Vec<(String, Vec<f64>)> {
        let mut cols: Vec<(String, Vec<f64>)> =
            self.categories.iter().map(|c| (c.clone(), Vec::with_capacity(values.len()))).collect();
        for v in values {
            for (col, x) in cols.iter_mut().zip(self.encode_one(v.as_ref())) {
                col.1.push(x);
            }
        }
        cols
    }
}

pub fn one_hot<S: AsRef<str>>(values: &[S]) -> Vec<(String, Vec<f64>)> {
    OneHotEncoder::fit(values).transform(values)
}

/// Named numeric columns, all finite, with the scaling applied to each.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub scaling: Vec<Option<NormMeta>>,
}

impl FeatureMatrix {
    pub fn from_columns(cols: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let n = cols.first().map_or(0, |c| c.1.len());
        if cols.iter().any(|c| c.1.len() != n) {
            return Err(Error::InvalidArgument("ragged feature columns".into()));
        }
        if cols.iter().any(|c| c.1.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidArgument("features must be finite".into()));
        }
        let rows = (0..n).map(|i| cols.iter().map(|c| c.1[i]).collect()).collect();
        Ok(FeatureMatrix { scaling: vec![None; cols.len()], columns: cols.into_iter().map(|c| c.0).collect(), rows })
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// Normalize every column in place, recording the metadata.
    pub fn normalize_all(&mut self, method: NormMethod) -> Result<()> {
        if self.rows.is_empty() {
            return Ok(());
        }
        for j in 0..self.columns.len() {
            let (scaled, meta) = normalize(&self.column(j), method)?;
            for (r, x) in self.rows.iter_mut().zip(scaled) {
                r[j] = x;
            }
            self.scaling[j] = Some(meta);
        }
        Ok(())
    }
}

/// Arrivals per interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandSeries {
    pub interval_s: f64,
    pub start_s: f64,
    pub counts: Vec<u64>,
}

impl DemandSeries {
    pub fn values(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let io = |e| Error::io(path, e);
        writeln!(w, "interval_start_s,count").map_err(io)?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{}", self.start_s + i as f64 * self.interval_s, c).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads `interval_start_s,count`; the interval is inferred from the first
    /// two rows, so at least two are required.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, path)
    }

    /// Same format as [`DemandSeries::read_csv`]; `origin` labels errors.
    pub fn parse_csv(text: &str, origin: &Path) -> Result<Self> {
        let path = origin;
        let mut starts = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if i == 0 || line.is_empty() {
                continue;
            }
            let parse_err = |reason: String| Error::Parse { path: path.to_path_buf(), line: i + 1, reason };
            let (a, b) = line.split_once(',').ok_or_else(|| parse_err("expected `interval_start_s,count`".into()))?;
            starts.push(a.trim().parse::<f64>().map_err(|e| parse_err(e.to_string()))?);
            counts.push(b.trim().parse::<u64>().map_err(|e| parse_err(e.to_string()))?);
        }
        if starts.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "{}: need at least two rows to infer the interval",
                path.display()
            )));
        }
        let interval_s = starts[1] - starts[0];
        if !(interval_s > 0.0) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 3,
                reason: "interval starts must increase".into(),
            });
        }
        Ok(DemandSeries { interval_s, start_s: starts[0], counts })
    }
}

/// Count events into half-open bins `[start + i*interval, start + (i+1)*interval)`.
/// With `end` the series spans `[start, end)`; otherwise it stops at the bin
/// holding the last event. Always at least one bin.
pub fn aggregate(times: &[f64], start: f64, interval: f64, end: Option<f64>) -> Result<DemandSeries> {
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(Error::InvalidArgument("interval must be > 0".into()));
    }
    let n = match end {
        Some(e) => (((e - start) / interval).ceil().max(1.0)) as usize,
        None => times
            .iter()
            .filter(|&&t| t >= start)
            .map(|&t| ((t - start) / interval).floor() as usize + 1)
            .max()
            .unwrap_or(1),
    };
    let mut counts = vec![0u64; n];
    for &t in times {
        if t < start {
            continue;
        }
        let i = ((t - start) / interval).floor() as usize;
        if i < n {
            counts[i] += 1;
        }
    }
    Ok(DemandSeries { interval_s: interval, start_s: start, counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::Action;
    use proptest::prelude::*;

    fn raw(u: Option<&str>, t: f64, price: Option<f64>) -> RawRecord {
        RawRecord {
            user_id: u.map(str::to_string),
            timestamp_s: Some(t),
            action: Some(Action::Search),
            destination: Some("domestic".into()),
            price,
            payment_channel: None,
        }
    }

    #[test]
    fn duplicates_collapse() {
        let r = raw(Some("a"), 1.0, Some(5.0));
        let (out, rep) = clean(&[r.clone(), r]);
        assert_eq!(out.len(), 1);
        assert_eq!(rep.duplicates_removed, 1);
    }

    #[test]
    fn missing_user_dropped() {
        let (out, rep) = clean(&[raw(None, 1.0, Some(1.0)), raw(Some("b"), 2.0, Some(1.0))]);
        assert_eq!(out.len(), 1);
        assert_eq!(rep.dropped_missing, 1);
    }

    #[test]
    fn median_imputation() {
        let (out, rep) =
            clean(&[raw(Some("a"), 1.0, Some(1.0)), raw(Some("a"), 2.0, None), raw(Some("a"), 3.0, Some(3.0))]);
        assert_eq!(out[1].price, Some(2.0));
        assert_eq!(rep.imputed, 1);
    }

    #[test]
    fn clean_is_idempotent_with_imputation_collisions() {
        let xs = vec![
            raw(Some("a"), 1.0, Some(2.0)),
            raw(Some("a"), 1.0, None),
            raw(Some("b"), 1.0, Some(1.0)),
            raw(Some("c"), 1.0, Some(3.0)),
            raw(None, 4.0, None),
        ];
        let (once, _) = clean(&xs);
        let (twice, rep) = clean(&once);
        assert_eq!(once, twice);
        assert_eq!(rep, CleanReport::default());
    }

    #[test]
    fn min_max_example() {
        let (y, _) = normalize(&[0.0, 5.0, 10.0], NormMethod::MinMax).unwrap();
        assert_eq!(y, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        for m in [NormMethod::MinMax, NormMethod::ZScore] {
            let (y, meta) = normalize(&[4.0, 4.0, 4.0], m).unwrap();
            assert_eq!(y, vec![0.0; 3]);
            assert_eq!(meta.invert(0.0), 4.0);
        }
    }

    #[test]
    fn z_score_population_sd() {
        let (y, _) = normalize(&[1.0, 2.0, 3.0], NormMethod::ZScore).unwrap();
        let s = (1.5f64).sqrt();
        let expect = [-s, 0.0, s];
        for (a, b) in y.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn one_hot_basic() {
        let cols = one_hot(&["a", "b", "a"]);
        assert_eq!(cols[0], ("a".to_string(), vec![1.0, 0.0, 1.0]));
        assert_eq!(cols[1], ("b".to_string(), vec![0.0, 1.0, 0.0]));
        let single = one_hot(&["x", "x"]);
        assert_eq!(single, vec![("x".to_string(), vec![1.0, 1.0])]);
    }

    #[test]
    fn one_hot_unseen_is_zero_row() {
        let enc = OneHotEncoder::fit(&["a", "b"]);
        assert_eq!(enc.encode_one("z"), vec![0.0, 0.0]);
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[0.5, 1.5, 1.6], 0.0, 1.0, None).unwrap().counts, vec![1, 2]);
        assert_eq!(aggregate(&[], 0.0, 1.0, Some(3.0)).unwrap().counts, vec![0, 0, 0]);
        assert_eq!(aggregate(&[1.0], 0.0, 1.0, None).unwrap().counts, vec![0, 1]);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let s = DemandSeries { interval_s: 60.0, start_s: 0.0, counts: vec![3, 0, 17, 4] };
        s.write_csv(&p).unwrap();
        assert_eq!(DemandSeries::read_csv(&p).unwrap(), s);
    }

    proptest! {
        #[test]
        fn normalization_inverts(xs in prop::collection::vec(-1e6..1e6f64, 1..50), z in any::<bool>()) {
            let m = if z { NormMethod::ZScore } else { NormMethod::MinMax };
            let (ys, meta) = normalize(&xs, m).unwrap();
            for (x, y) in xs.iter().zip(ys) {
                let back = if meta.scale == 0.0 { meta.offset } else { meta.invert(y) };
                prop_assert!((back - x).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }

        #[test]
        fn one_hot_rows_sum_to_one(xs in prop::collection::vec("[a-d]", 1..30)) {
            let cols = one_hot(&xs);
            for i in 0..xs.len() {
                let s: f64 = cols.iter().map(|c| c.1[i]).sum();
                prop_assert_eq!(s, 1.0);
            }
        }
    }
}
