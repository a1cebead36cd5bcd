//! Rolling median/MAD spike detection.

use crate::{Error, Result};

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Flags `x[i]` when it deviates from the median of the preceding `window`
/// values by more than `threshold * max(MAD, 1)`. The first `window` points
/// have no context and are never flagged.
pub fn detect_spike(series: &[f64], window: usize, threshold: f64) -> Result<Vec<bool>> {
    if window < 3 {
        return Err(Error::InvalidArgument("spike window must be >= 3".into()));
    }
    Ok((0..series.len())
        .map(|i| {
            if i < window {
                return false;
            }
            let mut w = series[i - window..i].to_vec();
            let med = median(&mut w);
            let mut dev: Vec<f64> = w.iter().map(|x| (x - med).abs()).collect();
            let mad = median(&mut dev);
            (series[i] - med).abs() > threshold * mad.max(1.0)
        })
        .collect())
}
