//! k-means with k-means++ seeding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::RngStream;
use crate::{Error, Result};

const MAX_ITER: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Index of the nearest centroid; lowest index wins ties.
pub fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(c, p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

pub fn segment_assign(model: &ClusterModel, point: &[f64]) -> usize {
    nearest(&model.centroids, point).0
}

/// Sum of squared distances from each point to its nearest centroid.
pub fn inertia(centroids: &[Vec<f64>], points: &[Vec<f64>]) -> f64 {
    points.iter().map(|p| nearest(centroids, p).1).sum()
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.open01() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

pub fn kmeans_fit(points: &[Vec<f64>], k: usize, rng: &mut RngStream) -> Result<ClusterModel> {
    if k < 1 || k > points.len() {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in [1, {}]", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|x| !x.is_finite())) {
        return Err(Error::InvalidArgument("points must be finite and of equal dimension".into()));
    }
    let mut centroids = seed_plus_plus(points, k, rng);
    let mut assign = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut total = 0.0;
        for (a, p) in assign.iter_mut().zip(points) {
            let (c, d) = nearest(&centroids, p);
            total += d;
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        history.push(total);
        if !changed || iterations == MAX_ITER {
            break;
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(points) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .max_by(|&i, &j| {
                        let di = nearest(&centroids, &points[i]).1;
                        let dj = nearest(&centroids, &points[j]).1;
                        di.total_cmp(&dj).then(j.cmp(&i))
                    })
                    .expect("non-empty");
                centroids[c] = points[far].clone();
            }
        }
    }
    Ok(ClusterModel { k, inertia: inertia(&centroids, points), centroids, iterations, inertia_history: history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn four() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 10.0], vec![10.0, 11.0]]
    }

    #[test]
    fn k1_is_mean() {
        let mut rng = RngStream::new(1, "km");
        let m = kmeans_fit(&four(), 1, &mut rng).unwrap();
        assert_eq!(m.centroids[0], vec![5.0, 5.5]);
    }

    #[test]
    fn four_point_example() {
        for seed in 0..20 {
            let mut rng = RngStream::new(seed, "km");
            let m = kmeans_fit(&four(), 2, &mut rng).unwrap();
            let mut c = m.centroids.clone();
            c.sort_by(|a, b| a[0].total_cmp(&b[0]));
            assert_eq!(c, vec![vec![0.0, 0.5], vec![10.0, 10.5]]);
            assert_eq!(m.inertia, 1.0);
            let far = segment_assign(&m, &[9.0, 9.0]);
            assert_eq!(m.centroids[far], vec![10.0, 10.5]);
        }
    }

    #[test]
    fn k_equals_n_zero_inertia() {
        let mut rng = RngStream::new(3, "km");
        assert_eq!(kmeans_fit(&four(), 4, &mut rng).unwrap().inertia, 0.0);
    }

    #[test]
    fn bad_k() {
        let mut rng = RngStream::new(3, "km");
        assert!(kmeans_fit(&four(), 0, &mut rng).is_err());
        assert!(kmeans_fit(&four(), 5, &mut rng).is_err());
    }

    #[test]
    fn tie_goes_to_lower_index() {
        let m = ClusterModel {
            k: 2,
            centroids: vec![vec![0.0], vec![2.0]],
            inertia: 0.0,
            iterations: 0,
            inertia_history: vec![],
        };
        assert_eq!(segment_assign(&m, &[1.0]), 0);
        assert_eq!(segment_assign(&m, &[2.0]), 1);
    }

    proptest! {
        #[test]
        fn inertia_non_increasing(pts in prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 2), 6..60), k in 1usize..5, seed in 0u64..500) {
            let mut rng = RngStream::new(seed, "km");
            let m = kmeans_fit(&pts, k, &mut rng).unwrap();
            for w in m.inertia_history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-9);
            }
            // Within-cluster SS of any partition is bounded by the total SS.
            let n = pts.len() as f64;
            let mean = [pts.iter().map(|p| p[0]).sum::<f64>() / n, pts.iter().map(|p| p[1]).sum::<f64>() / n];
            let total: f64 = pts.iter().map(|p| dist2(p, &mean)).sum();
            prop_assert!(m.inertia <= total * (1.0 + 1e-12) + 1e-9);
            // Lloyd fixed point: every centroid is the mean of the points nearest to it.
            let mut sums = vec![[0.0; 2]; k];
            let mut counts = vec![0usize; k];
            for p in &pts {
                let (c, _) = nearest(&m.centroids, p);
                counts[c] += 1;
                sums[c][0] += p[0];
                sums[c][1] += p[1];
            }
            for c in 0..k {
                if counts[c] > 0 {
                    let cen = &m.centroids[c];
                    let cnt = counts[c] as f64;
                    prop_assert!((cen[0] - sums[c][0] / cnt).abs() < 1e-6 && (cen[1] - sums[c][1] / cnt).abs() < 1e-6);
                }
            }
        }
    }
}
