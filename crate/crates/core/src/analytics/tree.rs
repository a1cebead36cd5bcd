//! Depth-limited regression trees (variance-reduction splits).

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    /// Fit on the rows selected by `idx` (repeats allowed).
    pub fn fit(x: &[Vec<f64>], y: &[f64], idx: &[usize], max_depth: usize, min_leaf: usize) -> Self {
        let mut tree = RegressionTree { nodes: Vec::new() };
        let mut idx = idx.to_vec();
        tree.grow(x, y, &mut idx, max_depth, min_leaf.max(1));
        tree
    }

    fn grow(&mut self, x: &[Vec<f64>], y: &[f64], idx: &mut [usize], depth: usize, min_leaf: usize) -> usize {
        let n = idx.len();
        let sum: f64 = idx.iter().map(|&i| y[i]).sum();
        let mean = if n == 0 { 0.0 } else { sum / n as f64 };
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { value: mean });
        if depth == 0 || n < 2 * min_leaf {
            return me;
        }
        let Some((feature, threshold)) = best_split(x, y, idx, min_leaf) else {
            return me;
        };
        let mut k = 0;
        for j in 0..n {
            if x[idx[j]][feature] <= threshold {
                idx.swap(j, k);
                k += 1;
            }
        }
        let (l, r) = idx.split_at_mut(k);
        let left = self.grow(x, y, l, depth - 1, min_leaf);
        let right = self.grow(x, y, r, depth - 1, min_leaf);
        self.nodes[me] = Node::Split { feature, threshold, left, right };
        me
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right }
                }
            }
        }
    }
}

#[allow(clippy::needless_range_loop)]
fn best_split(x: &[Vec<f64>], y: &[f64], idx: &[usize], min_leaf: usize) -> Option<(usize, f64)> {
    let n = idx.len();
    let total: f64 = idx.iter().map(|&i| y[i]).sum();
    let total_sq: f64 = idx.iter().map(|&i| y[i] * y[i]).sum();
    let parent_sse = total_sq - total * total / n as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = idx.to_vec();
    for f in 0..x[idx[0]].len() {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let (mut ls, mut lsq) = (0.0, 0.0);
        for k in 0..n - 1 {
            let v = y[order[k]];
            ls += v;
            lsq += v * v;
            let nl = k + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let (xa, xb) = (x[order[k]][f], x[order[k + 1]][f]);
            if xa == xb {
                continue;
            }
            let rs = total - ls;
            let rsq = total_sq - lsq;
            let sse = (lsq - ls * ls / nl as f64) + (rsq - rs * rs / nr as f64);
            if best.is_none_or(|b| sse < b.0) {
                best = Some((sse, f, 0.5 * (xa + xb)));
            }
        }
    }
    best.filter(|b| b.0 < parent_sse - 1e-12 * parent_sse.abs().max(1.0)).map(|b| (b.1, b.2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_zero_is_mean() {
        let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let y = [1.0, 2.0, 3.0, 4.0, 10.0];
        let t = RegressionTree::fit(&x, &y, &[0, 1, 2, 3, 4], 0, 1);
        assert_eq!(t.predict(&[100.0]), 4.0);
    }

    #[test]
    fn step_function_recovered() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { 5.0 }).collect();
        let idx: Vec<usize> = (0..20).collect();
        let t = RegressionTree::fit(&x, &y, &idx, 3, 1);
        assert_eq!(t.predict(&[3.0]), 1.0);
        assert_eq!(t.predict(&[15.0]), 5.0);
    }
}
