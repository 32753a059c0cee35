//! Label propagation over a window-similarity graph. Labeled nodes are
//! clamped to their one-hot distributions; every other reachable node takes
//! the weight-averaged distribution of its neighbours until nothing moves.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse symmetric weights; `neighbors[i]` lists `(j, w_ij)` with `w_ij > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGraph {
    pub neighbors: Vec<Vec<(usize, f64)>>,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationConfig {
    pub neighbors: usize,
    /// Kernel width; the median pairwise distance of a sample when absent.
    pub bandwidth: Option<f64>,
    pub confidence: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            neighbors: 10,
            bandwidth: None,
            confidence: 0.9,
            tol: 1e-6,
            max_iters: 1000,
        }
    }
}

/// Windows sampled when estimating the bandwidth.
pub const BANDWIDTH_SAMPLE: usize = 500;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median positive pairwise distance over at most [`BANDWIDTH_SAMPLE`]
/// evenly strided rows.
pub fn median_distance(windows: &[f64], width: usize) -> Result<f64> {
    let n = windows.len() / width;
    let stride = n.div_ceil(BANDWIDTH_SAMPLE).max(1);
    let rows: Vec<&[f64]> = windows.chunks_exact(width).step_by(stride).collect();
    let mut d = Vec::with_capacity(rows.len() * rows.len() / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let v = sq_dist(rows[i], rows[j]).sqrt();
            if v > 0.0 {
                d.push(v);
            }
        }
    }
    if d.is_empty() {
        return Err(Error::Data("all windows are identical; similarity is undefined".into()));
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    Ok(*m)
}

impl SimilarityGraph {
    /// Gaussian-kernel k-nearest-neighbour graph over row-major `windows`.
    /// An edge exists when either endpoint lists the other among its `k`
    /// nearest; the weight is then symmetric.
    pub fn build(windows: &[f64], width: usize, bandwidth: Option<f64>, k: usize) -> Result<Self> {
        if width == 0 || windows.len() % width != 0 {
            return Err(Error::Shape("window matrix does not have whole rows".into()));
        }
        if k == 0 {
            return Err(Error::Config("neighbour count must be at least 1".into()));
        }
        let n = windows.len() / width;
        let median = median_distance(windows, width)?;
        let bandwidth = bandwidth.unwrap_or(median);
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Config(format!("bandwidth must be positive, got {bandwidth}")));
        }
        let rows: Vec<&[f64]> = windows.chunks_exact(width).collect();
        let mut knn: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        let mut dists: Vec<(usize, f64)> = Vec::with_capacity(n);
        for i in 0..n {
            dists.clear();
            dists.extend((0..n).filter(|&j| j != i).map(|j| (j, sq_dist(rows[i], rows[j]))));
            let k = k.min(dists.len());
            if k > 0 && k < dists.len() {
                dists.select_nth_unstable_by(k - 1, |a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            }
            knn.push(dists[..k].to_vec());
        }
        let two_h2 = 2.0 * bandwidth * bandwidth;
        let mut neighbors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, list) in knn.iter().enumerate() {
            for &(j, d2) in list {
                let w = (-d2 / two_h2).exp();
                if w > 0.0 {
                    neighbors[i].push((j, w));
                    neighbors[j].push((i, w));
                }
            }
        }
        for list in &mut neighbors {
            list.sort_by_key(|&(j, _)| j);
            list.dedup_by_key(|&mut (j, _)| j);
        }
        Ok(SimilarityGraph { neighbors, bandwidth })
    }

    /// Graph from a dense symmetric weight matrix with a zero diagonal.
    pub fn from_dense(weights: &[Vec<f64>]) -> Result<Self> {
        let n = weights.len();
        let mut neighbors = vec![Vec::new(); n];
        for i in 0..n {
            if weights[i].len() != n {
                return Err(Error::Shape("weight matrix must be square".into()));
            }
            for j in 0..n {
                let w = weights[i][j];
                if !(w >= 0.0) || w != weights[j][i] || (i == j && w != 0.0) {
                    return Err(Error::Argument(format!("invalid weight at ({i}, {j})")));
                }
                if w > 0.0 {
                    neighbors[i].push((j, w));
                }
            }
        }
        Ok(SimilarityGraph {
            neighbors,
            bandwidth: f64::NAN,
        })
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.neighbors[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map_or(0.0, |&(_, w)| w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Propagation {
    /// `(P(normal), P(anomaly))` per node; `None` where no labeled node is
    /// reachable.
    pub probs: Vec<Option<[f64; 2]>>,
    pub iterations: usize,
    /// Largest change in each sweep.
    pub max_changes: Vec<f64>,
}

impl Propagation {
    /// Labels whose winning probability reaches `confidence`; clamped nodes
    /// keep their own label.
    pub fn pseudo_labels(&self, confidence: f64) -> Vec<Option<u8>> {
        self.probs
            .iter()
            .map(|p| {
                p.and_then(|[p0, p1]| {
                    if p1 >= confidence {
                        Some(1)
                    } else if p0 >= confidence {
                        Some(0)
                    } else {
                        None
                    }
                })
            })
            .collect()
    }
}

/// Jacobi iteration of `P_i = Σ_j w_ij P_j / Σ_j w_ij` over unlabeled nodes
/// reachable from a labeled one, with labeled nodes held fixed.
pub fn propagate_labels(
    graph: &SimilarityGraph,
    clamped: &[Option<u8>],
    max_iters: usize,
    tol: f64,
) -> Result<Propagation> {
    let n = graph.len();
    if clamped.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} nodes", clamped.len())));
    }
    if clamped.iter().all(Option::is_none) {
        return Err(Error::Data("label propagation needs at least one labeled node".into()));
    }
    let mut reached = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| clamped[i].is_some()).collect();
    for &i in &queue {
        reached[i] = true;
    }
    while let Some(i) = queue.pop_front() {
        for &(j, _) in &graph.neighbors[i] {
            if !reached[j] {
                reached[j] = true;
                queue.push_back(j);
            }
        }
    }
    // Only P(anomaly) is iterated; P(normal) is its complement.
    let mut p: Vec<f64> = (0..n)
        .map(|i| clamped[i].map_or(0.5, f64::from))
        .collect();
    let free: Vec<usize> = (0..n).filter(|&i| reached[i] && clamped[i].is_none()).collect();
    let mut next = p.clone();
    let mut max_changes = Vec::new();
    let mut iterations = 0;
    while iterations < max_iters && !free.is_empty() {
        let mut change: f64 = 0.0;
        for &i in &free {
            let (num, den) = graph.neighbors[i]
                .iter()
                .fold((0.0, 0.0), |(num, den), &(j, w)| (num + w * p[j], den + w));
            next[i] = num / den;
            change = change.max((next[i] - p[i]).abs());
        }
        std::mem::swap(&mut p, &mut next);
        iterations += 1;
        max_changes.push(change);
        if change < tol {
            break;
        }
    }
    let probs = (0..n)
        .map(|i| reached[i].then(|| [1.0 - p[i], p[i]]))
        .collect();
    Ok(Propagation {
        probs,
        iterations,
        max_changes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_midpoint_is_even() {
        let g = SimilarityGraph::from_dense(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        let out = propagate_labels(&g, &[Some(0), None, Some(1)], 100, 1e-12).unwrap();
        assert_eq!(out.probs[1], Some([0.5, 0.5]));
        assert_eq!(out.pseudo_labels(0.9)[1], None);
    }

    #[test]
    fn fully_labeled_is_unchanged() {
        let g = SimilarityGraph::from_dense(&[vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        let out = propagate_labels(&g, &[Some(1), Some(0)], 100, 1e-9).unwrap();
        assert_eq!(out.probs, vec![Some([0.0, 1.0]), Some([1.0, 0.0])]);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn unreached_component_stays_unlabeled() {
        let g = SimilarityGraph::from_dense(&[
            vec![0.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap();
        let out = propagate_labels(&g, &[Some(1), None, None, None], 100, 1e-9).unwrap();
        assert_eq!(out.probs[1], Some([0.0, 1.0]));
        assert_eq!(out.probs[2], None);
        assert_eq!(out.pseudo_labels(0.9), vec![Some(1), Some(1), None, None]);
    }

    #[test]
    fn no_labels_is_data_error() {
        let g = SimilarityGraph::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(propagate_labels(&g, &[None, None], 10, 1e-6), Err(Error::Data(_))));
    }

    #[test]
    fn knn_graph_properties() {
        let windows = [0.0, 0.0, 0.0, 0.0, 5.0, 5.0, 5.1, 5.0];
        let g = SimilarityGraph::build(&windows, 2, Some(1.0), 1).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
        for i in 0..4 {
            assert_eq!(g.weight(i, i), 0.0);
            for j in 0..4 {
                assert_eq!(g.weight(i, j), g.weight(j, i));
            }
        }
        assert!(g.weight(2, 3) > 0.99);
        let far = SimilarityGraph::build(&[0.0, 1e3], 1, Some(1.0), 1).unwrap();
        assert_eq!(far.weight(0, 1), 0.0);
    }

    #[test]
    fn identical_windows_are_rejected() {
        assert!(matches!(
            SimilarityGraph::build(&[1.0; 12], 3, None, 2),
            Err(Error::Data(_))
        ));
    }
}
