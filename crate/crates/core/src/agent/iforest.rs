//! Isolation forest, used only to pick heuristic actions during warm-up.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        /// Arena indices; `x[feature] < threshold` goes left.
        left: usize,
        right: usize,
    },
    Leaf {
        size: usize,
    },
}

/// One isolation tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    pub nodes: Vec<Node>,
}

impl IsolationTree {
    /// Edges from the root to the leaf holding `x`, plus `c(size)` for the
    /// points the leaf did not separate.
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[feature] < threshold { left } else { right };
                    depth += 1.0;
                }
                Node::Leaf { size } => return depth + average_path_length(size),
            }
        }
    }

    /// Longest root-to-leaf edge count.
    pub fn height(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    pub trees: Vec<IsolationTree>,
    pub subsample_size: usize,
    pub width: usize,
}

/// Average unsuccessful-search path length in a binary search tree of `n`
/// points: `2H(n−1) − 2(n−1)/n`, zero for `n ≤ 1`.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let m = (n - 1) as f64;
    2.0 * harmonic(n - 1) - 2.0 * m / n as f64
}

fn harmonic(n: usize) -> f64 {
    // Exact summation is cheap at these sizes and keeps c(2) = 1 exact.
    if n <= 4096 {
        return (1..=n).rev().map(|k| 1.0 / k as f64).sum();
    }
    let n = n as f64;
    n.ln() + 0.577_215_664_901_532_9 + 1.0 / (2.0 * n) - 1.0 / (12.0 * n * n)
}

/// Fits `num_trees` trees on subsamples of the rows of `states`
/// (row-major, `width` columns).
pub fn fit_isolation_forest(
    states: &[f64],
    width: usize,
    num_trees: usize,
    subsample_size: usize,
    seed: u64,
) -> Result<IsolationForest> {
    if width == 0 || states.len() % width != 0 {
        return Err(Error::Shape(format!(
            "{} values do not form rows of width {width}",
            states.len()
        )));
    }
    let rows = states.len() / width;
    if subsample_size < 2 || rows < subsample_size {
        return Err(Error::Data(format!(
            "isolation forest needs at least {} states (subsample size, min 2), got {rows}",
            subsample_size.max(2)
        )));
    }
    if num_trees == 0 {
        return Err(Error::Config("isolation forest needs at least one tree".into()));
    }
    let height_limit = (subsample_size as f64).log2().ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trees = (0..num_trees)
        .map(|_| {
            let idx = sample(&mut rng, rows, subsample_size).into_vec();
            let mut tree = IsolationTree { nodes: Vec::new() };
            grow(&mut tree, states, width, idx, 0, height_limit, &mut rng);
            tree
        })
        .collect();
    Ok(IsolationForest {
        trees,
        subsample_size,
        width,
    })
}

fn grow(
    tree: &mut IsolationTree,
    states: &[f64],
    width: usize,
    rows: Vec<usize>,
    depth: usize,
    limit: usize,
    rng: &mut impl Rng,
) -> usize {
    let id = tree.nodes.len();
    tree.nodes.push(Node::Leaf { size: rows.len() });
    if depth >= limit || rows.len() <= 1 {
        return id;
    }
    let range = |f: usize| {
        rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
            let v = states[r * width + f];
            (lo.min(v), hi.max(v))
        })
    };
    let splittable: Vec<(usize, f64, f64)> = (0..width)
        .filter_map(|f| {
            let (lo, hi) = range(f);
            (hi > lo).then_some((f, lo, hi))
        })
        .collect();
    if splittable.is_empty() {
        return id;
    }
    let (feature, lo, hi) = splittable[rng.random_range(0..splittable.len())];
    let mut threshold = rng.random_range(lo..hi);
    if threshold <= lo {
        // Keep at least one point on each side.
        threshold = (lo + hi) / 2.0;
    }
    let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| states[i * width + feature] < threshold);
    let left = grow(tree, states, width, l, depth + 1, limit, rng);
    let right = grow(tree, states, width, r, depth + 1, limit, rng);
    tree.nodes[id] = Node::Split {
        feature,
        threshold,
        left,
        right,
    };
    id
}

impl IsolationForest {
    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// `2^(−E[h(x)] / c(ψ))`, in (0, 1).
    pub fn score(&self, x: &[f64]) -> f64 {
        2f64.powf(-self.mean_path_length(x) / average_path_length(self.subsample_size))
    }

    pub fn score_all(&self, states: &[f64]) -> Vec<f64> {
        states.chunks_exact(self.width).map(|x| self.score(x)).collect()
    }
}

/// Indices of the `m` highest scores, highest first; ties by index.
pub fn top_outliers(scores: &[f64], m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(m);
    order
}
