//! Closed forms checked against brute force, quadrature and dense solves.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsad_core::active::{margin, propagate_labels, smallest_margins, SimilarityGraph};
use tsad_core::agent::{average_path_length, fit_isolation_forest, Node};
use tsad_core::vae::kl_divergence;

/// Simpson's rule for `∫ q log(q/p)` with `q = N(μ, σ²)`, `p = N(0, 1)`.
fn kl_quadrature(mu: f64, log_var: f64) -> f64 {
    let sigma = (0.5 * log_var).exp();
    let (lo, hi) = (mu - 14.0 * sigma, mu + 14.0 * sigma);
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let f = |x: f64| {
        let log_q = -0.5 * ln2pi - 0.5 * log_var - 0.5 * ((x - mu) / sigma).powi(2);
        let log_p = -0.5 * ln2pi - 0.5 * x * x;
        log_q.exp() * (log_q - log_p)
    };
    let mut sum = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(lo + i as f64 * h);
    }
    sum * h / 3.0
}

#[test]
fn kl_matches_numerical_integration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let dims = rng.random_range(1..=3);
        let mu: Vec<f64> = (0..dims).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lv: Vec<f64> = (0..dims).map(|_| rng.random_range(-2.0..1.5)).collect();
        // Independent dimensions add.
        let numeric: f64 = mu.iter().zip(&lv).map(|(&m, &l)| kl_quadrature(m, l)).sum();
        let closed = kl_divergence(&mu, &lv);
        assert!((closed - numeric).abs() < 1e-4, "{mu:?} {lv:?}: {closed} vs {numeric}");
    }
}

#[test]
fn kl_is_non_negative_and_zero_at_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10_000 {
        let mu = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let lv = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        assert!(kl_divergence(&mu, &lv) >= 0.0);
    }
    assert_eq!(kl_divergence(&[0.0; 4], &[0.0; 4]), 0.0);
}

#[test]
fn margin_selection_matches_full_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for pool in 0..200 {
        let n = rng.random_range(1..=1000);
        let k = rng.random_range(0..=n);
        // Coarse values force plenty of ties.
        let mut scored: Vec<(usize, f64)> = (0..n)
            .map(|i| {
                let q = [rng.random_range(0..20) as f64 * 0.5, rng.random_range(0..20) as f64 * 0.5];
                (i * 3 + 7, margin(q))
            })
            .collect();
        scored.shuffle(&mut rng);
        let mut brute = scored.clone();
        brute.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        let expected: Vec<usize> = brute[..k].iter().map(|p| p.0).collect();
        assert_eq!(smallest_margins(scored, k).unwrap(), expected, "pool {pool}");
    }
}

#[test]
fn margin_overdraw_is_an_error() {
    assert!(smallest_margins(vec![(0, 1.0)], 2).is_err());
}

fn random_graph(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rng.random_range(2..=30);
    let density = rng.random_range(0.1..0.6);
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                let v = rng.random_range(0.05..2.0);
                w[i][j] = v;
                w[j][i] = v;
            }
        }
    }
    w
}

/// Harmonic solution `L_UU p_U = W_UL y_L` restricted to the component
/// reachable from labeled nodes.
fn dense_solution(w: &[Vec<f64>], labels: &[Option<u8>]) -> Vec<Option<f64>> {
    let n = w.len();
    let mut reach = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&i| labels[i].is_some()).collect();
    stack.iter().for_each(|&i| reach[i] = true);
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if w[i][j] > 0.0 && !reach[j] {
                reach[j] = true;
                stack.push(j);
            }
        }
    }
    let free: Vec<usize> = (0..n).filter(|&i| reach[i] && labels[i].is_none()).collect();
    let mut out: Vec<Option<f64>> = (0..n).map(|i| labels[i].map(f64::from)).collect();
    if free.is_empty() {
        return out;
    }
    let m = free.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (r, &i) in free.iter().enumerate() {
        a[(r, r)] = w[i].iter().sum();
        for (c, &j) in free.iter().enumerate() {
            a[(r, c)] -= w[i][j];
        }
        for j in 0..n {
            if let Some(y) = labels[j] {
                b[r] += w[i][j] * f64::from(y);
            }
        }
    }
    let p = a.lu().solve(&b).expect("reachable block is nonsingular");
    for (r, &i) in free.iter().enumerate() {
        out[i] = Some(p[r]);
    }
    out
}

#[test]
fn propagation_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for g in 0..50 {
        let w = random_graph(&mut rng);
        let n = w.len();
        let mut labels: Vec<Option<u8>> = vec![None; n];
        let labeled = rng.random_range(1..=n.div_ceil(3));
        for i in rand::seq::index::sample(&mut rng, n, labeled) {
            labels[i] = Some(rng.random_range(0..=1));
        }
        let graph = SimilarityGraph::from_dense(&w).unwrap();
        let result = propagate_labels(&graph, &labels, 200_000, 1e-13).unwrap();
        let expected = dense_solution(&w, &labels);
        for i in 0..n {
            match (result.probs[i], expected[i]) {
                (None, None) => {}
                (Some([p0, p1]), Some(e)) => {
                    assert!((p1 - e).abs() < 1e-6, "graph {g} node {i}: {p1} vs {e}");
                    assert!((p0 + p1 - 1.0).abs() < 1e-12);
                }
                other => panic!("graph {g} node {i}: reachability differs {other:?}"),
            }
        }
    }
}

#[test]
fn propagation_sweeps_shrink() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..20 {
        let w = random_graph(&mut rng);
        let mut labels = vec![None; w.len()];
        labels[0] = Some(1);
        labels[w.len() - 1] = Some(0);
        let r = propagate_labels(&SimilarityGraph::from_dense(&w).unwrap(), &labels, 500, 0.0).unwrap();
        // Jacobi on a weighted average is a sup-norm contraction.
        for pair in r.max_changes.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-15, "{pair:?}");
        }
    }
}

#[test]
fn path_length_normaliser_matches_harmonic_sum() {
    assert_eq!(average_path_length(1), 0.0);
    assert_eq!(average_path_length(2), 1.0);
    for n in [3usize, 10, 256, 4096] {
        let h: f64 = (1..n).map(|i| 1.0 / i as f64).sum();
        let c = 2.0 * h - 2.0 * (n as f64 - 1.0) / n as f64;
        assert!((average_path_length(n) - c).abs() < 1e-9, "n={n}");
    }
}

/// Depth of `x` found by walking the arena with explicit bounds rather than
/// through the tree's own traversal.
fn depth_by_bounds(nodes: &[Node], x: &[f64]) -> f64 {
    fn walk(nodes: &[Node], i: usize, x: &[f64], depth: usize) -> Option<f64> {
        match nodes[i] {
            Node::Leaf { size } => Some(depth as f64 + average_path_length(size)),
            Node::Split { feature, threshold, left, right } => {
                let l = walk(nodes, left, x, depth + 1).filter(|_| x[feature] < threshold);
                let r = walk(nodes, right, x, depth + 1).filter(|_| x[feature] >= threshold);
                l.or(r)
            }
        }
    }
    walk(nodes, 0, x, 0).expect("every point lands in one leaf")
}

#[test]
fn isolated_point_scores_highest() {
    let mut wins = 0;
    for run in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(run);
        let mut flat = Vec::new();
        for _ in 0..500 {
            flat.push(rng.random_range(-1.0..1.0));
            flat.push(rng.random_range(-1.0..1.0));
        }
        flat.extend([8.0, -8.0]);
        let forest = fit_isolation_forest(&flat, 2, 100, 256, run + 1000).unwrap();
        let scores = forest.score_all(&flat);
        let best = (0..scores.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
        if best == 500 {
            wins += 1;
        }
        if run < 5 {
            for tree in &forest.trees {
                assert!(tree.height() <= 8);
                for row in flat.chunks(2).take(50) {
                    assert_eq!(tree.path_length(row), depth_by_bounds(&tree.nodes, row));
                }
            }
            let x = &flat[..2];
            let mean: f64 = forest.trees.iter().map(|t| depth_by_bounds(&t.nodes, x)).sum::<f64>() / 100.0;
            let expected = 2f64.powf(-mean / average_path_length(256));
            assert!((forest.score(x) - expected).abs() < 1e-12);
        }
    }
    assert!(wins >= 95, "outlier ranked first in {wins}/100 runs");
}
