#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use gmf_core::clustering::Partition;
use gmf_core::exact::NodeMarginals;
use gmf_core::models::SigmoidNetSpec;
use gmf_core::rng::SplitMix64;
use gmf_core::FactorGraph;

pub fn random_table(rng: &mut SplitMix64, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.uniform(-scale, scale)).collect()
}

/// Random graph with at most `max_vars` variables of cardinality ≤ `max_card`,
/// factor scopes of size ≤ `max_scope`, and at most `max_states` joint states.
/// About one graph in three carries evidence.
pub fn random_graph(
    rng: &mut SplitMix64,
    max_vars: usize,
    max_card: usize,
    max_scope: usize,
    max_states: usize,
) -> FactorGraph {
    let n = 1 + rng.below(max_vars);
    let mut cards: Vec<usize> = (0..n).map(|_| 1 + rng.below(max_card)).collect();
    while cards.iter().product::<usize>() > max_states {
        let k = rng.below(n);
        cards[k] = (cards[k] - 1).max(1);
    }
    let mut g = FactorGraph::with_cardinalities(&cards).unwrap();
    let num_factors = rng.below(2 * n + 1);
    for _ in 0..num_factors {
        let size = 1 + rng.below(max_scope.min(n));
        let mut vars: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut vars);
        vars.truncate(size);
        let len = vars.iter().map(|&v| cards[v]).product();
        g.add_factor(vars, random_table(rng, len, 2.0)).unwrap();
    }
    if rng.below(3) == 0 {
        for _ in 0..1 + rng.below(n.div_ceil(3)) {
            let v = rng.below(n);
            g.evidence.insert(v, rng.below(cards[v]));
        }
    }
    g
}

/// Random partition of `n` variables into at most `k` nonempty clusters.
pub fn random_partition(rng: &mut SplitMix64, n: usize, k: usize) -> Partition {
    let mut clusters = vec![Vec::new(); k.max(1)];
    for v in 0..n {
        clusters[rng.below(k.max(1))].push(v);
    }
    clusters.retain(|c| !c.is_empty());
    Partition::new(clusters, n).unwrap()
}

/// Random pairwise tree (each node links to an earlier node) with unary
/// factors; returns the graph and its diameter in edges.
pub fn random_tree(rng: &mut SplitMix64, max_nodes: usize, max_card: usize) -> (FactorGraph, usize) {
    let n = 1 + rng.below(max_nodes);
    let cards: Vec<usize> = (0..n).map(|_| 2 + rng.below(max_card - 1)).collect();
    let mut g = FactorGraph::with_cardinalities(&cards).unwrap();
    let mut adj = vec![Vec::new(); n];
    for v in 0..n {
        g.add_factor(vec![v], random_table(rng, cards[v], 1.0)).unwrap();
        if v > 0 {
            let u = rng.below(v);
            adj[u].push(v);
            adj[v].push(u);
            let scope = if rng.below(2) == 0 { vec![u, v] } else { vec![v, u] };
            g.add_factor(scope, random_table(rng, cards[u] * cards[v], 2.0))
                .unwrap();
        }
    }
    let far = |s: usize| -> (usize, usize) {
        let mut dist = vec![usize::MAX; n];
        dist[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &w in &adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    q.push_back(w);
                }
            }
        }
        (0..n).map(|v| (dist[v], v)).max().unwrap()
    };
    let (_, a) = far(0);
    let (d, _) = far(a);
    (g, d)
}

/// Fully connected binary Boltzmann machine with unary `[0, b]` and
/// pairwise `[0, 0, 0, w]`; returns the graph, biases and weight matrix.
#[allow(clippy::needless_range_loop)]
pub fn boltzmann(rng: &mut SplitMix64, n: usize, scale: f64) -> (FactorGraph, Vec<f64>, Vec<Vec<f64>>) {
    let mut g = FactorGraph::with_cardinalities(&vec![2; n]).unwrap();
    let mut w = vec![vec![0.0; n]; n];
    let b: Vec<f64> = (0..n).map(|_| rng.uniform(-scale, scale)).collect();
    for (i, &bi) in b.iter().enumerate() {
        g.add_factor(vec![i], vec![0.0, bi]).unwrap();
    }
    for i in 0..n {
        for j in i + 1..n {
            let t = rng.uniform(-scale, scale);
            w[i][j] = t;
            w[j][i] = t;
            g.add_factor(vec![i, j], vec![0.0, 0.0, 0.0, t]).unwrap();
        }
    }
    (g, b, w)
}

/// Several disconnected random components and the partition aligned with them.
pub fn component_graph(rng: &mut SplitMix64) -> (FactorGraph, Partition) {
    let parts = 2 + rng.below(3);
    let mut cards = Vec::new();
    let mut clusters = Vec::new();
    for _ in 0..parts {
        let size = 1 + rng.below(4);
        clusters.push((cards.len()..cards.len() + size).collect::<Vec<usize>>());
        for _ in 0..size {
            cards.push(2 + rng.below(2));
        }
    }
    let mut g = FactorGraph::with_cardinalities(&cards).unwrap();
    for c in &clusters {
        for _ in 0..2 * c.len() {
            let size = 1 + rng.below(c.len().min(3));
            let mut vars = c.clone();
            rng.shuffle(&mut vars);
            vars.truncate(size);
            let len = vars.iter().map(|&v| cards[v]).product();
            g.add_factor(vars, random_table(rng, len, 2.0)).unwrap();
        }
    }
    let n = cards.len();
    if rng.below(2) == 0 {
        let v = rng.below(n);
        g.evidence.insert(v, rng.below(cards[v]));
    }
    (g, Partition::new(clusters, n).unwrap())
}

/// Small layered sigmoid net with at most 14 nodes.
pub fn small_sigmoid(rng: &mut SplitMix64, seed: u64) -> SigmoidNetSpec {
    let layers = 1 + rng.below(3);
    let mut sizes: Vec<usize> = (0..layers).map(|_| 1 + rng.below(4)).collect();
    let hidden: usize = sizes.iter().sum();
    let observed = if rng.below(2) == 0 {
        Some(1 + rng.below(14 - hidden.min(13)))
    } else {
        None
    };
    if hidden + observed.unwrap_or(0) > 14 {
        sizes.truncate(1);
    }
    SigmoidNetSpec {
        layer_sizes: sizes,
        observed_layer_size: observed,
        weight_range: (0.0, 1.0),
        seed,
    }
}

pub fn max_abs_diff(a: &NodeMarginals, b: &NodeMarginals) -> f64 {
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    a.iter()
        .flat_map(|(v, p)| p.iter().zip(&b[v]).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

pub fn evidence_free(g: &FactorGraph) -> FactorGraph {
    let mut h = g.clone();
    h.evidence = BTreeMap::new();
    h
}
