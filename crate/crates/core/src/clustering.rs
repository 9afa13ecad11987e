//! Disjoint variable clusterings and the border structure they induce.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_graph::{Conditioned, FactorGraph};
use crate::rng::SplitMix64;

/// A disjoint, exhaustive grouping of variable ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    clusters: Vec<Vec<usize>>,
    cluster_of: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct PartitionFile {
    clusters: Vec<Vec<usize>>,
}

impl Partition {
    /// Validate that `clusters` are nonempty, disjoint and cover `0..num_vars`.
    /// Members are stored sorted; cluster order is kept.
    pub fn new(clusters: Vec<Vec<usize>>, num_vars: usize) -> Result<Self> {
        if clusters.is_empty() && num_vars > 0 {
            return Err(Error::domain("partition has no clusters"));
        }
        let mut cluster_of = vec![usize::MAX; num_vars];
        let mut sorted = Vec::with_capacity(clusters.len());
        for (i, mut c) in clusters.into_iter().enumerate() {
            if c.is_empty() {
                return Err(Error::domain(format!("cluster {i} is empty")));
            }
            c.sort_unstable();
            for &v in &c {
                if v >= num_vars {
                    return Err(Error::domain(format!("cluster {i} names unknown variable {v}")));
                }
                if cluster_of[v] != usize::MAX {
                    return Err(Error::domain(format!("variable {v} appears in more than one cluster")));
                }
                cluster_of[v] = i;
            }
            sorted.push(c);
        }
        if let Some(v) = cluster_of.iter().position(|&c| c == usize::MAX) {
            return Err(Error::domain(format!("variable {v} is not covered by the partition")));
        }
        Ok(Partition {
            clusters: sorted,
            cluster_of,
        })
    }

    pub fn singletons(num_vars: usize) -> Self {
        Partition::new((0..num_vars).map(|v| vec![v]).collect(), num_vars).unwrap()
    }

    pub fn single(num_vars: usize) -> Self {
        Partition::new(vec![(0..num_vars).collect()], num_vars).unwrap()
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn num_variables(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn cluster_of(&self, var: usize) -> usize {
        self.cluster_of[var]
    }

    /// The partition induced on the hidden variables of a conditioned
    /// graph, in conditioned ids. Clusters left without hidden members are
    /// dropped; the second value maps new cluster index → original index.
    pub fn restrict(&self, cond: &Conditioned) -> Result<(Partition, Vec<usize>)> {
        let local = cond.local_ids(self.num_variables());
        let mut clusters = Vec::new();
        let mut origin = Vec::new();
        for (i, c) in self.clusters.iter().enumerate() {
            let hidden: Vec<usize> = c.iter().filter_map(|&v| local[v]).collect();
            if !hidden.is_empty() {
                clusters.push(hidden);
                origin.push(i);
            }
        }
        Ok((Partition::new(clusters, cond.hidden.len())?, origin))
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(&PartitionFile {
            clusters: self.clusters.clone(),
        })?)
    }

    pub fn from_json_str(s: &str, num_vars: usize) -> Result<Self> {
        let f: PartitionFile = serde_json::from_str(s)?;
        Partition::new(f.clusters, num_vars)
    }

    pub fn load(path: impl AsRef<Path>, num_vars: usize) -> Result<Self> {
        Partition::from_json_str(&std::fs::read_to_string(path)?, num_vars)
    }
}

/// Border structure of a partition over a factor graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTopology {
    /// Per cluster: factors intersecting but not contained in it (B_i).
    pub border_cliques: Vec<Vec<usize>>,
    /// Per cluster: factors whose scope lies inside it.
    pub interior_cliques: Vec<Vec<usize>>,
    /// Per cluster: outside variables sharing a factor with it (MB_i).
    pub markov_blanket: Vec<Vec<usize>>,
    /// Per cluster: other clusters sharing a border factor (N_i).
    pub neighbor_clusters: Vec<Vec<usize>>,
    /// Per factor: clusters its scope intersects (I_β), ascending.
    pub participants: Vec<Vec<usize>>,
    /// Per cluster: members lying in some border factor scope.
    pub border_nodes: Vec<Vec<usize>>,
    /// Per cluster: members touched by no border factor.
    pub interior_nodes: Vec<Vec<usize>>,
}

pub fn derive_topology(graph: &FactorGraph, partition: &Partition) -> Result<ClusterTopology> {
    if partition.num_variables() != graph.num_variables() {
        return Err(Error::domain(format!(
            "partition covers {} variables but the graph has {}",
            partition.num_variables(),
            graph.num_variables()
        )));
    }
    let k = partition.len();
    let mut border_cliques = vec![Vec::new(); k];
    let mut interior_cliques = vec![Vec::new(); k];
    let mut blanket = vec![BTreeSet::new(); k];
    let mut neighbors = vec![BTreeSet::new(); k];
    let mut border_set = vec![BTreeSet::new(); k];
    let mut participants = Vec::with_capacity(graph.factors.len());
    for (idx, f) in graph.factors.iter().enumerate() {
        let part: BTreeSet<usize> = f.scope.iter().map(|&v| partition.cluster_of(v)).collect();
        if part.len() == 1 {
            interior_cliques[*part.first().unwrap()].push(idx);
        } else {
            for &i in &part {
                border_cliques[i].push(idx);
                for &v in &f.scope {
                    if partition.cluster_of(v) == i {
                        border_set[i].insert(v);
                    } else {
                        blanket[i].insert(v);
                    }
                }
                neighbors[i].extend(part.iter().copied().filter(|&j| j != i));
            }
        }
        participants.push(part.into_iter().collect());
    }
    let interior_nodes = partition
        .clusters()
        .iter()
        .zip(&border_set)
        .map(|(c, b)| c.iter().copied().filter(|v| !b.contains(v)).collect())
        .collect();
    Ok(ClusterTopology {
        border_cliques,
        interior_cliques,
        markov_blanket: blanket.into_iter().map(|s| s.into_iter().collect()).collect(),
        neighbor_clusters: neighbors.into_iter().map(|s| s.into_iter().collect()).collect(),
        participants,
        border_nodes: border_set.into_iter().map(|s| s.into_iter().collect()).collect(),
        interior_nodes,
    })
}

/// Row-major tiling of an `height × width` grid (ids `r * width + c`) into
/// `block_h × block_w` blocks; edge blocks may be smaller.
pub fn grid_blocks(height: usize, width: usize, block_h: usize, block_w: usize) -> Result<Partition> {
    if block_h == 0 || block_w == 0 {
        return Err(Error::domain("block dimensions must be at least 1"));
    }
    let mut clusters = Vec::new();
    for br in (0..height).step_by(block_h) {
        for bc in (0..width).step_by(block_w) {
            let mut c = Vec::new();
            for r in br..(br + block_h).min(height) {
                for col in bc..(bc + block_w).min(width) {
                    c.push(r * width + col);
                }
            }
            clusters.push(c);
        }
    }
    Partition::new(clusters, height * width)
}

/// One cluster per layer, layers numbered consecutively.
pub fn layer_rows(layer_sizes: &[usize]) -> Result<Partition> {
    let mut clusters = Vec::new();
    let mut next = 0;
    for &s in layer_sizes {
        clusters.push((next..next + s).collect());
        next += s;
    }
    Partition::new(clusters, next)
}

/// Consecutive groups of `chains_per_cluster` chains (the last group may be
/// smaller); chain `m` owns ids `m * nodes_of_chain .. (m + 1) * nodes_of_chain`.
pub fn chain_groups(num_chains: usize, chains_per_cluster: usize, nodes_of_chain: usize) -> Result<Partition> {
    if chains_per_cluster == 0 {
        return Err(Error::domain("chains_per_cluster must be at least 1"));
    }
    let clusters = (0..num_chains)
        .step_by(chains_per_cluster)
        .map(|first| {
            let last = (first + chains_per_cluster).min(num_chains);
            (first * nodes_of_chain..last * nodes_of_chain).collect()
        })
        .collect();
    Partition::new(clusters, num_chains * nodes_of_chain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutObjective {
    MinCut,
    MaxCut,
}

/// Symmetric interaction weights: for each factor, the spread of its finite
/// log-table entries is added to every pair in its scope. A pairwise Ising
/// factor `[0, 0, 0, θ]` contributes `|θ|`.
pub fn interaction_weights(graph: &FactorGraph) -> Vec<Vec<f64>> {
    let n = graph.num_variables();
    let mut w = vec![vec![0.0; n]; n];
    for f in &graph.factors {
        if f.scope.len() < 2 {
            continue;
        }
        let finite = f.log_table.iter().copied().filter(|x| x.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        let spread = if hi >= lo { hi - lo } else { 0.0 };
        for &u in &f.scope {
            for &v in &f.scope {
                if u != v {
                    w[u][v] += spread;
                }
            }
        }
    }
    w
}

/// Total weight of edges whose endpoints lie in different clusters.
pub fn cut_weight(weights: &[Vec<f64>], partition: &Partition) -> f64 {
    let mut total = 0.0;
    for (u, row) in weights.iter().enumerate() {
        for (v, w) in row.iter().enumerate().skip(u + 1) {
            if partition.cluster_of(u) != partition.cluster_of(v) {
                total += w;
            }
        }
    }
    total
}

/// Balanced partition into `num_clusters` groups (sizes differ by at most
/// one) refined by best-improving pairwise swaps until no single swap
/// improves the objective on the interaction weights.
pub fn greedy_edge_cut(
    graph: &FactorGraph,
    num_clusters: usize,
    objective: CutObjective,
    seed: u64,
) -> Result<Partition> {
    let mut w = interaction_weights(graph);
    if objective == CutObjective::MaxCut {
        w.iter_mut().flatten().for_each(|x| *x = -*x);
    }
    min_cut_swaps(&w, num_clusters, seed)
}

/// Swap refinement minimizing the cut weight of `weights` (signed weights allowed).
pub fn min_cut_swaps(weights: &[Vec<f64>], num_clusters: usize, seed: u64) -> Result<Partition> {
    let n = weights.len();
    if num_clusters == 0 || num_clusters > n {
        return Err(Error::domain(format!(
            "cannot split {n} variables into {num_clusters} clusters"
        )));
    }
    let mut ids: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut ids);
    let mut assign = vec![0usize; n];
    let (base, extra) = (n / num_clusters, n % num_clusters);
    let mut pos = 0;
    for c in 0..num_clusters {
        let size = base + usize::from(c < extra);
        for &v in &ids[pos..pos + size] {
            assign[v] = c;
        }
        pos += size;
    }

    // link[v][c] = total weight from v into cluster c.
    let mut link = vec![vec![0.0; num_clusters]; n];
    for u in 0..n {
        for v in 0..n {
            if u != v {
                link[u][assign[v]] += weights[u][v];
            }
        }
    }
    let max_swaps = 100 * n * n + 100;
    for _ in 0..max_swaps {
        let mut best = (1e-12, usize::MAX, usize::MAX);
        for u in 0..n {
            for v in u + 1..n {
                let (a, b) = (assign[u], assign[v]);
                if a == b {
                    continue;
                }
                let gain = link[u][b] - link[u][a] + link[v][a] - link[v][b] - 2.0 * weights[u][v];
                if gain > best.0 {
                    best = (gain, u, v);
                }
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        let (u, v) = (best.1, best.2);
        let (a, b) = (assign[u], assign[v]);
        for x in 0..n {
            if x != u {
                link[x][a] -= weights[x][u];
                link[x][b] += weights[x][u];
            }
            if x != v {
                link[x][b] -= weights[x][v];
                link[x][a] += weights[x][v];
            }
        }
        assign[u] = b;
        assign[v] = a;
    }
    let mut clusters = vec![Vec::new(); num_clusters];
    for (v, &c) in assign.iter().enumerate() {
        clusters[c].push(v);
    }
    clusters.sort_by_key(|c| c[0]);
    Partition::new(clusters, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle4() -> FactorGraph {
        let mut g = FactorGraph::with_cardinalities(&[2; 4]).unwrap();
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            g.add_factor(vec![a, b], vec![0., 0., 0., 1.]).unwrap();
        }
        g
    }

    fn grid_graph(h: usize, w: usize) -> FactorGraph {
        let mut g = FactorGraph::with_cardinalities(&vec![2; h * w]).unwrap();
        for r in 0..h {
            for c in 0..w {
                if c + 1 < w {
                    g.add_factor(vec![r * w + c, r * w + c + 1], vec![0., 0., 0., 1.])
                        .unwrap();
                }
                if r + 1 < h {
                    g.add_factor(vec![r * w + c, (r + 1) * w + c], vec![0., 0., 0., 1.])
                        .unwrap();
                }
            }
        }
        g
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![vec![0, 1], vec![1, 2]], 3).is_err());
        assert!(Partition::new(vec![vec![0, 1]], 3).is_err());
        assert!(Partition::new(vec![vec![0, 1], vec![]], 2).is_err());
        let p = Partition::new(vec![vec![2, 0], vec![1]], 3).unwrap();
        assert_eq!(p.clusters()[0], vec![0, 2]);
        assert_eq!(p.cluster_of(1), 1);
    }

    #[test]
    fn four_cycle_topology() {
        let g = cycle4();
        let p = Partition::new(vec![vec![0, 1], vec![2, 3]], 4).unwrap();
        let t = derive_topology(&g, &p).unwrap();
        // factors: 0:(0,1) 1:(1,2) 2:(2,3) 3:(3,0)
        assert_eq!(t.border_cliques[0], vec![1, 3]);
        assert_eq!(t.interior_cliques[0], vec![0]);
        assert_eq!(t.markov_blanket[0], vec![2, 3]);
        assert_eq!(t.neighbor_clusters[0], vec![1]);
        assert_eq!(t.participants[1], vec![0, 1]);
        assert!(t.interior_nodes[0].is_empty());
    }

    #[test]
    fn single_cluster_has_no_border() {
        let g = cycle4();
        let t = derive_topology(&g, &Partition::single(4)).unwrap();
        assert!(t.border_cliques[0].is_empty());
        assert!(t.markov_blanket[0].is_empty());
        assert_eq!(t.interior_cliques[0].len(), 4);
    }

    #[test]
    fn singleton_blanket_is_graph_neighborhood() {
        let g = grid_graph(3, 3);
        let t = derive_topology(&g, &Partition::singletons(9)).unwrap();
        let adj = g.interaction_graph();
        for (blanket, nbrs) in t.markov_blanket.iter().zip(&adj) {
            assert_eq!(*blanket, nbrs.iter().copied().collect::<Vec<_>>());
        }
    }

    #[test]
    fn coverage_mismatch_is_an_error() {
        let g = cycle4();
        assert!(derive_topology(&g, &Partition::single(3)).is_err());
    }

    #[test]
    fn grid_block_examples() {
        let g = grid_graph(8, 8);
        let p = grid_blocks(8, 8, 2, 2).unwrap();
        assert_eq!(p.len(), 16);
        assert!(p.clusters().iter().all(|c| c.len() == 4));
        let t = derive_topology(&g, &p).unwrap();
        // block at block-row 1, block-col 1 is interior
        let interior = p.cluster_of(2 * 8 + 2);
        assert_eq!(t.markov_blanket[interior].len(), 8);

        let p = grid_blocks(8, 8, 4, 4).unwrap();
        assert_eq!(p.len(), 4);
        let t = derive_topology(&g, &p).unwrap();
        assert_eq!(t.markov_blanket[p.cluster_of(0)].len(), 8);

        assert_eq!(grid_blocks(8, 8, 8, 8).unwrap().len(), 1);
        let ragged = grid_blocks(5, 5, 2, 2).unwrap();
        assert_eq!(ragged.len(), 9);
        assert!(grid_blocks(2, 2, 0, 1).is_err());
    }

    #[test]
    fn chain_and_layer_partitions() {
        assert_eq!(chain_groups(6, 2, 40).unwrap().len(), 3);
        let one = chain_groups(6, 1, 40).unwrap();
        assert_eq!(one.len(), 6);
        assert_eq!(one.clusters()[2], (80..120).collect::<Vec<_>>());
        assert_eq!(chain_groups(6, 6, 40).unwrap().len(), 1);
        assert_eq!(chain_groups(5, 2, 3).unwrap().clusters()[2].len(), 3);
        let rows = layer_rows(&[6, 6, 6, 10]).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows.clusters()[3], (18..28).collect::<Vec<_>>());
    }

    fn two_triangles() -> FactorGraph {
        let mut g = FactorGraph::with_cardinalities(&[2; 6]).unwrap();
        for (a, b) in [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)] {
            g.add_factor(vec![a, b], vec![0., 0., 0., 2.0]).unwrap();
        }
        g.add_factor(vec![2, 3], vec![0., 0., 0., 0.1]).unwrap();
        g
    }

    #[test]
    fn min_cut_separates_triangles() {
        let g = two_triangles();
        let w = interaction_weights(&g);
        // Exhaustive oracle over balanced 2-partitions.
        let mut best = (f64::INFINITY, 0u32);
        for mask in 0u32..64 {
            if mask.count_ones() != 3 || mask & 1 == 0 {
                continue;
            }
            let clusters = vec![
                (0..6).filter(|v| mask >> v & 1 == 1).collect(),
                (0..6).filter(|v| mask >> v & 1 == 0).collect(),
            ];
            let cut = cut_weight(&w, &Partition::new(clusters, 6).unwrap());
            if cut < best.0 {
                best = (cut, mask);
            }
        }
        assert_eq!(best.1, 0b000111);
        for seed in 0..10 {
            let p = greedy_edge_cut(&g, 2, CutObjective::MinCut, seed).unwrap();
            assert_eq!(p.clusters(), &[vec![0, 1, 2], vec![3, 4, 5]], "seed {seed}");
        }
    }

    #[test]
    fn max_cut_is_min_cut_of_negated_weights() {
        let g = grid_graph(3, 4);
        let mut neg = interaction_weights(&g);
        neg.iter_mut().flatten().for_each(|x| *x = -*x);
        for seed in 0..5 {
            let a = greedy_edge_cut(&g, 3, CutObjective::MaxCut, seed).unwrap();
            let b = min_cut_swaps(&neg, 3, seed).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn n_clusters_gives_singletons() {
        let g = grid_graph(2, 3);
        for obj in [CutObjective::MinCut, CutObjective::MaxCut] {
            let p = greedy_edge_cut(&g, 6, obj, 3).unwrap();
            assert!(p.clusters().iter().all(|c| c.len() == 1));
        }
        assert!(greedy_edge_cut(&g, 7, CutObjective::MinCut, 0).is_err());
    }

    #[test]
    fn partition_json_roundtrip() {
        let p = grid_blocks(4, 4, 2, 2).unwrap();
        let s = p.to_json_string().unwrap();
        assert_eq!(Partition::from_json_str(&s, 16).unwrap(), p);
    }
}
