//! Generalized mean field inference over a disjoint clustering.
//!
//! The approximating distribution is a product of cluster marginals
//! `q(x) = Π_i q_i(x_{C_i})`. Each update replaces `q_i` with the exact
//! posterior of cluster `i`'s fragment in which every border factor is
//! replaced by its expectation under the other participating clusters'
//! current boundary marginals. Those boundary marginals are the messages.
//! An update is exact coordinate ascent on
//!
//! ```text
//! ELBO(q) = E_q[ln p̃(x)] + Σ_i H(q_i)
//! ```
//!
//! so the ELBO never decreases and stays below the log evidence mass.
//! Naive mean field is the all-singleton partition.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clustering::{derive_topology, ClusterTopology, Partition};
use crate::error::{Error, Result};
use crate::exact::{variable_elimination, NodeMarginals, TreePlan, DEFAULT_CAP};
use crate::factor_graph::{Conditioned, Factor, FactorGraph};
use crate::report::RunReport;
use crate::rng::SplitMix64;
use crate::table::{projection_map, LogTable, Odometer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Independent uniform(0,1) weights per hidden state, renormalized per variable.
    Random,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmfConfig {
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub init: Init,
    pub seed: u64,
    pub restarts: usize,
    pub cap: usize,
}

impl Default for GmfConfig {
    fn default() -> Self {
        GmfConfig {
            tolerance: 1e-6,
            max_sweeps: 1000,
            init: Init::Random,
            seed: 0,
            restarts: 1,
            cap: DEFAULT_CAP,
        }
    }
}

/// Boundary marginals `f_{iβ}` keyed by (sender cluster, factor index).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeanFieldState {
    pub messages: BTreeMap<(usize, usize), Vec<f64>>,
}

impl MeanFieldState {
    pub fn get(&self, cluster: usize, factor: usize) -> Result<&[f64]> {
        self.messages
            .get(&(cluster, factor))
            .map(Vec::as_slice)
            .ok_or_else(|| Error::State(format!("missing message from cluster {cluster} for factor {factor}")))
    }
}

/// One cluster's variational marginal, held as its local log-linear graph.
#[derive(Debug, Clone)]
pub struct ClusterMarginal {
    pub cluster: usize,
    /// Conditioned ids of the cluster's hidden variables, ascending.
    pub variables: Vec<usize>,
    /// Local graph over `0..variables.len()`; `q_i ∝ exp(Σ local tables)`.
    pub local_graph: FactorGraph,
    pub log_partition: f64,
    pub entropy: f64,
    pub node_marginals: Vec<Vec<f64>>,
    /// Marginal of `q_i` over `C_i ∩ scope` for every factor touching the
    /// cluster, in the factor's scope order.
    pub scope_marginals: BTreeMap<usize, Vec<f64>>,
}

#[derive(Debug, Clone)]
struct Participant {
    cluster: usize,
    /// Conditioned ids of `C_j ∩ scope`, in factor-scope order.
    sub_scope: Vec<usize>,
    /// Factor entry → sub-table entry.
    map: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Layout {
    variables: Vec<usize>,
    interior: Vec<usize>,
    border: Vec<usize>,
    /// Local scopes of interior factors then expected border factors.
    local_scopes: Vec<Vec<usize>>,
}

/// Precomputed structure for running GMF on one (graph, partition) pair.
#[derive(Debug, Clone)]
pub struct GmfEngine {
    cond: Conditioned,
    partition: Partition,
    topology: ClusterTopology,
    layouts: Vec<Layout>,
    plans: Vec<TreePlan>,
    /// Per factor: every intersecting cluster with its projection.
    participants: Vec<Vec<Participant>>,
    local_index: Vec<usize>,
    cap: usize,
}

/// Mutable algorithm state: cluster marginals, messages and cached ELBO terms.
#[derive(Debug, Clone)]
pub struct GmfState {
    pub marginals: Vec<ClusterMarginal>,
    pub messages: MeanFieldState,
    factor_terms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmfResult {
    pub node_marginals: NodeMarginals,
    pub elbo: f64,
    pub elbo_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub restart_index: usize,
    pub seed: u64,
    pub wall_time_ms: f64,
}

impl GmfResult {
    pub fn to_report(&self, algorithm: &str, partition: &str) -> RunReport {
        RunReport {
            algorithm: algorithm.to_string(),
            elbo: Some(self.elbo),
            elbo_trace: self.elbo_trace.clone(),
            log_partition: None,
            sweeps: self.sweeps,
            converged: self.converged,
            node_marginals: self.node_marginals.clone(),
            wall_time_ms: self.wall_time_ms,
            seed: Some(self.seed),
            partition: Some(partition.to_string()),
            restart_index: Some(self.restart_index),
        }
    }
}

fn expectation(probs: &[f64], table: &[f64]) -> f64 {
    probs
        .iter()
        .zip(table)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, t)| p * t)
        .sum()
}

impl GmfEngine {
    /// Condition `graph` on its evidence and lay out the clusters of
    /// `partition` (which covers hidden and observed variables alike).
    pub fn new(graph: &FactorGraph, partition: &Partition, cap: usize) -> Result<Self> {
        if partition.num_variables() != graph.num_variables() {
            return Err(Error::domain(format!(
                "partition covers {} variables but the graph has {}",
                partition.num_variables(),
                graph.num_variables()
            )));
        }
        let cond = graph.condition(&BTreeMap::new())?;
        let (partition, _) = partition.restrict(&cond)?;
        let g = &cond.graph;
        let topology = derive_topology(g, &partition)?;
        let mut local_index = vec![0; g.num_variables()];
        for c in partition.clusters() {
            for (k, &v) in c.iter().enumerate() {
                local_index[v] = k;
            }
        }
        let participants: Vec<Vec<Participant>> = g
            .factors
            .iter()
            .zip(&topology.participants)
            .map(|(f, parts)| {
                let cards = g.scope_cards(&f.scope);
                parts
                    .iter()
                    .map(|&j| {
                        let sub_scope: Vec<usize> = f
                            .scope
                            .iter()
                            .copied()
                            .filter(|&v| partition.cluster_of(v) == j)
                            .collect();
                        let map = projection_map(&f.scope, &cards, &sub_scope, &g.scope_cards(&sub_scope));
                        Participant {
                            cluster: j,
                            sub_scope,
                            map,
                        }
                    })
                    .collect()
            })
            .collect();
        let mut layouts = Vec::with_capacity(partition.len());
        let mut plans = Vec::with_capacity(partition.len());
        for (i, c) in partition.clusters().iter().enumerate() {
            let interior = topology.interior_cliques[i].clone();
            let border = topology.border_cliques[i].clone();
            let mut local_scopes: Vec<Vec<usize>> = interior
                .iter()
                .map(|&a| g.factors[a].scope.iter().map(|&v| local_index[v]).collect())
                .collect();
            for &b in &border {
                let p = participants[b].iter().find(|p| p.cluster == i).unwrap();
                local_scopes.push(p.sub_scope.iter().map(|&v| local_index[v]).collect());
            }
            let cards: Vec<usize> = c.iter().map(|&v| g.cardinality(v)).collect();
            let plan = TreePlan::new(&cards, &local_scopes, cap).map_err(|e| match e {
                Error::Capacity { what, size, cap } => Error::Capacity {
                    what: format!("cluster {i}: {what}"),
                    size,
                    cap,
                },
                other => other,
            })?;
            plans.push(plan);
            layouts.push(Layout {
                variables: c.clone(),
                interior,
                border,
                local_scopes,
            });
        }
        Ok(GmfEngine {
            cond,
            partition,
            topology,
            layouts,
            plans,
            participants,
            local_index,
            cap,
        })
    }

    pub fn conditioned(&self) -> &Conditioned {
        &self.cond
    }

    /// The partition restricted to hidden variables (conditioned ids).
    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn topology(&self) -> &ClusterTopology {
        &self.topology
    }

    pub fn num_clusters(&self) -> usize {
        self.partition.len()
    }

    fn graph(&self) -> &FactorGraph {
        &self.cond.graph
    }

    /// Expected log-table of border factor `factor` seen from `receiver`:
    /// entry `u` is `Σ_v [Π_{j≠receiver} f_j(v_j)] · table(u, v)` over the
    /// external configurations `v`. The result's scope is `C_receiver ∩ scope`
    /// in conditioned ids.
    pub fn expected_border_factor(&self, factor: usize, receiver: usize, messages: &MeanFieldState) -> Result<Factor> {
        let parts = &self.participants[factor];
        let own = parts
            .iter()
            .find(|p| p.cluster == receiver)
            .ok_or_else(|| Error::State(format!("cluster {receiver} does not touch factor {factor}")))?;
        let others: Vec<(&Participant, &[f64])> = parts
            .iter()
            .filter(|p| p.cluster != receiver)
            .map(|p| Ok((p, messages.get(p.cluster, factor)?)))
            .collect::<Result<_>>()?;
        let size = self.graph().scope_cards(&own.sub_scope).iter().product();
        let mut out = vec![0.0; size];
        let table = &self.graph().factors[factor].log_table;
        for (x, &t) in table.iter().enumerate() {
            let mut w = 1.0;
            for (p, m) in &others {
                w *= m[p.map[x]];
            }
            if w > 0.0 {
                out[own.map[x]] += w * t;
            }
        }
        if out.iter().any(|v| v.is_nan()) {
            return Err(Error::Numerical(format!("NaN in expected factor {factor}")));
        }
        Ok(Factor {
            scope: own.sub_scope.clone(),
            log_table: out,
        })
    }

    /// Cluster `i`'s local graph under `messages`: its interior factors
    /// followed by one expected factor per border clique, in local ids.
    pub fn local_graph(&self, i: usize, messages: &MeanFieldState) -> Result<FactorGraph> {
        let layout = &self.layouts[i];
        let g = self.graph();
        let cards: Vec<usize> = layout.variables.iter().map(|&v| g.cardinality(v)).collect();
        let mut local = FactorGraph::with_cardinalities(&cards)?;
        for (slot, &a) in layout.interior.iter().enumerate() {
            local.factors.push(Factor {
                scope: layout.local_scopes[slot].clone(),
                log_table: g.factors[a].log_table.clone(),
            });
        }
        for (k, &b) in layout.border.iter().enumerate() {
            let f = self.expected_border_factor(b, i, messages)?;
            local.factors.push(Factor {
                scope: layout.local_scopes[layout.interior.len() + k].clone(),
                log_table: f.log_table,
            });
        }
        Ok(local)
    }

    fn touching_factors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let l = &self.layouts[i];
        l.interior.iter().chain(&l.border).copied()
    }

    /// Local ids of `C_i ∩ scope(factor)` in factor-scope order.
    fn local_sub_scope(&self, i: usize, factor: usize) -> Vec<usize> {
        self.participants[factor]
            .iter()
            .find(|p| p.cluster == i)
            .map(|p| p.sub_scope.iter().map(|&v| self.local_index[v]).collect())
            .unwrap_or_default()
    }

    /// Build a cluster marginal from an arbitrary local graph over the
    /// cluster's hidden variables (local ids follow ascending conditioned ids).
    pub fn cluster_marginal_from_local(&self, i: usize, local_graph: FactorGraph) -> Result<ClusterMarginal> {
        let layout = &self.layouts[i];
        if local_graph.num_variables() != layout.variables.len() || !local_graph.evidence.is_empty() {
            return Err(Error::domain(format!(
                "local graph for cluster {i} must cover exactly its {} hidden variables",
                layout.variables.len()
            )));
        }
        let query = |vars: &[usize]| -> Result<Vec<f64>> {
            Ok(variable_elimination(&local_graph, vars, self.cap)?
                .log_joint
                .iter()
                .map(|x| x.exp())
                .collect())
        };
        let n = layout.variables.len();
        let log_partition = variable_elimination(&local_graph, &[], self.cap)?.log_partition;
        let mut expected_local = 0.0;
        for f in &local_graph.factors {
            expected_local += expectation(&query(&f.scope)?, &f.log_table);
        }
        let node_marginals = (0..n).map(|v| query(&[v])).collect::<Result<Vec<_>>>()?;
        let mut scope_marginals = BTreeMap::new();
        for b in self.touching_factors(i) {
            scope_marginals.insert(b, query(&self.local_sub_scope(i, b))?);
        }
        Ok(ClusterMarginal {
            cluster: i,
            variables: layout.variables.clone(),
            local_graph,
            log_partition,
            entropy: log_partition - expected_local,
            node_marginals,
            scope_marginals,
        })
    }

    /// Initial fully factorized marginals and the messages they imply.
    pub fn initial_state(&self, init: Init, seed: u64) -> Result<GmfState> {
        let g = self.graph();
        let mut rng = SplitMix64::new(seed);
        let probs: Vec<Vec<f64>> = (0..g.num_variables())
            .map(|v| {
                let c = g.cardinality(v);
                let w: Vec<f64> = match init {
                    Init::Random => (0..c).map(|_| rng.next_f64()).collect(),
                    Init::Uniform => vec![1.0; c],
                };
                let s: f64 = w.iter().sum();
                w.into_iter().map(|x| x / s).collect()
            })
            .collect();
        let mut marginals = Vec::with_capacity(self.num_clusters());
        for (i, layout) in self.layouts.iter().enumerate() {
            let cards: Vec<usize> = layout.variables.iter().map(|&v| g.cardinality(v)).collect();
            let mut local = FactorGraph::with_cardinalities(&cards)?;
            for (k, &v) in layout.variables.iter().enumerate() {
                local.add_factor(vec![k], probs[v].iter().map(|p| p.ln()).collect())?;
            }
            marginals.push(self.cluster_marginal_from_local(i, local)?);
        }
        self.state_from_marginals(marginals)
    }

    /// Messages and ELBO terms implied by a full set of cluster marginals.
    pub fn state_from_marginals(&self, marginals: Vec<ClusterMarginal>) -> Result<GmfState> {
        if marginals.len() != self.num_clusters() {
            return Err(Error::domain("one marginal per cluster required"));
        }
        let mut messages = MeanFieldState::default();
        for (i, m) in marginals.iter().enumerate() {
            for &b in &self.layouts[i].border {
                let t = m
                    .scope_marginals
                    .get(&b)
                    .ok_or_else(|| Error::State(format!("cluster {i} lacks boundary marginal for factor {b}")))?;
                messages.messages.insert((i, b), t.clone());
            }
        }
        let mut state = GmfState {
            marginals,
            messages,
            factor_terms: vec![0.0; self.graph().factors.len()],
        };
        for b in 0..self.graph().factors.len() {
            state.factor_terms[b] = self.factor_term(b, &state)?;
        }
        Ok(state)
    }

    /// `E_q[table_b]` under the product of participating cluster marginals.
    fn factor_term(&self, b: usize, state: &GmfState) -> Result<f64> {
        let table = &self.graph().factors[b].log_table;
        let parts = &self.participants[b];
        if let [only] = parts.as_slice() {
            let m = state.marginals[only.cluster]
                .scope_marginals
                .get(&b)
                .ok_or_else(|| Error::State(format!("no marginal for interior factor {b}")))?;
            return Ok(expectation(m, table));
        }
        let ms: Vec<(&Participant, &[f64])> = parts
            .iter()
            .map(|p| Ok((p, state.messages.get(p.cluster, b)?)))
            .collect::<Result<_>>()?;
        let mut acc = 0.0;
        for (x, &t) in table.iter().enumerate() {
            let mut w = 1.0;
            for (p, m) in &ms {
                w *= m[p.map[x]];
            }
            if w > 0.0 {
                acc += w * t;
            }
        }
        Ok(acc)
    }

    /// `E_q[ln p̃] + Σ_i H(q_i)` plus the evidence offset, from cached terms.
    pub fn elbo(&self, state: &GmfState) -> f64 {
        self.graph().offset
            + state.factor_terms.iter().sum::<f64>()
            + state.marginals.iter().map(|m| m.entropy).sum::<f64>()
    }

    /// Evaluate the ELBO of arbitrary cluster marginals from scratch.
    pub fn elbo_of(&self, marginals: Vec<ClusterMarginal>) -> Result<f64> {
        let state = self.state_from_marginals(marginals)?;
        Ok(self.elbo(&state))
    }

    /// Replace `q_i` by the exact distribution of its local graph under the
    /// current messages and publish its new boundary marginals. Returns the
    /// largest absolute change over the messages it rewrote.
    pub fn update_cluster(&self, i: usize, state: &mut GmfState) -> Result<f64> {
        let layout = &self.layouts[i];
        let local = self.local_graph(i, &state.messages)?;
        let tables: Vec<LogTable> = (0..local.factors.len()).map(|k| local.factor_table(k)).collect();
        let tree = self.plans[i].calibrate(&tables)?;
        let log_partition = tree.log_partition();
        let mut expected_local = 0.0;
        let mut scope_marginals = BTreeMap::new();
        let factor_ids = layout.interior.iter().chain(&layout.border);
        for (t, &b) in tables.iter().zip(factor_ids) {
            let m = tree.marginal(&t.scope)?.probabilities();
            expected_local += expectation(&m, &t.values);
            scope_marginals.insert(b, m);
        }
        let node_marginals = (0..layout.variables.len())
            .map(|v| tree.node_marginal(v))
            .collect::<Result<Vec<_>>>()?;
        let entropy = log_partition - expected_local;
        if entropy.is_nan() {
            return Err(Error::Numerical(format!("NaN entropy in cluster {i}")));
        }
        let mut change: f64 = 0.0;
        for &b in &layout.border {
            let new = &scope_marginals[&b];
            let old = state
                .messages
                .messages
                .get_mut(&(i, b))
                .ok_or_else(|| Error::State(format!("missing message ({i}, {b})")))?;
            for (o, n) in old.iter_mut().zip(new) {
                change = change.max((*o - n).abs());
                *o = *n;
            }
        }
        state.marginals[i] = ClusterMarginal {
            cluster: i,
            variables: layout.variables.clone(),
            local_graph: local,
            log_partition,
            entropy,
            node_marginals,
            scope_marginals,
        };
        let touched: Vec<usize> = self.touching_factors(i).collect();
        for b in touched {
            state.factor_terms[b] = self.factor_term(b, state)?;
        }
        Ok(change)
    }

    /// Node marginals of the current state keyed by original variable id.
    pub fn node_marginals(&self, state: &GmfState) -> NodeMarginals {
        let mut out = NodeMarginals::new();
        for m in &state.marginals {
            for (k, &v) in m.variables.iter().enumerate() {
                out.insert(self.cond.hidden[v], m.node_marginals[k].clone());
            }
        }
        out
    }

    /// One run from a fresh initialization, updating clusters in `order`
    /// (ascending index when `None`).
    pub fn run_once(
        &self,
        init: Init,
        seed: u64,
        tolerance: f64,
        max_sweeps: usize,
        order: Option<&[usize]>,
    ) -> Result<(GmfState, GmfResult)> {
        let start = Instant::now();
        let default_order: Vec<usize> = (0..self.num_clusters()).collect();
        let order = order.unwrap_or(&default_order);
        let mut state = self.initial_state(init, seed)?;
        let mut trace = vec![self.elbo(&state)];
        let mut converged = self.num_clusters() == 0;
        let mut sweeps = 0;
        while !converged && sweeps < max_sweeps {
            sweeps += 1;
            let mut change: f64 = 0.0;
            for &i in order {
                change = change.max(self.update_cluster(i, &mut state)?);
                let e = self.elbo(&state);
                if e.is_nan() {
                    return Err(Error::Numerical("NaN ELBO".into()));
                }
                trace.push(e);
            }
            converged = change < tolerance;
            if !converged && sweeps > 1 {
                let n = trace.len();
                let prev = trace[n - 1 - order.len()];
                if (trace[n - 1] - prev).abs() <= 1e-12 * prev.abs().max(1.0) {
                    log::debug!("ELBO stalled at sweep {sweeps} while messages still move by {change:.3e}");
                }
            }
        }
        let result = GmfResult {
            node_marginals: self.node_marginals(&state),
            elbo: *trace.last().unwrap(),
            elbo_trace: trace,
            sweeps,
            converged,
            restart_index: 0,
            seed,
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        Ok((state, result))
    }

    /// Literal first-order bound `Σ_x q(x) (1 − A − (E(x) − E'(x)))` by
    /// enumeration of the hidden states, where `q = exp(−E')` and the joint
    /// is `exp(−E − A)`. Diagnostic only; equals `1 + ELBO − A`.
    pub fn first_order_bound(&self, state: &GmfState, log_normalizer: f64) -> Result<f64> {
        let g = self.graph();
        let cards = g.cardinalities();
        let states = crate::table::table_size_wide(&cards);
        if states > self.cap as u128 {
            return Err(Error::capacity("first-order bound enumeration", states, self.cap));
        }
        let mut acc = 0.0;
        let mut odo = Odometer::new(&cards, Vec::new());
        let mut local_assign: Vec<Vec<usize>> = state.marginals.iter().map(|m| vec![0; m.variables.len()]).collect();
        loop {
            let x = odo.digits();
            let joint_log = g.log_potential(x)? + g.offset;
            let mut log_q = 0.0;
            for (m, la) in state.marginals.iter().zip(local_assign.iter_mut()) {
                for (k, &v) in m.variables.iter().enumerate() {
                    la[k] = x[v];
                }
                log_q += m.local_graph.log_potential(la)? - m.log_partition;
            }
            let q = log_q.exp();
            if q > 0.0 {
                // E(x) = −joint_log, E'(x) = −log_q
                acc += q * (1.0 - log_normalizer + joint_log - log_q);
            }
            if !odo.step() {
                break;
            }
        }
        Ok(acc)
    }
}

/// Generalized mean field with restarts; the highest-ELBO run is returned.
pub fn run_gmf(graph: &FactorGraph, partition: &Partition, config: &GmfConfig) -> Result<GmfResult> {
    let start = Instant::now();
    let engine = GmfEngine::new(graph, partition, config.cap)?;
    let mut best: Option<GmfResult> = None;
    for r in 0..config.restarts.max(1) {
        let seed = config.seed.wrapping_add(r as u64);
        let (_, mut res) = engine.run_once(config.init, seed, config.tolerance, config.max_sweeps, None)?;
        res.restart_index = r;
        if best.as_ref().is_none_or(|b| res.elbo > b.elbo) {
            best = Some(res);
        }
    }
    let mut best = best.unwrap();
    best.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(best)
}

/// Naive mean field: GMF over the all-singleton partition.
pub fn naive_mf(graph: &FactorGraph, config: &GmfConfig) -> Result<GmfResult> {
    run_gmf(graph, &Partition::singletons(graph.num_variables()), config)
}
