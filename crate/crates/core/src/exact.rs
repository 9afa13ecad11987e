//! Exact inference: brute-force enumeration, variable elimination with a
//! min-fill ordering, and a calibrated elimination tree that yields every
//! clique marginal from one upward and one downward pass.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_graph::{Conditioned, FactorGraph};
use crate::table::{log_sum_exp, strides_within, table_size_wide, LogTable, Odometer};

/// Default cap on enumerated states and on intermediate table entries.
pub const DEFAULT_CAP: usize = 1 << 24;

/// Per-variable normalized marginals keyed by original variable id.
pub type NodeMarginals = BTreeMap<usize, Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactResult {
    /// Log unnormalized evidence mass (log-partition after conditioning).
    pub log_partition: f64,
    pub node_marginals: NodeMarginals,
}

/// Normalized joint over a query set.
#[derive(Debug, Clone)]
pub struct QueryResult {
    /// Original variable ids, in the order requested.
    pub scope: Vec<usize>,
    pub cards: Vec<usize>,
    /// Normalized log-probabilities, row-major over `scope`.
    pub log_joint: Vec<f64>,
    pub log_partition: f64,
}

fn check_nan(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical(format!("NaN produced in {what}")));
    }
    Ok(())
}

/// Exact enumeration over all hidden configurations.
pub fn brute_force(graph: &FactorGraph, cap: usize) -> Result<ExactResult> {
    let cond = graph.condition(&BTreeMap::new())?;
    let g = &cond.graph;
    let cards = g.cardinalities();
    let states = table_size_wide(&cards);
    if states > cap as u128 {
        return Err(Error::capacity("brute-force state space", states, cap));
    }
    let strides: Vec<Vec<usize>> = g
        .factors
        .iter()
        .map(|f| {
            strides_within(
                &f.scope,
                &g.scope_cards(&f.scope),
                &(0..cards.len()).collect::<Vec<_>>(),
            )
        })
        .collect();
    let visit = |f: &mut dyn FnMut(&[usize], f64)| {
        let mut odo = Odometer::new(&cards, strides.iter().map(|s| s.as_slice()).collect());
        loop {
            let lp: f64 = g
                .factors
                .iter()
                .zip(&odo.indices)
                .map(|(fac, &i)| fac.log_table[i])
                .sum();
            f(odo.digits(), lp);
            if !odo.step() {
                break;
            }
        }
    };

    let mut max = f64::NEG_INFINITY;
    visit(&mut |_, lp| max = max.max(lp));
    if max.is_nan() {
        return Err(Error::Numerical("NaN in brute-force enumeration".into()));
    }
    let mut total = 0.0;
    let mut acc: Vec<Vec<f64>> = cards.iter().map(|&c| vec![0.0; c]).collect();
    if max > f64::NEG_INFINITY {
        visit(&mut |digits, lp| {
            let w = (lp - max).exp();
            total += w;
            for (v, &s) in digits.iter().enumerate() {
                acc[v][s] += w;
            }
        });
    }
    let log_z_local = if total > 0.0 {
        max + total.ln()
    } else {
        f64::NEG_INFINITY
    };
    let mut node_marginals = NodeMarginals::new();
    for (k, &orig) in cond.hidden.iter().enumerate() {
        let m = if total > 0.0 {
            acc[k].iter().map(|a| a / total).collect()
        } else {
            vec![f64::NAN; cards[k]]
        };
        node_marginals.insert(orig, m);
    }
    Ok(ExactResult {
        log_partition: log_z_local + g.offset,
        node_marginals,
    })
}

/// Brute-force joint over a query set of original (hidden) variable ids.
pub fn brute_force_query(graph: &FactorGraph, query: &[usize], cap: usize) -> Result<QueryResult> {
    let cond = graph.condition(&BTreeMap::new())?;
    let local = map_query(&cond, graph, query)?;
    let g = &cond.graph;
    let cards = g.cardinalities();
    let states = table_size_wide(&cards);
    if states > cap as u128 {
        return Err(Error::capacity("brute-force state space", states, cap));
    }
    let all: Vec<usize> = (0..cards.len()).collect();
    let qcards = g.scope_cards(&local);
    let mut strides: Vec<Vec<usize>> = g
        .factors
        .iter()
        .map(|f| strides_within(&f.scope, &g.scope_cards(&f.scope), &all))
        .collect();
    strides.push(strides_within(&local, &qcards, &all));
    let qsize = table_size_wide(&qcards) as usize;
    let mut logs: Vec<Vec<f64>> = vec![Vec::new(); qsize];
    let mut odo = Odometer::new(&cards, strides.iter().map(|s| s.as_slice()).collect());
    let nf = g.factors.len();
    loop {
        let lp: f64 = (0..nf).map(|k| g.factors[k].log_table[odo.indices[k]]).sum();
        logs[odo.indices[nf]].push(lp);
        if !odo.step() {
            break;
        }
    }
    let unnorm: Vec<f64> = logs.iter().map(|l| log_sum_exp(l)).collect();
    finish_query(query, qcards, unnorm, g.offset)
}

fn map_query(cond: &Conditioned, graph: &FactorGraph, query: &[usize]) -> Result<Vec<usize>> {
    let ids = cond.local_ids(graph.num_variables());
    let mut seen = BTreeSet::new();
    query
        .iter()
        .map(|&q| {
            if !seen.insert(q) {
                return Err(Error::domain(format!("query repeats variable {q}")));
            }
            ids.get(q)
                .copied()
                .flatten()
                .ok_or_else(|| Error::domain(format!("query variable {q} is unknown or observed")))
        })
        .collect()
}

fn finish_query(query: &[usize], cards: Vec<usize>, unnorm: Vec<f64>, offset: f64) -> Result<QueryResult> {
    check_nan(&unnorm, "query joint")?;
    let z = log_sum_exp(&unnorm);
    let log_joint = if z.is_finite() {
        unnorm.iter().map(|v| v - z).collect()
    } else {
        unnorm
    };
    Ok(QueryResult {
        scope: query.to_vec(),
        cards,
        log_joint,
        log_partition: z + offset,
    })
}

/// Greedy min-fill elimination order over `eliminate`, ties to the lowest id.
/// Fill is measured on the interaction graph of `scopes` over `num_vars`.
pub fn min_fill_order(num_vars: usize, scopes: &[Vec<usize>], eliminate: &[usize]) -> Vec<usize> {
    let mut adj = vec![BTreeSet::new(); num_vars];
    for s in scopes {
        for &u in s {
            for &v in s {
                if u != v {
                    adj[u].insert(v);
                }
            }
        }
    }
    let mut remaining: BTreeSet<usize> = eliminate.iter().copied().collect();
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let mut best = (usize::MAX, usize::MAX);
        for &v in &remaining {
            let nb: Vec<usize> = adj[v].iter().copied().collect();
            let mut fill = 0;
            for (a, &x) in nb.iter().enumerate() {
                for &y in &nb[a + 1..] {
                    if !adj[x].contains(&y) {
                        fill += 1;
                    }
                }
                if fill >= best.0 {
                    break;
                }
            }
            if fill < best.0 {
                best = (fill, v);
                if fill == 0 {
                    break;
                }
            }
        }
        let v = best.1;
        let nb: Vec<usize> = adj[v].iter().copied().collect();
        for (a, &x) in nb.iter().enumerate() {
            for &y in &nb[a + 1..] {
                adj[x].insert(y);
                adj[y].insert(x);
            }
        }
        for &x in &nb {
            adj[x].remove(&v);
        }
        adj[v].clear();
        remaining.remove(&v);
        order.push(v);
    }
    order
}

/// Joint over `query` (original ids) by eliminating every other hidden
/// variable in min-fill order.
pub fn variable_elimination(graph: &FactorGraph, query: &[usize], cap: usize) -> Result<QueryResult> {
    let cond = graph.condition(&BTreeMap::new())?;
    let local = map_query(&cond, graph, query)?;
    let g = &cond.graph;
    let keep: BTreeSet<usize> = local.iter().copied().collect();
    let elim: Vec<usize> = (0..g.num_variables()).filter(|v| !keep.contains(v)).collect();
    let scopes: Vec<Vec<usize>> = g.factors.iter().map(|f| f.scope.clone()).collect();
    let order = min_fill_order(g.num_variables(), &scopes, &elim);
    eliminate_in_order(&cond, query, &local, &order, cap)
}

/// As [`variable_elimination`] but with a caller-supplied order over the
/// non-query conditioned variables (conditioned ids).
pub fn variable_elimination_with_order(
    graph: &FactorGraph,
    query: &[usize],
    order: &[usize],
    cap: usize,
) -> Result<QueryResult> {
    let cond = graph.condition(&BTreeMap::new())?;
    let local = map_query(&cond, graph, query)?;
    let expected: BTreeSet<usize> = (0..cond.graph.num_variables()).filter(|v| !local.contains(v)).collect();
    if order.iter().copied().collect::<BTreeSet<_>>() != expected || order.len() != expected.len() {
        return Err(Error::domain(
            "elimination order must cover exactly the non-query variables",
        ));
    }
    eliminate_in_order(&cond, query, &local, order, cap)
}

fn eliminate_in_order(
    cond: &Conditioned,
    query: &[usize],
    local: &[usize],
    order: &[usize],
    cap: usize,
) -> Result<QueryResult> {
    let g = &cond.graph;
    let mut pool: Vec<LogTable> = (0..g.factors.len()).map(|k| g.factor_table(k)).collect();
    for &v in order {
        let (with, without): (Vec<LogTable>, Vec<LogTable>) = pool.into_iter().partition(|t| t.scope.contains(&v));
        pool = without;
        if with.is_empty() {
            // Factorless variable: summing it out contributes ln(card).
            let c = g.cardinality(v) as f64;
            pool.push(LogTable::new(vec![], vec![], vec![c.ln()]));
            continue;
        }
        let refs: Vec<&LogTable> = with.iter().collect();
        let prod = LogTable::product(&refs, cap)?;
        let out = prod.sum_out(v);
        check_nan(&out.values, "variable elimination")?;
        pool.push(out);
    }
    let qcards = g.scope_cards(local);
    let base = LogTable::zeros(local.to_vec(), qcards.clone());
    let mut refs: Vec<&LogTable> = vec![&base];
    refs.extend(pool.iter());
    let joint = LogTable::product(&refs, cap)?;
    finish_query(query, qcards, joint.values, g.offset)
}

/// Symbolic elimination tree: cliques, parents and factor assignment for a
/// fixed scope structure. Reusable across tables that share the structure.
#[derive(Debug, Clone)]
pub struct TreePlan {
    cards: Vec<usize>,
    cliques: Vec<Vec<usize>>,
    separators: Vec<Vec<usize>>,
    eliminated: Vec<usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    /// Factor index → clique receiving it.
    home: Vec<usize>,
    /// Variable → clique eliminating it.
    clique_of_var: Vec<usize>,
}

impl TreePlan {
    pub fn new(cards: &[usize], scopes: &[Vec<usize>], cap: usize) -> Result<Self> {
        let n = cards.len();
        let order = min_fill_order(n, scopes, &(0..n).collect::<Vec<_>>());
        let mut position = vec![0; n];
        for (k, &v) in order.iter().enumerate() {
            position[v] = k;
        }
        let mut adj = vec![BTreeSet::new(); n];
        for s in scopes {
            for &u in s {
                for &v in s {
                    if u != v {
                        adj[u].insert(v);
                    }
                }
            }
        }
        let mut cliques = Vec::with_capacity(n);
        let mut separators = Vec::with_capacity(n);
        for &v in &order {
            let nb: Vec<usize> = adj[v].iter().copied().collect();
            let mut clique = vec![v];
            clique.extend(&nb);
            let ccards: Vec<usize> = clique.iter().map(|&u| cards[u]).collect();
            let size = table_size_wide(&ccards);
            if size > cap as u128 {
                return Err(Error::capacity(
                    format!("elimination clique of variable {v}"),
                    size,
                    cap,
                ));
            }
            for (a, &x) in nb.iter().enumerate() {
                for &y in &nb[a + 1..] {
                    adj[x].insert(y);
                    adj[y].insert(x);
                }
            }
            for &x in &nb {
                adj[x].remove(&v);
            }
            cliques.push(clique);
            separators.push(nb);
        }
        let parent: Vec<Option<usize>> = separators
            .iter()
            .map(|sep| sep.iter().map(|&u| position[u]).min())
            .collect();
        let mut children = vec![Vec::new(); n];
        for (k, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(k);
            }
        }
        let home = scopes
            .iter()
            .map(|s| s.iter().map(|&u| position[u]).min().unwrap_or(0))
            .collect();
        Ok(TreePlan {
            cards: cards.to_vec(),
            cliques,
            separators,
            eliminated: order,
            parent,
            children,
            home,
            clique_of_var: position,
        })
    }

    pub fn num_cliques(&self) -> usize {
        self.cliques.len()
    }

    pub fn clique(&self, k: usize) -> &[usize] {
        &self.cliques[k]
    }

    /// Run both passes for tables matching the planned scopes (same order).
    /// Empty-scope tables add to the log-partition.
    pub fn calibrate(&self, tables: &[LogTable]) -> Result<CalibratedTree<'_>> {
        debug_assert_eq!(tables.len(), self.home.len());
        let n = self.cliques.len();
        let mut constant = 0.0;
        let mut assigned: Vec<Vec<&LogTable>> = vec![Vec::new(); n];
        for (t, &h) in tables.iter().zip(&self.home) {
            if t.scope.is_empty() {
                constant += t.values[0];
            } else {
                assigned[h].push(t);
            }
        }
        let mut potentials = Vec::with_capacity(n);
        for (clique, own) in self.cliques.iter().zip(&assigned) {
            let ccards: Vec<usize> = clique.iter().map(|&u| self.cards[u]).collect();
            let base = LogTable::zeros(clique.clone(), ccards);
            let mut refs = vec![&base];
            refs.extend(own.iter().copied());
            potentials.push(LogTable::product(&refs, usize::MAX)?);
        }

        // Upward: cliques are created in elimination order, children first.
        let mut up: Vec<LogTable> = Vec::with_capacity(n);
        let mut log_partition = constant;
        for (k, pot) in potentials.iter().enumerate() {
            let mut refs = vec![pot];
            refs.extend(self.children[k].iter().map(|&c| &up[c]));
            let partial = LogTable::product(&refs, usize::MAX)?;
            let msg = partial.marginalize_onto(&self.separators[k]);
            check_nan(&msg.values, "upward pass")?;
            if self.parent[k].is_none() {
                log_partition += msg.values[0];
            }
            up.push(msg);
        }

        // Downward, in reverse order; beliefs are potential + all incoming.
        let mut down: Vec<Option<LogTable>> = vec![None; n];
        let mut beliefs: Vec<Option<LogTable>> = vec![None; n];
        for k in (0..n).rev() {
            let mut refs = vec![&potentials[k]];
            if let Some(d) = &down[k] {
                refs.push(d);
            }
            refs.extend(self.children[k].iter().map(|&c| &up[c]));
            let belief = LogTable::product(&refs, usize::MAX)?;
            for (pos, &c) in self.children[k].iter().enumerate() {
                let mut rest = vec![&potentials[k]];
                if let Some(d) = &down[k] {
                    rest.push(d);
                }
                rest.extend(
                    self.children[k]
                        .iter()
                        .enumerate()
                        .filter(|&(q, _)| q != pos)
                        .map(|(_, &o)| &up[o]),
                );
                let excl = LogTable::product(&rest, usize::MAX)?;
                let msg = excl.marginalize_onto(&self.separators[c]);
                check_nan(&msg.values, "downward pass")?;
                down[c] = Some(msg);
            }
            beliefs[k] = Some(belief);
        }
        if log_partition.is_nan() {
            return Err(Error::Numerical("NaN log-partition".into()));
        }
        Ok(CalibratedTree {
            plan: self,
            beliefs: beliefs.into_iter().map(|b| b.unwrap()).collect(),
            log_partition,
        })
    }
}

/// Calibrated clique beliefs (unnormalized, log space).
pub struct CalibratedTree<'a> {
    plan: &'a TreePlan,
    beliefs: Vec<LogTable>,
    log_partition: f64,
}

impl CalibratedTree<'_> {
    /// Log-partition of the tables the tree was calibrated with.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// Normalized log-marginal over `vars` (in that order). The set must
    /// lie inside one clique, as any single factor scope does.
    pub fn marginal(&self, vars: &[usize]) -> Result<LogTable> {
        let Some(&first) = vars.first() else {
            return Ok(LogTable::unit());
        };
        let mut best: Option<usize> = None;
        let pos = self.plan.clique_of_var[first];
        let candidates = std::iter::once(pos).chain(0..self.plan.num_cliques());
        for k in candidates {
            let c = &self.plan.cliques[k];
            if vars.iter().all(|v| c.contains(v)) {
                if best.is_none_or(|b| self.beliefs[k].len() < self.beliefs[b].len()) {
                    best = Some(k);
                }
                if k == pos {
                    break;
                }
            }
        }
        let k = best.ok_or_else(|| Error::State(format!("no clique contains {vars:?}")))?;
        let mut m = self.beliefs[k].marginalize_onto(vars).permuted(vars);
        let z = m.normalize();
        if !z.is_finite() {
            return Err(Error::Numerical(format!("marginal over {vars:?} has zero mass")));
        }
        Ok(m)
    }

    /// Normalized probability vector for one variable.
    pub fn node_marginal(&self, var: usize) -> Result<Vec<f64>> {
        let k = self.plan.clique_of_var[var];
        let belief = self.beliefs[k].marginalize_onto(&[var]);
        let z = belief.log_sum();
        if !z.is_finite() {
            return Err(Error::Numerical(format!("marginal of {var} has zero mass")));
        }
        let mut p: Vec<f64> = belief.values.iter().map(|v| (v - z).exp()).collect();
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            log::debug!("marginal of {var} renormalized (residual {:.3e})", s - 1.0);
        }
        p.iter_mut().for_each(|x| *x /= s);
        Ok(p)
    }

    pub fn eliminated_order(&self) -> &[usize] {
        &self.plan.eliminated
    }
}

/// Exact marginals for every hidden variable plus the log-partition.
pub fn all_node_marginals(graph: &FactorGraph, cap: usize) -> Result<ExactResult> {
    let cond = graph.condition(&BTreeMap::new())?;
    let g = &cond.graph;
    let scopes: Vec<Vec<usize>> = g.factors.iter().map(|f| f.scope.clone()).collect();
    let plan = TreePlan::new(&g.cardinalities(), &scopes, cap)?;
    let tables: Vec<LogTable> = (0..g.factors.len()).map(|k| g.factor_table(k)).collect();
    let tree = plan.calibrate(&tables)?;
    let mut node_marginals = NodeMarginals::new();
    for (k, &orig) in cond.hidden.iter().enumerate() {
        node_marginals.insert(orig, tree.node_marginal(k)?);
    }
    Ok(ExactResult {
        log_partition: tree.log_partition() + g.offset,
        node_marginals,
    })
}

/// One variable-elimination run per hidden variable.
pub fn node_marginals_by_elimination(graph: &FactorGraph, cap: usize) -> Result<ExactResult> {
    let mut node_marginals = NodeMarginals::new();
    let mut log_partition = None;
    for v in graph.hidden_variables() {
        let q = variable_elimination(graph, &[v], cap)?;
        log_partition.get_or_insert(q.log_partition);
        node_marginals.insert(v, q.log_joint.iter().map(|x| x.exp()).collect());
    }
    let log_partition = match log_partition {
        Some(z) => z,
        None => graph.condition(&BTreeMap::new())?.graph.offset,
    };
    Ok(ExactResult {
        log_partition,
        node_marginals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ising_pair(theta: f64) -> FactorGraph {
        let mut g = FactorGraph::with_cardinalities(&[2, 2]).unwrap();
        g.add_factor(vec![0, 1], vec![0., 0., 0., theta]).unwrap();
        g
    }

    #[test]
    fn single_uniform_variable() {
        let mut g = FactorGraph::with_cardinalities(&[2]).unwrap();
        g.add_factor(vec![0], vec![0., 0.]).unwrap();
        let r = brute_force(&g, DEFAULT_CAP).unwrap();
        assert!((r.log_partition - 2f64.ln()).abs() < 1e-15);
        assert_eq!(r.node_marginals[&0], vec![0.5, 0.5]);
    }

    #[test]
    fn two_node_ising_by_enumeration() {
        let e = std::f64::consts::E;
        let g = ising_pair(1.0);
        let r = brute_force(&g, DEFAULT_CAP).unwrap();
        assert!((r.log_partition - (3.0 + e).ln()).abs() < 1e-14);
        assert!((r.log_partition - 1.743_668_380_628_679).abs() < 1e-12);
        let want = [2.0 / (3.0 + e), (1.0 + e) / (3.0 + e)];
        for v in 0..2 {
            for (got, w) in r.node_marginals[&v].iter().zip(want) {
                assert!((got - w).abs() < 1e-14);
            }
        }
        let t = all_node_marginals(&g, DEFAULT_CAP).unwrap();
        assert!((t.log_partition - r.log_partition).abs() < 1e-14);
    }

    #[test]
    fn fully_observed_graph() {
        let mut g = ising_pair(1.0);
        g.add_factor(vec![0], vec![0.0, 0.3]).unwrap();
        g.evidence = BTreeMap::from([(0, 1), (1, 1)]);
        let r = brute_force(&g, DEFAULT_CAP).unwrap();
        assert!(r.node_marginals.is_empty());
        assert!((r.log_partition + g.energy(&[1, 1]).unwrap()).abs() < 1e-15);
        let t = all_node_marginals(&g, DEFAULT_CAP).unwrap();
        assert!((t.log_partition - r.log_partition).abs() < 1e-15);
    }

    #[test]
    fn chain_query_matches_brute_force() {
        let mut g = FactorGraph::with_cardinalities(&[2; 10]).unwrap();
        for k in 0..9 {
            let w = 0.3 * k as f64 - 1.0;
            g.add_factor(vec![k, k + 1], vec![0.1, -0.2, 0.4, w]).unwrap();
        }
        let ve = variable_elimination(&g, &[0], DEFAULT_CAP).unwrap();
        let bf = brute_force_query(&g, &[0], DEFAULT_CAP).unwrap();
        assert!((ve.log_partition - bf.log_partition).abs() < 1e-10);
        for (a, b) in ve.log_joint.iter().zip(&bf.log_joint) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn full_query_is_normalized_product() {
        let mut g = FactorGraph::with_cardinalities(&[2, 3, 2]).unwrap();
        g.add_factor(vec![0, 1], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        g.add_factor(vec![2, 1], vec![1.0, 0.0, -1.0, 0.5, 0.0, 0.25]).unwrap();
        let q = variable_elimination(&g, &[0, 1, 2], DEFAULT_CAP).unwrap();
        let mut logs = Vec::new();
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..2 {
                    logs.push(g.log_potential(&[a, b, c]).unwrap());
                }
            }
        }
        let z = log_sum_exp(&logs);
        assert!((q.log_partition - z).abs() < 1e-12);
        for (x, l) in q.log_joint.iter().zip(&logs) {
            assert!((x - (l - z)).abs() < 1e-12);
        }
    }

    #[test]
    fn disconnected_components_add_log_partitions() {
        let mut g = FactorGraph::with_cardinalities(&[2, 2, 3]).unwrap();
        g.add_factor(vec![0, 1], vec![0., 0.5, 0.2, 1.]).unwrap();
        g.add_factor(vec![2], vec![0.1, 0.2, 0.3]).unwrap();
        let r = all_node_marginals(&g, DEFAULT_CAP).unwrap();
        let a = brute_force(&g, DEFAULT_CAP).unwrap();
        let za = log_sum_exp(&[0., 0.5, 0.2, 1.]);
        let zb = log_sum_exp(&[0.1, 0.2, 0.3]);
        assert!((r.log_partition - (za + zb)).abs() < 1e-14);
        assert!((a.log_partition - (za + zb)).abs() < 1e-14);
    }

    #[test]
    fn brute_force_cap() {
        let g = FactorGraph::with_cardinalities(&[2; 10]).unwrap();
        assert!(matches!(brute_force(&g, 1000), Err(Error::Capacity { .. })));
    }

    #[test]
    fn elimination_cap_reports_size() {
        let mut g = FactorGraph::with_cardinalities(&[4; 6]).unwrap();
        g.add_factor((0..6).collect(), vec![0.0; 4096]).unwrap();
        match variable_elimination(&g, &[0], 1000) {
            Err(Error::Capacity { size, .. }) => assert_eq!(size, 4096),
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn min_fill_prefers_leaves_and_low_ids() {
        // Star centred on 0: leaves have zero fill; eliminating the centre
        // first would add three fill edges.
        let scopes = vec![vec![0, 1], vec![0, 2], vec![0, 3]];
        let order = min_fill_order(4, &scopes, &[0, 1, 2, 3]);
        assert_eq!(order, vec![1, 2, 0, 3]);
    }
}
