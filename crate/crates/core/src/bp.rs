//! Loopy sum-product belief propagation on the factor graph.
//!
//! Messages start uniform and are updated with a synchronous flooding
//! schedule: every variable→factor message is recomputed from the previous
//! iteration's factor→variable messages, then every factor→variable message
//! from those. Messages are kept as normalized probability vectors; factor
//! tables are exponentiated once, relative to their finite maximum, and a
//! log-space path takes over when the linear sum underflows.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::NodeMarginals;
use crate::factor_graph::FactorGraph;
use crate::report::RunReport;
use crate::table::log_sum_exp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpConfig {
    pub tolerance: f64,
    pub max_iters: usize,
    /// Weight kept on the previous factor→variable message, in `[0, 1)`.
    pub damping: f64,
    /// Recorded in reports; initialization is uniform and does not use it.
    pub seed: u64,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig {
            tolerance: 1e-6,
            max_iters: 1000,
            damping: 0.0,
            seed: 0,
        }
    }
}

/// Messages indexed by factor, then by position in the factor's scope.
#[derive(Debug, Clone, PartialEq)]
pub struct BpState {
    pub var_to_factor: Vec<Vec<Vec<f64>>>,
    pub factor_to_var: Vec<Vec<Vec<f64>>>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpResult {
    pub node_marginals: NodeMarginals,
    /// Sweeps needed to reach the fixed point; when converged this excludes
    /// the final sweep that confirmed it. `BpState::iterations` counts all sweeps run.
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub seed: u64,
    pub wall_time_ms: f64,
}

impl BpResult {
    pub fn to_report(&self, algorithm: &str) -> RunReport {
        RunReport {
            algorithm: algorithm.to_string(),
            elbo: None,
            elbo_trace: Vec::new(),
            log_partition: None,
            sweeps: self.iterations,
            converged: self.converged,
            node_marginals: self.node_marginals.clone(),
            wall_time_ms: self.wall_time_ms,
            seed: Some(self.seed),
            partition: None,
            restart_index: None,
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let s: f64 = v.iter().sum();
    if s > 0.0 && s.is_finite() {
        v.iter_mut().for_each(|x| *x /= s);
    }
    s
}

struct Prepared {
    cards: Vec<Vec<usize>>,
    /// `exp(table − max finite entry)` per factor.
    linear: Vec<Vec<f64>>,
    /// Per variable: (factor, position) pairs.
    adjacency: Vec<Vec<(usize, usize)>>,
}

fn prepare(g: &FactorGraph) -> Result<Prepared> {
    let mut linear = Vec::with_capacity(g.factors.len());
    for (a, f) in g.factors.iter().enumerate() {
        let max = f.log_table.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::Numerical(format!("factor {a} assigns zero mass everywhere")));
        }
        linear.push(f.log_table.iter().map(|t| (t - max).exp()).collect());
    }
    let mut adjacency = vec![Vec::new(); g.num_variables()];
    for (a, f) in g.factors.iter().enumerate() {
        for (p, &v) in f.scope.iter().enumerate() {
            adjacency[v].push((a, p));
        }
    }
    Ok(Prepared {
        cards: g.factors.iter().map(|f| g.scope_cards(&f.scope)).collect(),
        linear,
        adjacency,
    })
}

/// Sum-product message from a factor to every variable of its scope.
fn factor_messages(table: &[f64], linear: &[f64], cards: &[usize], incoming: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = cards.len();
    let mut out: Vec<Vec<f64>> = cards.iter().map(|&c| vec![0.0; c]).collect();
    let mut digits = vec![0usize; k];
    let mut prefix = vec![1.0; k + 1];
    let mut suffix = vec![1.0; k + 1];
    for &w in linear {
        if w > 0.0 {
            for p in 0..k {
                prefix[p + 1] = prefix[p] * incoming[p][digits[p]];
            }
            for p in (0..k).rev() {
                suffix[p] = suffix[p + 1] * incoming[p][digits[p]];
            }
            for p in 0..k {
                out[p][digits[p]] += w * prefix[p] * suffix[p + 1];
            }
        }
        for p in (0..k).rev() {
            digits[p] += 1;
            if digits[p] < cards[p] {
                break;
            }
            digits[p] = 0;
        }
    }
    for (p, m) in out.iter_mut().enumerate() {
        let s = normalize(m);
        if s.is_nan() {
            return Err(Error::Numerical("NaN in factor message".into()));
        }
        if s == 0.0 {
            *m = log_space_message(table, cards, incoming, p)?;
        }
    }
    Ok(out)
}

fn log_space_message(table: &[f64], cards: &[usize], incoming: &[Vec<f64>], target: usize) -> Result<Vec<f64>> {
    let k = cards.len();
    let mut terms: Vec<Vec<f64>> = vec![Vec::new(); cards[target]];
    let mut digits = vec![0usize; k];
    for &t in table {
        let mut acc = t;
        for p in 0..k {
            if p != target {
                acc += incoming[p][digits[p]].ln();
            }
        }
        terms[digits[target]].push(acc);
        for p in (0..k).rev() {
            digits[p] += 1;
            if digits[p] < cards[p] {
                break;
            }
            digits[p] = 0;
        }
    }
    let logs: Vec<f64> = terms.iter().map(|t| log_sum_exp(t)).collect();
    let z = log_sum_exp(&logs);
    if !z.is_finite() {
        return Err(Error::Numerical(
            "belief propagation messages have no common support".into(),
        ));
    }
    Ok(logs.iter().map(|l| (l - z).exp()).collect())
}

fn variable_message(
    state: &BpState,
    adjacency: &[(usize, usize)],
    exclude: Option<usize>,
    card: usize,
) -> Result<Vec<f64>> {
    let mut m = vec![1.0; card];
    for &(b, q) in adjacency {
        if Some(b) == exclude {
            continue;
        }
        for (x, y) in m.iter_mut().zip(&state.factor_to_var[b][q]) {
            *x *= y;
        }
        if normalize(&mut m) == 0.0 {
            return Err(Error::Numerical(
                "belief propagation messages have no common support".into(),
            ));
        }
    }
    if adjacency.iter().all(|&(b, _)| Some(b) == exclude) {
        normalize(&mut m);
    }
    Ok(m)
}

/// Run belief propagation on `graph` conditioned on its evidence.
/// Non-convergence within `max_iters` is reported, not an error.
pub fn run_bp(graph: &FactorGraph, config: &BpConfig) -> Result<BpResult> {
    let (result, _) = run_bp_with_state(graph, config)?;
    Ok(result)
}

/// As [`run_bp`], also returning the final messages.
pub fn run_bp_with_state(graph: &FactorGraph, config: &BpConfig) -> Result<(BpResult, BpState)> {
    if !(0.0..1.0).contains(&config.damping) {
        return Err(Error::domain(format!("damping {} outside [0, 1)", config.damping)));
    }
    let start = Instant::now();
    let cond = graph.condition(&BTreeMap::new())?;
    let g = &cond.graph;
    let prep = prepare(g)?;
    let uniform = |cards: &Vec<usize>| -> Vec<Vec<f64>> { cards.iter().map(|&c| vec![1.0 / c as f64; c]).collect() };
    let mut state = BpState {
        var_to_factor: prep.cards.iter().map(uniform).collect(),
        factor_to_var: prep.cards.iter().map(uniform).collect(),
        iterations: 0,
        residual: f64::INFINITY,
    };
    let mut converged = g.factors.is_empty();
    if converged {
        state.residual = 0.0;
    }
    while !converged && state.iterations < config.max_iters {
        for (v, adj) in prep.adjacency.iter().enumerate() {
            for &(a, p) in adj {
                state.var_to_factor[a][p] = variable_message(&state, adj, Some(a), g.cardinality(v))?;
            }
        }
        let mut residual: f64 = 0.0;
        for (a, f) in g.factors.iter().enumerate() {
            let fresh = factor_messages(&f.log_table, &prep.linear[a], &prep.cards[a], &state.var_to_factor[a])?;
            for (old, mut new) in state.factor_to_var[a].iter_mut().zip(fresh) {
                if config.damping > 0.0 {
                    for (n, o) in new.iter_mut().zip(old.iter()) {
                        *n = (1.0 - config.damping) * *n + config.damping * o;
                    }
                }
                for (n, o) in new.iter().zip(old.iter()) {
                    residual = residual.max((n - o).abs());
                }
                *old = new;
            }
        }
        state.iterations += 1;
        state.residual = residual;
        converged = residual < config.tolerance;
    }
    let mut node_marginals = NodeMarginals::new();
    for (v, adj) in prep.adjacency.iter().enumerate() {
        node_marginals.insert(cond.hidden[v], variable_message(&state, adj, None, g.cardinality(v))?);
    }
    let result = BpResult {
        node_marginals,
        iterations: if converged && state.iterations > 1 {
            state.iterations - 1
        } else {
            state.iterations
        },
        converged,
        residual: state.residual,
        seed: config.seed,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((result, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{all_node_marginals, DEFAULT_CAP};

    fn close(a: &NodeMarginals, b: &NodeMarginals, tol: f64) -> bool {
        a.len() == b.len()
            && a.iter()
                .all(|(v, m)| m.iter().zip(&b[v]).all(|(x, y)| (x - y).abs() <= tol))
    }

    #[test]
    fn single_factor_exact_after_one_iteration() {
        let mut g = FactorGraph::with_cardinalities(&[2, 3]).unwrap();
        g.add_factor(vec![0, 1], vec![0.1, -0.5, 0.7, 1.2, 0.0, -0.3]).unwrap();
        let ex = all_node_marginals(&g, DEFAULT_CAP).unwrap();
        let one = run_bp(
            &g,
            &BpConfig {
                max_iters: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(one.iterations, 1);
        assert!(close(&one.node_marginals, &ex.node_marginals, 1e-14));
        let full = run_bp(&g, &BpConfig::default()).unwrap();
        assert!(full.converged);
        assert_eq!(full.iterations, 1);
    }

    #[test]
    fn chain_with_evidence_is_exact() {
        let mut g = FactorGraph::with_cardinalities(&[2, 2, 2, 2]).unwrap();
        g.add_factor(vec![0, 1], vec![0.0, 0.0, 0.0, 1.5]).unwrap();
        g.add_factor(vec![1, 2], vec![0.0, 0.0, 0.0, -0.8]).unwrap();
        g.add_factor(vec![2, 3], vec![0.3, 0.0, 0.0, 0.9]).unwrap();
        g.add_factor(vec![0], vec![0.0, 0.4]).unwrap();
        g.evidence.insert(3, 0);
        let ex = all_node_marginals(&g, DEFAULT_CAP).unwrap();
        let r = run_bp(&g, &BpConfig::default()).unwrap();
        assert!(r.converged);
        assert!(close(&r.node_marginals, &ex.node_marginals, 1e-12));
    }

    #[test]
    fn hard_zeros_use_log_path() {
        let mut g = FactorGraph::with_cardinalities(&[2, 2]).unwrap();
        g.add_factor(vec![0, 1], vec![0.0, -2000.0, -2000.0, f64::NEG_INFINITY])
            .unwrap();
        let ex = all_node_marginals(&g, DEFAULT_CAP).unwrap();
        let r = run_bp(&g, &BpConfig::default()).unwrap();
        assert!(close(&r.node_marginals, &ex.node_marginals, 1e-12));
    }

    #[test]
    fn frustrated_triangle_reports_messages_normalized() {
        let mut g = FactorGraph::with_cardinalities(&[2, 2, 2]).unwrap();
        for (a, b) in [(0, 1), (1, 2), (0, 2)] {
            g.add_factor(vec![a, b], vec![0.0, 0.0, 0.0, -3.0]).unwrap();
        }
        let (r, s) = run_bp_with_state(
            &g,
            &BpConfig {
                max_iters: 7,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.iterations <= 7);
        for per in s.factor_to_var.iter().chain(&s.var_to_factor) {
            for m in per {
                assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
        }
        assert!(s.residual >= 0.0);
    }

    #[test]
    fn damping_out_of_range() {
        let g = FactorGraph::with_cardinalities(&[2]).unwrap();
        assert!(matches!(
            run_bp(
                &g,
                &BpConfig {
                    damping: 1.0,
                    ..Default::default()
                }
            ),
            Err(Error::Domain(_))
        ));
    }
}
