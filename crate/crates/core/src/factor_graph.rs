//! Discrete factor graphs with log-space tabular factors.
//!
//! A factor stores `θ_α·φ_α` evaluated at every configuration of its scope,
//! so the unnormalized log-density of a full assignment is the sum of the
//! indexed entries and the energy is its negation. Directed models enter
//! through [`DirectedModel::moralize`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{table_size, LogTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub id: usize,
    pub cardinality: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub scope: Vec<usize>,
    #[serde(with = "log_values")]
    pub log_table: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorGraph {
    pub variables: Vec<Variable>,
    pub factors: Vec<Factor>,
    #[serde(default)]
    pub evidence: BTreeMap<usize, usize>,
    /// Log-mass of factors already absorbed by conditioning.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub offset: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

/// JSON has no infinities: −∞ log entries are written as `null`.
mod log_values {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Option<f64>> = values
            .iter()
            .map(|&x| if x == f64::NEG_INFINITY { None } else { Some(x) })
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect())
    }
}

/// Result of conditioning: a graph over the hidden variables only.
#[derive(Debug, Clone)]
pub struct Conditioned {
    /// Hidden-variable graph with dense ids; `graph.offset` carries the
    /// absorbed evidence log-mass.
    pub graph: FactorGraph,
    /// `hidden[k]` is the original id of conditioned variable `k`.
    pub hidden: Vec<usize>,
    /// The full evidence applied.
    pub evidence: BTreeMap<usize, usize>,
}

impl Conditioned {
    /// Original id → conditioned id.
    pub fn local_ids(&self, num_original: usize) -> Vec<Option<usize>> {
        let mut map = vec![None; num_original];
        for (k, &v) in self.hidden.iter().enumerate() {
            map[v] = Some(k);
        }
        map
    }
}

impl FactorGraph {
    /// Validate and build a graph.
    pub fn new(variables: Vec<Variable>, factors: Vec<Factor>, evidence: BTreeMap<usize, usize>) -> Result<Self> {
        let g = FactorGraph {
            variables,
            factors,
            evidence,
            offset: 0.0,
        };
        g.validate()?;
        Ok(g)
    }

    /// Unnamed variables with the given cardinalities and no factors.
    pub fn with_cardinalities(cards: &[usize]) -> Result<Self> {
        let variables = cards
            .iter()
            .enumerate()
            .map(|(id, &cardinality)| Variable {
                id,
                cardinality,
                name: None,
            })
            .collect();
        FactorGraph::new(variables, Vec::new(), BTreeMap::new())
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn cardinality(&self, var: usize) -> usize {
        self.variables[var].cardinality
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.cardinality).collect()
    }

    pub fn scope_cards(&self, scope: &[usize]) -> Vec<usize> {
        scope.iter().map(|&v| self.variables[v].cardinality).collect()
    }

    /// Append a factor after checking it against the graph.
    pub fn add_factor(&mut self, scope: Vec<usize>, log_table: Vec<f64>) -> Result<usize> {
        let f = Factor { scope, log_table };
        self.check_factor(&f)?;
        self.factors.push(f);
        Ok(self.factors.len() - 1)
    }

    pub fn factor_table(&self, idx: usize) -> LogTable {
        let f = &self.factors[idx];
        LogTable::new(f.scope.clone(), self.scope_cards(&f.scope), f.log_table.clone())
    }

    fn check_factor(&self, f: &Factor) -> Result<()> {
        let n = self.variables.len();
        let mut seen = BTreeSet::new();
        for &v in &f.scope {
            if v >= n {
                return Err(Error::domain(format!("factor scope references unknown variable {v}")));
            }
            if !seen.insert(v) {
                return Err(Error::domain(format!("factor scope repeats variable {v}")));
            }
        }
        let size =
            table_size(&self.scope_cards(&f.scope)).ok_or_else(|| Error::domain("factor table size overflows"))?;
        if size != f.log_table.len() {
            return Err(Error::domain(format!(
                "factor over {:?} has {} entries, expected {size}",
                f.scope,
                f.log_table.len()
            )));
        }
        for &x in &f.log_table {
            if x.is_nan() {
                return Err(Error::Numerical(format!("NaN entry in factor over {:?}", f.scope)));
            }
            if x == f64::INFINITY {
                return Err(Error::domain(format!("+inf entry in factor over {:?}", f.scope)));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in self.variables.iter().enumerate() {
            if v.id != k {
                return Err(Error::domain(format!(
                    "variable ids must be 0..N-1; found {} at position {k}",
                    v.id
                )));
            }
            if v.cardinality == 0 {
                return Err(Error::domain(format!("variable {k} has cardinality 0")));
            }
        }
        for f in &self.factors {
            self.check_factor(f)?;
        }
        self.check_assignment_map(&self.evidence)?;
        if self.offset.is_nan() {
            return Err(Error::Numerical("NaN offset".into()));
        }
        Ok(())
    }

    fn check_assignment_map(&self, evidence: &BTreeMap<usize, usize>) -> Result<()> {
        for (&v, &s) in evidence {
            if v >= self.variables.len() {
                return Err(Error::domain(format!("evidence on unknown variable {v}")));
            }
            if s >= self.variables[v].cardinality {
                return Err(Error::domain(format!(
                    "evidence state {s} out of range for variable {v} (cardinality {})",
                    self.variables[v].cardinality
                )));
            }
        }
        Ok(())
    }

    fn check_assignment(&self, assignment: &[usize]) -> Result<()> {
        if assignment.len() != self.variables.len() {
            return Err(Error::domain(format!(
                "assignment has {} entries for {} variables",
                assignment.len(),
                self.variables.len()
            )));
        }
        for (v, &s) in assignment.iter().enumerate() {
            if s >= self.variables[v].cardinality {
                return Err(Error::domain(format!("state {s} out of range for variable {v}")));
            }
        }
        Ok(())
    }

    /// Linear index of a full assignment inside factor `idx`'s table.
    pub fn table_index(&self, idx: usize, assignment: &[usize]) -> usize {
        let f = &self.factors[idx];
        f.scope
            .iter()
            .fold(0, |acc, &v| acc * self.variables[v].cardinality + assignment[v])
    }

    /// Sum of the indexed factor entries, `ln p̃(x)` excluding the offset.
    pub fn log_potential(&self, assignment: &[usize]) -> Result<f64> {
        self.check_assignment(assignment)?;
        Ok((0..self.factors.len())
            .map(|k| self.factors[k].log_table[self.table_index(k, assignment)])
            .sum())
    }

    /// `E(x) = −Σ_α θ_α φ_α(x_α)`.
    pub fn energy(&self, assignment: &[usize]) -> Result<f64> {
        Ok(-self.log_potential(assignment)?)
    }

    /// Hidden variable ids (those without evidence), ascending.
    pub fn hidden_variables(&self) -> Vec<usize> {
        (0..self.variables.len())
            .filter(|v| !self.evidence.contains_key(v))
            .collect()
    }

    /// Condition on `extra` evidence merged with the graph's own.
    ///
    /// Every factor touching evidence is sliced at the observed states;
    /// factors left with an empty scope are folded into `offset`, so that
    /// `logZ(conditioned) + offset` is the log unnormalized evidence mass.
    pub fn condition(&self, extra: &BTreeMap<usize, usize>) -> Result<Conditioned> {
        self.check_assignment_map(extra)?;
        let mut evidence = self.evidence.clone();
        for (&v, &s) in extra {
            match evidence.get(&v) {
                Some(&old) if old != s => {
                    return Err(Error::domain(format!(
                        "variable {v} already conditioned on state {old}, cannot condition on {s}"
                    )));
                }
                _ => {
                    evidence.insert(v, s);
                }
            }
        }
        let hidden: Vec<usize> = (0..self.variables.len())
            .filter(|v| !evidence.contains_key(v))
            .collect();
        let mut new_id = vec![usize::MAX; self.variables.len()];
        for (k, &v) in hidden.iter().enumerate() {
            new_id[v] = k;
        }
        let variables: Vec<Variable> = hidden
            .iter()
            .enumerate()
            .map(|(k, &v)| Variable {
                id: k,
                cardinality: self.variables[v].cardinality,
                name: self.variables[v].name.clone(),
            })
            .collect();
        let mut offset = self.offset;
        let mut factors = Vec::new();
        for idx in 0..self.factors.len() {
            let mut t = self.factor_table(idx);
            for &v in &self.factors[idx].scope {
                if let Some(&s) = evidence.get(&v) {
                    t = t.slice(v, s);
                }
            }
            if t.scope.is_empty() {
                offset += t.values[0];
            } else {
                factors.push(Factor {
                    scope: t.scope.iter().map(|&v| new_id[v]).collect(),
                    log_table: t.values,
                });
            }
        }
        if offset.is_nan() {
            return Err(Error::Numerical("NaN while absorbing evidence".into()));
        }
        Ok(Conditioned {
            graph: FactorGraph {
                variables,
                factors,
                evidence: BTreeMap::new(),
                offset,
            },
            hidden,
            evidence,
        })
    }

    /// Undirected adjacency: `u ~ v` iff some factor scope contains both.
    pub fn interaction_graph(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.variables.len()];
        for f in &self.factors {
            for &u in &f.scope {
                for &v in &f.scope {
                    if u != v {
                        adj[u].insert(v);
                    }
                }
            }
        }
        adj
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let g: FactorGraph = serde_json::from_str(s)?;
        g.validate()?;
        Ok(g)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        FactorGraph::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.to_json_string()?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }
}

/// Conditional log-probability table `ln p(child | parents)`.
///
/// The table scope is `parents..., child`, so each contiguous run of
/// `card(child)` entries is one conditional distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpd {
    pub child: usize,
    pub parents: Vec<usize>,
    #[serde(with = "log_values")]
    pub log_table: Vec<f64>,
}

impl Cpd {
    pub fn scope(&self) -> Vec<usize> {
        let mut s = self.parents.clone();
        s.push(self.child);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectedModel {
    pub variables: Vec<Variable>,
    pub cpds: Vec<Cpd>,
}

impl DirectedModel {
    pub fn new(variables: Vec<Variable>, mut cpds: Vec<Cpd>) -> Result<Self> {
        cpds.sort_by_key(|c| c.child);
        let m = DirectedModel { variables, cpds };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let shell = FactorGraph::new(self.variables.clone(), Vec::new(), BTreeMap::new())?;
        if self.cpds.len() != self.variables.len() || self.cpds.iter().enumerate().any(|(k, c)| c.child != k) {
            return Err(Error::domain("directed model needs exactly one CPD per variable"));
        }
        for cpd in &self.cpds {
            let f = Factor {
                scope: cpd.scope(),
                log_table: cpd.log_table.clone(),
            };
            shell.check_factor(&f)?;
            let c = self.variables[cpd.child].cardinality;
            for (row, chunk) in cpd.log_table.chunks(c).enumerate() {
                let total: f64 = chunk.iter().map(|v| v.exp()).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::domain(format!(
                        "CPD of variable {} row {row} sums to {total}",
                        cpd.child
                    )));
                }
            }
        }
        self.topological_order().map(|_| ())
    }

    /// Parents-before-children order (Kahn's algorithm, lowest id first).
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let n = self.variables.len();
        let mut indegree: Vec<usize> = self.cpds.iter().map(|c| c.parents.len()).collect();
        let mut children = vec![Vec::new(); n];
        for c in &self.cpds {
            for &p in &c.parents {
                children[p].push(c.child);
            }
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &ch in &children[v] {
                indegree[ch] -= 1;
                if indegree[ch] == 0 {
                    ready.insert(ch);
                }
            }
        }
        if order.len() != n {
            return Err(Error::domain("parent graph contains a cycle"));
        }
        Ok(order)
    }

    /// One factor per family with `log_table = ln p(child | parents)`; the
    /// normalized distribution of the result is exactly the Bayes-net joint.
    pub fn moralize(&self) -> FactorGraph {
        FactorGraph {
            variables: self.variables.clone(),
            factors: self
                .cpds
                .iter()
                .map(|c| Factor {
                    scope: c.scope(),
                    log_table: c.log_table.clone(),
                })
                .collect(),
            evidence: BTreeMap::new(),
            offset: 0.0,
        }
    }

    /// Row of the CPD of `child` selected by the parents' states in `assignment`.
    pub fn cpd_row(&self, child: usize, assignment: &[usize]) -> &[f64] {
        let cpd = &self.cpds[child];
        let c = self.variables[child].cardinality;
        let row = cpd
            .parents
            .iter()
            .fold(0, |acc, &p| acc * self.variables[p].cardinality + assignment[p]);
        &cpd.log_table[row * c..(row + 1) * c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_graph() -> FactorGraph {
        let mut g = FactorGraph::with_cardinalities(&[2, 2]).unwrap();
        g.add_factor(vec![0, 1], vec![0., 0., 0., 1.]).unwrap();
        g
    }

    #[test]
    fn energy_examples() {
        let mut g = FactorGraph::with_cardinalities(&[2]).unwrap();
        g.add_factor(vec![0], vec![0., 0.]).unwrap();
        assert_eq!(g.energy(&[0]).unwrap(), 0.0);

        let mut g = pair_graph();
        assert_eq!(g.energy(&[1, 1]).unwrap(), -1.0);
        g.add_factor(vec![1], vec![0., 0.5]).unwrap();
        assert_eq!(g.energy(&[1, 1]).unwrap(), -1.5);
    }

    #[test]
    fn energy_rejects_out_of_range() {
        let g = pair_graph();
        assert!(matches!(g.energy(&[0, 2]), Err(Error::Domain(_))));
        assert!(matches!(g.energy(&[0]), Err(Error::Domain(_))));
    }

    #[test]
    fn condition_examples() {
        let g = pair_graph();
        let c = g.condition(&BTreeMap::new()).unwrap();
        assert_eq!(c.graph.factors, g.factors);
        assert_eq!(c.graph.offset, 0.0);

        let c = g.condition(&BTreeMap::from([(1, 1)])).unwrap();
        assert_eq!(c.hidden, vec![0]);
        assert_eq!(c.graph.factors.len(), 1);
        assert_eq!(c.graph.factors[0].scope, vec![0]);
        assert_eq!(c.graph.factors[0].log_table, vec![0., 1.]);
        assert_eq!(c.graph.offset, 0.0);

        let full = BTreeMap::from([(0, 1), (1, 1)]);
        let c = g.condition(&full).unwrap();
        assert_eq!(c.graph.num_variables(), 0);
        assert_eq!(c.graph.offset, -g.energy(&[1, 1]).unwrap());
    }

    #[test]
    fn conflicting_evidence_is_rejected() {
        let mut g = pair_graph();
        g.evidence.insert(0, 0);
        assert!(matches!(g.condition(&BTreeMap::from([(0, 1)])), Err(Error::Domain(_))));
        // Re-asserting the same state is not a conflict.
        assert!(g.condition(&BTreeMap::from([(0, 0)])).is_ok());
    }

    #[test]
    fn invalid_factors_are_rejected() {
        let mut g = FactorGraph::with_cardinalities(&[2, 3]).unwrap();
        assert!(g.add_factor(vec![0, 0], vec![0.; 4]).is_err());
        assert!(g.add_factor(vec![0, 1], vec![0.; 5]).is_err());
        assert!(g.add_factor(vec![2], vec![0.; 2]).is_err());
        assert!(matches!(
            g.add_factor(vec![0], vec![f64::NAN, 0.]),
            Err(Error::Numerical(_))
        ));
        assert!(g.add_factor(vec![0], vec![f64::NEG_INFINITY, 0.]).is_ok());
    }

    #[test]
    fn moralize_examples() {
        let vars = |n: usize| -> Vec<Variable> {
            (0..n)
                .map(|id| Variable {
                    id,
                    cardinality: 2,
                    name: None,
                })
                .collect()
        };
        let root = DirectedModel::new(
            vars(1),
            vec![Cpd {
                child: 0,
                parents: vec![],
                log_table: vec![0.3f64.ln(), 0.7f64.ln()],
            }],
        )
        .unwrap();
        let g = root.moralize();
        assert_eq!(g.factors[0].log_table, vec![0.3f64.ln(), 0.7f64.ln()]);

        let uniform = vec![0.5f64.ln(); 2];
        let vee = DirectedModel::new(
            vars(3),
            vec![
                Cpd {
                    child: 0,
                    parents: vec![],
                    log_table: uniform.clone(),
                },
                Cpd {
                    child: 1,
                    parents: vec![],
                    log_table: uniform.clone(),
                },
                Cpd {
                    child: 2,
                    parents: vec![0, 1],
                    log_table: vec![0.5f64.ln(); 8],
                },
            ],
        )
        .unwrap();
        let g = vee.moralize();
        let adj = g.interaction_graph();
        assert!(adj[0].contains(&1), "co-parents are married");
        assert_eq!(g.factors[2].scope, vec![0, 1, 2]);
    }

    #[test]
    fn directed_model_rejects_cycles_and_bad_rows() {
        let vars: Vec<Variable> = (0..2)
            .map(|id| Variable {
                id,
                cardinality: 2,
                name: None,
            })
            .collect();
        let half = vec![0.5f64.ln(); 4];
        let cyc = DirectedModel::new(
            vars.clone(),
            vec![
                Cpd {
                    child: 0,
                    parents: vec![1],
                    log_table: half.clone(),
                },
                Cpd {
                    child: 1,
                    parents: vec![0],
                    log_table: half,
                },
            ],
        );
        assert!(cyc.is_err());
        let bad = DirectedModel::new(
            vars[..1].to_vec(),
            vec![Cpd {
                child: 0,
                parents: vec![],
                log_table: vec![0.0, 0.0],
            }],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn interaction_graph_examples() {
        let mut g = FactorGraph::with_cardinalities(&[2, 2, 2]).unwrap();
        assert!(g.interaction_graph().iter().all(|s| s.is_empty()));
        g.add_factor(vec![0, 1, 2], vec![0.; 8]).unwrap();
        let adj = g.interaction_graph();
        assert_eq!(adj[0], BTreeSet::from([1, 2]));
        assert_eq!(adj[2], BTreeSet::from([0, 1]));

        let mut c = FactorGraph::with_cardinalities(&[2; 4]).unwrap();
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 0)] {
            c.add_factor(vec![a, b], vec![0.; 4]).unwrap();
        }
        let adj = c.interaction_graph();
        assert_eq!(adj[0], BTreeSet::from([1, 3]));
        assert_eq!(adj[1], BTreeSet::from([0, 2]));
    }

    #[test]
    fn json_roundtrip_is_byte_identical() {
        let mut g = pair_graph();
        g.add_factor(vec![1], vec![f64::NEG_INFINITY, 0.1 + 0.2]).unwrap();
        g.evidence.insert(0, 1);
        g.variables[0].name = Some("a".into());
        let s = g.to_json_string().unwrap();
        let back = FactorGraph::from_json_str(&s).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json_string().unwrap(), s);
    }
}
