//! Seeded benchmark generators: nearest-neighbour Ising grids, layered
//! sigmoid belief networks, and factorial HMMs with linear-Gaussian
//! emissions folded into tabular factors.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::NodeMarginals;
use crate::factor_graph::{Cpd, DirectedModel, FactorGraph, Variable};
use crate::rng::SplitMix64;
use crate::table::{log_sum_exp, table_size_wide, Odometer};

/// Largest number of parents a sigmoid CPD may have.
pub const MAX_FAN_IN: usize = 20;

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::domain(format!(
            "{name} ({lo}, {hi}) is not a finite nonempty interval"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingSpec {
    pub height: usize,
    pub width: usize,
    pub bias_range: (f64, f64),
    pub coupling_range: (f64, f64),
    pub seed: u64,
}

impl IsingSpec {
    pub fn attractive(height: usize, width: usize, seed: u64) -> Self {
        IsingSpec {
            height,
            width,
            bias_range: (-0.25, 0.25),
            coupling_range: (0.0, 2.0),
            seed,
        }
    }

    pub fn repulsive(height: usize, width: usize, seed: u64) -> Self {
        IsingSpec {
            coupling_range: (-2.0, 0.0),
            ..Self::attractive(height, width, seed)
        }
    }
}

/// Binary grid with variable id `r * width + c`. Draw order: biases
/// row-major, horizontal couplings row-major, vertical couplings row-major.
pub fn make_ising(spec: &IsingSpec) -> Result<FactorGraph> {
    check_range("bias_range", spec.bias_range)?;
    check_range("coupling_range", spec.coupling_range)?;
    if spec.height == 0 || spec.width == 0 {
        return Err(Error::domain("grid dimensions must be positive"));
    }
    let (h, w) = (spec.height, spec.width);
    let mut rng = SplitMix64::new(spec.seed);
    let mut g = FactorGraph::with_cardinalities(&vec![2; h * w])?;
    for v in 0..h * w {
        let b = rng.uniform(spec.bias_range.0, spec.bias_range.1);
        g.add_factor(vec![v], vec![0.0, b])?;
    }
    let (lo, hi) = spec.coupling_range;
    for r in 0..h {
        for c in 0..w.saturating_sub(1) {
            let t = rng.uniform(lo, hi);
            g.add_factor(vec![r * w + c, r * w + c + 1], vec![0.0, 0.0, 0.0, t])?;
        }
    }
    for r in 0..h.saturating_sub(1) {
        for c in 0..w {
            let t = rng.uniform(lo, hi);
            g.add_factor(vec![r * w + c, (r + 1) * w + c], vec![0.0, 0.0, 0.0, t])?;
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmoidNetSpec {
    /// Hidden layer sizes, top to bottom.
    pub layer_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_layer_size: Option<usize>,
    pub weight_range: (f64, f64),
    pub seed: u64,
}

impl SigmoidNetSpec {
    /// Variable ids per layer, top to bottom; the observed layer is last.
    pub fn layers(&self) -> Vec<Vec<usize>> {
        let mut next = 0;
        self.layer_sizes
            .iter()
            .chain(self.observed_layer_size.as_ref())
            .map(|&n| {
                let ids = (next..next + n).collect();
                next += n;
                ids
            })
            .collect()
    }

    pub fn num_variables(&self) -> usize {
        self.layer_sizes.iter().sum::<usize>() + self.observed_layer_size.unwrap_or(0)
    }
}

fn log_sigmoid(z: f64) -> f64 {
    // ln σ(z) = −softplus(−z)
    -((-z.abs()).exp().ln_1p() + (-z).max(0.0))
}

/// Layered sigmoid belief network with full connectivity between adjacent
/// layers. Per node, weights are drawn in parent order and then the bias,
/// both from `weight_range`; the top layer has bias-only CPDs.
pub fn make_sigmoid_net(spec: &SigmoidNetSpec) -> Result<DirectedModel> {
    check_range("weight_range", spec.weight_range)?;
    let layers = spec.layers();
    if layers.is_empty() || layers.iter().any(Vec::is_empty) {
        return Err(Error::domain("sigmoid network layers must be nonempty"));
    }
    let mut rng = SplitMix64::new(spec.seed);
    let (lo, hi) = spec.weight_range;
    let variables: Vec<Variable> = (0..spec.num_variables())
        .map(|id| Variable {
            id,
            cardinality: 2,
            name: None,
        })
        .collect();
    let mut cpds = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        let parents: Vec<usize> = if l == 0 { Vec::new() } else { layers[l - 1].clone() };
        if parents.len() > MAX_FAN_IN {
            return Err(Error::capacity("sigmoid CPD fan-in", parents.len() as u128, MAX_FAN_IN));
        }
        for &child in layer {
            let weights: Vec<f64> = parents.iter().map(|_| rng.uniform(lo, hi)).collect();
            let bias = rng.uniform(lo, hi);
            let mut log_table = Vec::with_capacity(2 << parents.len());
            for a in 0..1usize << parents.len() {
                let z: f64 = bias
                    + weights
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| (a >> (parents.len() - 1 - j)) & 1 == 1)
                        .map(|(_, w)| w)
                        .sum::<f64>();
                log_table.push(log_sigmoid(-z));
                log_table.push(log_sigmoid(z));
            }
            cpds.push(Cpd {
                child,
                parents: parents.clone(),
                log_table,
            });
        }
    }
    DirectedModel::new(variables, cpds)
}

/// Ancestral sample of every variable.
pub fn sample_directed(model: &DirectedModel, seed: u64) -> Result<Vec<usize>> {
    let mut rng = SplitMix64::new(seed);
    let mut x = vec![0; model.variables.len()];
    for v in model.topological_order()? {
        let row: Vec<f64> = model.cpd_row(v, &x).iter().map(|l| l.exp()).collect();
        x[v] = rng.categorical(&row);
    }
    Ok(x)
}

/// Exact sample of all variables by enumeration; evidence stays fixed.
pub fn sample_graph(graph: &FactorGraph, seed: u64, cap: usize) -> Result<Vec<usize>> {
    let cond = graph.condition(&BTreeMap::new())?;
    let g = &cond.graph;
    let cards = g.cardinalities();
    let states = table_size_wide(&cards);
    if states > cap as u128 {
        return Err(Error::capacity("exact sampling state space", states, cap));
    }
    let mut logs = Vec::with_capacity(states as usize);
    let mut odo = Odometer::new(&cards, Vec::new());
    loop {
        logs.push(g.log_potential(odo.digits())?);
        if !odo.step() {
            break;
        }
    }
    let z = log_sum_exp(&logs);
    if !z.is_finite() {
        return Err(Error::Numerical("cannot sample a model with no mass".into()));
    }
    let probs: Vec<f64> = logs.iter().map(|l| (l - z).exp()).collect();
    let mut k = SplitMix64::new(seed).categorical(&probs);
    let mut x: Vec<usize> = (0..graph.num_variables())
        .map(|v| graph.evidence.get(&v).copied().unwrap_or(0))
        .collect();
    for (local, &orig) in cond.hidden.iter().enumerate().rev() {
        x[orig] = k % cards[local];
        k /= cards[local];
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FhmmSpec {
    pub num_chains: usize,
    pub num_steps: usize,
    pub num_states: usize,
    /// Per chain: initial log-probabilities.
    pub initial: Vec<Vec<f64>>,
    /// Per chain: `transition[m][from][to]` log-probabilities.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// Per chain: `output_dim × num_states` emission weights.
    pub emission_weights: Vec<Vec<Vec<f64>>>,
    pub covariance: Vec<Vec<f64>>,
    pub seed: u64,
}

fn normalized_logs(rng: &mut SplitMix64, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.next_f64()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| (x / s).ln()).collect()
}

struct Gaussian {
    chol: DMatrix<f64>,
    log_norm: f64,
    cholesky: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl Gaussian {
    fn new(cov: &[Vec<f64>]) -> Result<Self> {
        let d = cov.len();
        if d == 0 || cov.iter().any(|r| r.len() != d) {
            return Err(Error::domain("covariance must be a nonempty square matrix"));
        }
        let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
        if (0..d).any(|i| (0..i).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * (1.0 + m[(i, j)].abs()))) {
            return Err(Error::domain("covariance must be symmetric"));
        }
        let cholesky = m
            .cholesky()
            .ok_or_else(|| Error::domain("covariance must be positive definite"))?;
        let chol = cholesky.l();
        let log_det = 2.0 * (0..d).map(|i| chol[(i, i)].ln()).sum::<f64>();
        let log_norm = -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Gaussian {
            chol,
            log_norm,
            cholesky,
        })
    }

    fn log_density(&self, residual: DVector<f64>) -> f64 {
        let solved = self.cholesky.solve(&residual);
        self.log_norm - 0.5 * residual.dot(&solved)
    }
}

impl FhmmSpec {
    /// Random parameters: initial distribution and transition rows are
    /// normalized uniform(0,1) draws, emission weights uniform(−1,1), and the
    /// covariance is the identity scaled by uniform(0.5, 2). Per chain the
    /// draw order is initial, transition rows, weights row-major; the
    /// covariance scale is drawn last.
    pub fn random(
        num_chains: usize,
        num_steps: usize,
        num_states: usize,
        output_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        if num_chains == 0 || num_steps == 0 || num_states == 0 || output_dim == 0 {
            return Err(Error::domain("fHMM dimensions must be positive"));
        }
        let mut rng = SplitMix64::new(seed);
        let k = num_states;
        let mut initial = Vec::new();
        let mut transition = Vec::new();
        let mut emission_weights = Vec::new();
        for _ in 0..num_chains {
            initial.push(normalized_logs(&mut rng, k));
            transition.push((0..k).map(|_| normalized_logs(&mut rng, k)).collect());
            emission_weights.push(
                (0..output_dim)
                    .map(|_| (0..k).map(|_| rng.uniform(-1.0, 1.0)).collect())
                    .collect(),
            );
        }
        let scale = rng.uniform(0.5, 2.0);
        let covariance = (0..output_dim)
            .map(|i| (0..output_dim).map(|j| if i == j { scale } else { 0.0 }).collect())
            .collect();
        Ok(FhmmSpec {
            num_chains,
            num_steps,
            num_states,
            initial,
            transition,
            emission_weights,
            covariance,
            seed,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.covariance.len()
    }

    /// Variable id of chain `m` at step `t`.
    pub fn var(&self, m: usize, t: usize) -> usize {
        m * self.num_steps + t
    }

    pub fn num_slice_states(&self) -> u128 {
        (self.num_states as u128).pow(self.num_chains as u32)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, k, d) = (self.num_chains, self.num_states, self.output_dim());
        if m == 0 || k == 0 || self.num_steps == 0 {
            return Err(Error::domain("fHMM dimensions must be positive"));
        }
        let row_ok = |r: &Vec<f64>| r.len() == k && (log_sum_exp(r)).abs() < 1e-9;
        if self.initial.len() != m || !self.initial.iter().all(row_ok) {
            return Err(Error::domain(
                "initial tables must be normalized length-K rows per chain",
            ));
        }
        if self.transition.len() != m || !self.transition.iter().all(|t| t.len() == k && t.iter().all(row_ok)) {
            return Err(Error::domain("transition rows must be normalized K×K tables per chain"));
        }
        if self.emission_weights.len() != m
            || !self
                .emission_weights
                .iter()
                .all(|w| w.len() == d && w.iter().all(|r| r.len() == k))
        {
            return Err(Error::domain("emission weights must be output_dim × K per chain"));
        }
        Gaussian::new(&self.covariance).map(|_| ())
    }

    fn mean(&self, states: &[usize]) -> DVector<f64> {
        DVector::from_fn(self.output_dim(), |i, _| {
            states
                .iter()
                .enumerate()
                .map(|(m, &s)| self.emission_weights[m][i][s])
                .sum()
        })
    }

    fn check_observations(&self, observations: &[Vec<f64>]) -> Result<()> {
        if observations.len() != self.num_steps || observations.iter().any(|y| y.len() != self.output_dim()) {
            return Err(Error::domain(format!(
                "expected {} observations of dimension {}",
                self.num_steps,
                self.output_dim()
            )));
        }
        Ok(())
    }

    /// Emission log-density table per step over the joint slice state
    /// (chain 0 most significant).
    fn emission_tables(&self, observations: &[Vec<f64>], cap: usize) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        self.check_observations(observations)?;
        let size = self.num_slice_states();
        if size > cap as u128 {
            return Err(Error::capacity("fHMM emission table", size, cap));
        }
        let gauss = Gaussian::new(&self.covariance)?;
        let cards = vec![self.num_states; self.num_chains];
        let means: Vec<DVector<f64>> = {
            let mut out = Vec::with_capacity(size as usize);
            let mut odo = Odometer::new(&cards, Vec::new());
            loop {
                out.push(self.mean(odo.digits()));
                if !odo.step() {
                    break;
                }
            }
            out
        };
        Ok(observations
            .iter()
            .map(|y| {
                let y = DVector::from_column_slice(y);
                means.iter().map(|mu| gauss.log_density(&y - mu)).collect()
            })
            .collect())
    }

    /// Joint sample of hidden states (indexed by [`FhmmSpec::var`]) and observations.
    pub fn sample(&self, seed: u64) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
        self.validate()?;
        let gauss = Gaussian::new(&self.covariance)?;
        let mut rng = SplitMix64::new(seed);
        let (m_n, t_n) = (self.num_chains, self.num_steps);
        let mut x = vec![0; m_n * t_n];
        for m in 0..m_n {
            let p: Vec<f64> = self.initial[m].iter().map(|l| l.exp()).collect();
            x[self.var(m, 0)] = rng.categorical(&p);
            for t in 1..t_n {
                let prev = x[self.var(m, t - 1)];
                let p: Vec<f64> = self.transition[m][prev].iter().map(|l| l.exp()).collect();
                x[self.var(m, t)] = rng.categorical(&p);
            }
        }
        let d = self.output_dim();
        let obs = (0..t_n)
            .map(|t| {
                let states: Vec<usize> = (0..m_n).map(|m| x[self.var(m, t)]).collect();
                let z = DVector::from_fn(d, |_, _| rng.normal());
                (self.mean(&states) + &gauss.chol * z).iter().copied().collect()
            })
            .collect();
        Ok((x, obs))
    }
}

/// fHMM posterior graph with variable `m * T + t`. Factor order: per chain
/// the initial unary then its transitions, then one emission factor per
/// step over all chain variables of that step (chain order).
pub fn make_fhmm(spec: &FhmmSpec, observations: &[Vec<f64>], cap: usize) -> Result<FactorGraph> {
    let emissions = spec.emission_tables(observations, cap)?;
    let (m_n, t_n, k) = (spec.num_chains, spec.num_steps, spec.num_states);
    let mut g = FactorGraph::with_cardinalities(&vec![k; m_n * t_n])?;
    for m in 0..m_n {
        g.add_factor(vec![spec.var(m, 0)], spec.initial[m].clone())?;
        let trans: Vec<f64> = spec.transition[m].iter().flatten().copied().collect();
        for t in 1..t_n {
            g.add_factor(vec![spec.var(m, t - 1), spec.var(m, t)], trans.clone())?;
        }
    }
    for (t, e) in emissions.into_iter().enumerate() {
        g.add_factor((0..m_n).map(|m| spec.var(m, t)).collect(), e)?;
    }
    Ok(g)
}

/// The same posterior as a chain over joint time slices: variable `t` has
/// `K^M` states (chain 0 most significant). Factors: initial unary on slice
/// 0, one emission unary per slice, then slice transitions.
pub fn fhmm_slice_chain(spec: &FhmmSpec, observations: &[Vec<f64>], cap: usize) -> Result<FactorGraph> {
    let emissions = spec.emission_tables(observations, cap)?;
    let s = spec.num_slice_states();
    if s * s > cap as u128 {
        return Err(Error::capacity("fHMM slice transition table", s * s, cap));
    }
    let s = s as usize;
    let cards = vec![spec.num_states; spec.num_chains];
    let digits: Vec<Vec<usize>> = {
        let mut out = Vec::with_capacity(s);
        let mut odo = Odometer::new(&cards, Vec::new());
        loop {
            out.push(odo.digits().to_vec());
            if !odo.step() {
                break;
            }
        }
        out
    };
    let mut g = FactorGraph::with_cardinalities(&vec![s; spec.num_steps])?;
    let initial: Vec<f64> = digits
        .iter()
        .map(|d| d.iter().enumerate().map(|(m, &x)| spec.initial[m][x]).sum())
        .collect();
    g.add_factor(vec![0], initial)?;
    for (t, e) in emissions.into_iter().enumerate() {
        g.add_factor(vec![t], e)?;
    }
    if spec.num_steps > 1 {
        let mut trans = Vec::with_capacity(s * s);
        for a in &digits {
            for b in &digits {
                trans.push(
                    a.iter()
                        .zip(b)
                        .enumerate()
                        .map(|(m, (&x, &y))| spec.transition[m][x][y])
                        .sum(),
                );
            }
        }
        for t in 1..spec.num_steps {
            g.add_factor(vec![t - 1, t], trans.clone())?;
        }
    }
    Ok(g)
}

/// Per-chain marginals from slice marginals keyed by step.
pub fn project_slice_marginals(spec: &FhmmSpec, slices: &NodeMarginals) -> Result<NodeMarginals> {
    let k = spec.num_states;
    let mut out = NodeMarginals::new();
    for t in 0..spec.num_steps {
        let p = slices
            .get(&t)
            .ok_or_else(|| Error::domain(format!("missing slice marginal for step {t}")))?;
        for m in 0..spec.num_chains {
            let div = k.pow((spec.num_chains - 1 - m) as u32);
            let mut q = vec![0.0; k];
            for (s, &ps) in p.iter().enumerate() {
                q[(s / div) % k] += ps;
            }
            out.insert(spec.var(m, t), q);
        }
    }
    Ok(out)
}

/// A model family plus parameters, without the per-instance seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelRecipe {
    Ising {
        height: usize,
        width: usize,
        bias_range: (f64, f64),
        coupling_range: (f64, f64),
    },
    Sigmoid {
        layer_sizes: Vec<usize>,
        #[serde(default)]
        observed_layer_size: Option<usize>,
        weight_range: (f64, f64),
    },
    Fhmm {
        num_chains: usize,
        num_steps: usize,
        num_states: usize,
        output_dim: usize,
    },
}

/// A fully specified model instance; written beside generated models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Ising(IsingSpec),
    Sigmoid(SigmoidNetSpec),
    Fhmm {
        #[serde(flatten)]
        spec: FhmmSpec,
        observations: Vec<Vec<f64>>,
    },
}

impl ModelRecipe {
    pub fn instantiate(&self, seed: u64) -> Result<ModelSpec> {
        Ok(match self {
            ModelRecipe::Ising {
                height,
                width,
                bias_range,
                coupling_range,
            } => ModelSpec::Ising(IsingSpec {
                height: *height,
                width: *width,
                bias_range: *bias_range,
                coupling_range: *coupling_range,
                seed,
            }),
            ModelRecipe::Sigmoid {
                layer_sizes,
                observed_layer_size,
                weight_range,
            } => ModelSpec::Sigmoid(SigmoidNetSpec {
                layer_sizes: layer_sizes.clone(),
                observed_layer_size: *observed_layer_size,
                weight_range: *weight_range,
                seed,
            }),
            ModelRecipe::Fhmm {
                num_chains,
                num_steps,
                num_states,
                output_dim,
            } => {
                let spec = FhmmSpec::random(*num_chains, *num_steps, *num_states, *output_dim, seed)?;
                let (_, observations) = spec.sample(SplitMix64::derived(seed, 1).next_u64())?;
                ModelSpec::Fhmm { spec, observations }
            }
        })
    }
}

impl ModelSpec {
    /// Build the factor graph. Sigmoid networks with an observed layer
    /// carry evidence drawn by ancestral sampling from a derived stream.
    pub fn build(&self, cap: usize) -> Result<FactorGraph> {
        match self {
            ModelSpec::Ising(s) => make_ising(s),
            ModelSpec::Sigmoid(s) => {
                let net = make_sigmoid_net(s)?;
                let mut g = net.moralize();
                if let Some(observed) = s.layers().get(s.layer_sizes.len()) {
                    let x = sample_directed(&net, SplitMix64::derived(s.seed, 1).next_u64())?;
                    for &v in observed {
                        g.evidence.insert(v, x[v]);
                    }
                }
                Ok(g)
            }
            ModelSpec::Fhmm { spec, observations } => make_fhmm(spec, observations, cap),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModelSpec::Ising(s) => s.seed,
            ModelSpec::Sigmoid(s) => s.seed,
            ModelSpec::Fhmm { spec, .. } => spec.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{brute_force, variable_elimination, DEFAULT_CAP};

    #[test]
    fn ising_ranges_and_layout() {
        let g = make_ising(&IsingSpec::attractive(3, 4, 9)).unwrap();
        assert_eq!(g.num_variables(), 12);
        assert_eq!(g.factors.len(), 12 + 3 * 3 + 2 * 4);
        for f in &g.factors {
            match f.scope.len() {
                1 => assert!(f.log_table[0] == 0.0 && f.log_table[1].abs() < 0.25),
                _ => {
                    assert_eq!(&f.log_table[..3], &[0.0; 3]);
                    assert!(f.log_table[3] > 0.0 && f.log_table[3] < 2.0);
                }
            }
        }
        assert_eq!(g.factors[12].scope, vec![0, 1]);
        assert_eq!(g.factors[21].scope, vec![0, 4]);
        let r = make_ising(&IsingSpec::repulsive(3, 4, 9)).unwrap();
        assert!(r.factors[12..]
            .iter()
            .all(|f| f.log_table[3] < 0.0 && f.log_table[3] > -2.0));
        let one = make_ising(&IsingSpec::attractive(1, 1, 0)).unwrap();
        assert_eq!(one.factors.len(), 1);
        assert_eq!(
            make_ising(&IsingSpec::attractive(3, 4, 9))
                .unwrap()
                .to_json_string()
                .unwrap(),
            g.to_json_string().unwrap()
        );
    }

    #[test]
    fn sigmoid_structure_and_normalization() {
        let spec = SigmoidNetSpec {
            layer_sizes: vec![6, 6, 6],
            observed_layer_size: Some(10),
            weight_range: (0.0, 1.0),
            seed: 4,
        };
        let g = make_sigmoid_net(&spec).unwrap().moralize();
        assert_eq!(g.num_variables(), 28);
        assert!(g.factors.iter().all(|f| f.scope.len() <= 7));

        let small = SigmoidNetSpec {
            layer_sizes: vec![3, 3],
            observed_layer_size: Some(2),
            weight_range: (0.0, 1.0),
            seed: 2,
        };
        let z = brute_force(&make_sigmoid_net(&small).unwrap().moralize(), DEFAULT_CAP).unwrap();
        assert!(z.log_partition.abs() < 1e-10);
    }

    #[test]
    fn single_sigmoid_node_and_zero_weights() {
        let spec = SigmoidNetSpec {
            layer_sizes: vec![1],
            observed_layer_size: None,
            weight_range: (0.7, 0.7),
            seed: 0,
        };
        let g = make_sigmoid_net(&spec).unwrap().moralize();
        let m = brute_force(&g, DEFAULT_CAP).unwrap().node_marginals[&0].clone();
        let s = 1.0 / (1.0 + (-0.7f64).exp());
        assert!((m[1] - s).abs() < 1e-15 && (m[0] - (1.0 - s)).abs() < 1e-15);

        let zero = SigmoidNetSpec {
            layer_sizes: vec![2, 3],
            observed_layer_size: None,
            weight_range: (0.0, 0.0),
            seed: 0,
        };
        let ex = brute_force(&make_sigmoid_net(&zero).unwrap().moralize(), DEFAULT_CAP).unwrap();
        for m in ex.node_marginals.values() {
            assert!((m[1] - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn fan_in_cap() {
        let spec = SigmoidNetSpec {
            layer_sizes: vec![21, 1],
            observed_layer_size: None,
            weight_range: (0.0, 1.0),
            seed: 0,
        };
        assert!(matches!(make_sigmoid_net(&spec), Err(Error::Capacity { .. })));
    }

    #[test]
    fn deterministic_cpds_sample_consistently() {
        let vars = (0..2)
            .map(|id| Variable {
                id,
                cardinality: 2,
                name: None,
            })
            .collect();
        let ninf = f64::NEG_INFINITY;
        let cpds = vec![
            Cpd {
                child: 0,
                parents: vec![],
                log_table: vec![ninf, 0.0],
            },
            Cpd {
                child: 1,
                parents: vec![0],
                log_table: vec![0.0, ninf, ninf, 0.0],
            },
        ];
        let net = DirectedModel::new(vars, cpds).unwrap();
        for seed in 0..5 {
            assert_eq!(sample_directed(&net, seed).unwrap(), vec![1, 1]);
        }
    }

    #[test]
    fn uniform_graph_sampling_frequencies() {
        let g = FactorGraph::with_cardinalities(&[2, 2]).unwrap();
        let mut counts = [0usize; 4];
        let n = 100_000;
        for seed in 0..n {
            let x = sample_graph(&g, seed, DEFAULT_CAP).unwrap();
            counts[x[0] * 2 + x[1]] += 1;
        }
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 / 4.0).abs() < 3.0 * sigma);
        }
    }

    fn direct_log_evidence(spec: &FhmmSpec, obs: &[Vec<f64>]) -> f64 {
        let gauss = Gaussian::new(&spec.covariance).unwrap();
        let n = spec.num_chains * spec.num_steps;
        let cards = vec![spec.num_states; n];
        let mut odo = Odometer::new(&cards, Vec::new());
        let mut terms = Vec::new();
        loop {
            let x = odo.digits();
            let mut lp = 0.0;
            for m in 0..spec.num_chains {
                lp += spec.initial[m][x[spec.var(m, 0)]];
                for t in 1..spec.num_steps {
                    lp += spec.transition[m][x[spec.var(m, t - 1)]][x[spec.var(m, t)]];
                }
            }
            for (t, y) in obs.iter().enumerate() {
                let states: Vec<usize> = (0..spec.num_chains).map(|m| x[spec.var(m, t)]).collect();
                lp += gauss.log_density(DVector::from_column_slice(y) - spec.mean(&states));
            }
            terms.push(lp);
            if !odo.step() {
                break;
            }
        }
        log_sum_exp(&terms)
    }

    #[test]
    fn fhmm_evidence_mass_matches_direct_density() {
        let spec = FhmmSpec::random(2, 3, 2, 3, 11).unwrap();
        let (_, obs) = spec.sample(5).unwrap();
        let g = make_fhmm(&spec, &obs, DEFAULT_CAP).unwrap();
        let bf = brute_force(&g, DEFAULT_CAP).unwrap();
        assert!((bf.log_partition - direct_log_evidence(&spec, &obs)).abs() < 1e-8);
        let ve = variable_elimination(&g, &[0], DEFAULT_CAP).unwrap();
        assert!((ve.log_partition - bf.log_partition).abs() < 1e-10);
    }

    #[test]
    fn fhmm_slice_chain_matches_factored_graph() {
        let spec = FhmmSpec::random(2, 4, 3, 2, 3).unwrap();
        let (_, obs) = spec.sample(8).unwrap();
        let g = make_fhmm(&spec, &obs, DEFAULT_CAP).unwrap();
        let chain = fhmm_slice_chain(&spec, &obs, DEFAULT_CAP).unwrap();
        let a = brute_force(&g, DEFAULT_CAP).unwrap();
        let b = brute_force(&chain, DEFAULT_CAP).unwrap();
        assert!((a.log_partition - b.log_partition).abs() < 1e-10);
        let projected = project_slice_marginals(&spec, &b.node_marginals).unwrap();
        for (v, m) in &a.node_marginals {
            for (x, y) in m.iter().zip(&projected[v]) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_emission_weights_leave_prior() {
        let mut spec = FhmmSpec::random(2, 3, 2, 2, 1).unwrap();
        for w in &mut spec.emission_weights {
            for r in w.iter_mut() {
                r.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        let obs = vec![vec![0.3, -0.2]; 3];
        let g = make_fhmm(&spec, &obs, DEFAULT_CAP).unwrap();
        let ex = brute_force(&g, DEFAULT_CAP).unwrap();
        let p0: Vec<f64> = spec.initial[1].iter().map(|l| l.exp()).collect();
        for (x, y) in p0.iter().zip(&ex.node_marginals[&spec.var(1, 0)]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_covariance_rejected() {
        let mut spec = FhmmSpec::random(1, 2, 2, 2, 1).unwrap();
        spec.covariance = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(matches!(spec.validate(), Err(Error::Domain(_))));
        assert!(matches!(spec.sample(0), Err(Error::Domain(_))));
    }

    #[test]
    fn recipes_roundtrip() {
        let r: ModelRecipe =
            serde_json::from_str(r#"{"family":"fhmm","num_chains":2,"num_steps":3,"num_states":2,"output_dim":2}"#)
                .unwrap();
        let spec = r.instantiate(7).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        assert_eq!(
            spec.build(DEFAULT_CAP).unwrap().to_json_string().unwrap(),
            back.build(DEFAULT_CAP).unwrap().to_json_string().unwrap()
        );
        let s = ModelRecipe::Sigmoid {
            layer_sizes: vec![2, 2],
            observed_layer_size: Some(3),
            weight_range: (0.0, 1.0),
        }
        .instantiate(3)
        .unwrap();
        let g = s.build(DEFAULT_CAP).unwrap();
        assert_eq!(g.evidence.keys().copied().collect::<Vec<_>>(), vec![4, 5, 6]);
    }
}
