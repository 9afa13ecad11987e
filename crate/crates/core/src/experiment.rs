//! Evaluation protocol: L1 marginal error, partition schemes, and the
//! multi-trial experiment runner with CSV and summary output.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bp::{run_bp, BpConfig};
use crate::clustering::{chain_groups, greedy_edge_cut, grid_blocks, layer_rows, CutObjective, Partition};
use crate::error::{Error, Result};
use crate::exact::{all_node_marginals, NodeMarginals, DEFAULT_CAP};
use crate::factor_graph::FactorGraph;
use crate::gmf::{run_gmf, GmfConfig, Init};
use crate::models::{fhmm_slice_chain, project_slice_marginals, ModelRecipe, ModelSpec};

/// Mean absolute marginal error per state: `(1/Σ M_i) Σ_i Σ_k |p_ik − q_ik|`.
pub fn l1_error(exact: &NodeMarginals, approx: &NodeMarginals) -> Result<f64> {
    if exact.len() != approx.len() || exact.keys().zip(approx.keys()).any(|(a, b)| a != b) {
        return Err(Error::domain("marginals cover different variable sets"));
    }
    let mut states = 0usize;
    let mut total = 0.0;
    for (v, p) in exact {
        let q = &approx[v];
        if p.len() != q.len() {
            return Err(Error::domain(format!(
                "variable {v}: cardinality {} vs {}",
                p.len(),
                q.len()
            )));
        }
        states += p.len();
        total += p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(if states == 0 { 0.0 } else { total / states as f64 })
}

/// Named partition: `singletons`, `single`, `blocks:HxW`, `rows`,
/// `chains:K`, `mincut:k=K[:seed=S]`, `maxcut:k=K[:seed=S]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionScheme {
    Singletons,
    Single,
    Blocks(usize, usize),
    Rows,
    Chains(usize),
    Cut {
        objective: CutObjective,
        clusters: usize,
        seed: u64,
    },
}

fn parse_num<T: std::str::FromStr>(s: &str, scheme: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::domain(format!("bad number '{s}' in partition scheme '{scheme}'")))
}

impl std::str::FromStr for PartitionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let head = parts.next().unwrap_or_default();
        let rest: Vec<&str> = parts.collect();
        let bad = || Error::domain(format!("unknown partition scheme '{s}'"));
        match (head, rest.as_slice()) {
            ("singletons", []) => Ok(PartitionScheme::Singletons),
            ("single", []) => Ok(PartitionScheme::Single),
            ("rows", []) => Ok(PartitionScheme::Rows),
            ("blocks", [dims]) => {
                let (h, w) = dims.split_once('x').ok_or_else(bad)?;
                Ok(PartitionScheme::Blocks(parse_num(h, s)?, parse_num(w, s)?))
            }
            ("chains", [k]) => Ok(PartitionScheme::Chains(parse_num(k, s)?)),
            ("mincut" | "maxcut", opts) => {
                let mut clusters = None;
                let mut seed = 0;
                for o in opts {
                    match o.split_once('=') {
                        Some(("k", v)) => clusters = Some(parse_num(v, s)?),
                        Some(("seed", v)) => seed = parse_num(v, s)?,
                        _ => return Err(bad()),
                    }
                }
                let objective = if head == "mincut" {
                    CutObjective::MinCut
                } else {
                    CutObjective::MaxCut
                };
                Ok(PartitionScheme::Cut {
                    objective,
                    clusters: clusters.ok_or_else(bad)?,
                    seed,
                })
            }
            _ => Err(bad()),
        }
    }
}

fn square_side(n: usize) -> Option<usize> {
    let s = (n as f64).sqrt().round() as usize;
    (s * s == n).then_some(s)
}

impl PartitionScheme {
    /// Resolve against a graph, using the model spec for layout when given.
    /// Without a spec, grid schemes assume a square grid.
    pub fn resolve(&self, graph: &FactorGraph, spec: Option<&ModelSpec>) -> Result<Partition> {
        let n = graph.num_variables();
        let no_layout = || Error::domain(format!("partition scheme {self:?} needs a model layout"));
        let grid = || -> Result<(usize, usize)> {
            match spec {
                Some(ModelSpec::Ising(s)) => Ok((s.height, s.width)),
                None => square_side(n).map(|s| (s, s)).ok_or_else(no_layout),
                _ => Err(no_layout()),
            }
        };
        let p = match self {
            PartitionScheme::Singletons => Partition::singletons(n),
            PartitionScheme::Single => Partition::single(n),
            PartitionScheme::Blocks(bh, bw) => match spec {
                Some(ModelSpec::Sigmoid(s)) => {
                    let width = s.layer_sizes[0];
                    if s.layer_sizes.iter().any(|&w| w != width) {
                        return Err(Error::domain(
                            "block partition of a sigmoid net needs equal-width hidden layers",
                        ));
                    }
                    let hidden = grid_blocks(s.layer_sizes.len(), width, *bh, *bw)?;
                    let mut clusters = hidden.clusters().to_vec();
                    let observed: Vec<usize> = (hidden.num_variables()..n).collect();
                    if !observed.is_empty() {
                        clusters.push(observed);
                    }
                    Partition::new(clusters, n)?
                }
                _ => {
                    let (h, w) = grid()?;
                    grid_blocks(h, w, *bh, *bw)?
                }
            },
            PartitionScheme::Rows => match spec {
                Some(ModelSpec::Sigmoid(s)) => {
                    let sizes: Vec<usize> = s.layers().iter().map(Vec::len).collect();
                    layer_rows(&sizes)?
                }
                _ => {
                    let (h, w) = grid()?;
                    layer_rows(&vec![w; h])?
                }
            },
            PartitionScheme::Chains(k) => match spec {
                Some(ModelSpec::Fhmm { spec, .. }) => chain_groups(spec.num_chains, *k, spec.num_steps)?,
                _ => return Err(no_layout()),
            },
            PartitionScheme::Cut {
                objective,
                clusters,
                seed,
            } => greedy_edge_cut(graph, *clusters, *objective, *seed)?,
        };
        if p.num_variables() != n {
            return Err(Error::domain(format!(
                "partition covers {} variables but the model has {n}",
                p.num_variables()
            )));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Exact,
    Gmf,
    Mf,
    Bp,
    /// BP on the fHMM time-slice chain, projected to per-chain marginals.
    BpSlices,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub id: String,
    pub kind: AlgorithmKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Panel {
    pub name: String,
    pub model: ModelRecipe,
    pub algorithms: Vec<AlgorithmSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmfSettings {
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub restarts: usize,
    pub init: Init,
}

impl Default for GmfSettings {
    fn default() -> Self {
        let d = GmfConfig::default();
        GmfSettings {
            tolerance: d.tolerance,
            max_sweeps: d.max_sweeps,
            restarts: d.restarts,
            init: d.init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpSettings {
    pub tolerance: f64,
    pub max_iters: usize,
    pub damping: f64,
}

impl Default for BpSettings {
    fn default() -> Self {
        let d = BpConfig::default();
        BpSettings {
            tolerance: d.tolerance,
            max_iters: d.max_iters,
            damping: d.damping,
        }
    }
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub num_trials: usize,
    pub base_seed: u64,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default)]
    pub gmf: GmfSettings,
    #[serde(default)]
    pub bp: BpSettings,
    pub panels: Vec<Panel>,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let config: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.panels.is_empty() {
            return Err(Error::domain("experiment needs at least one panel"));
        }
        for p in &self.panels {
            for a in &p.algorithms {
                if a.kind == AlgorithmKind::Gmf {
                    let scheme = a
                        .partition
                        .as_deref()
                        .ok_or_else(|| Error::domain(format!("algorithm '{}' needs a partition", a.id)))?;
                    scheme.parse::<PartitionScheme>()?;
                }
                if a.kind == AlgorithmKind::BpSlices && !matches!(p.model, ModelRecipe::Fhmm { .. }) {
                    return Err(Error::domain(format!(
                        "algorithm '{}': bp_slices needs an fHMM model",
                        a.id
                    )));
                }
            }
        }
        Ok(())
    }

    fn gmf_config(&self, seed: u64) -> GmfConfig {
        GmfConfig {
            tolerance: self.gmf.tolerance,
            max_sweeps: self.gmf.max_sweeps,
            init: self.gmf.init,
            seed,
            restarts: self.gmf.restarts,
            cap: self.cap,
        }
    }

    fn bp_config(&self, seed: u64) -> BpConfig {
        BpConfig {
            tolerance: self.bp.tolerance,
            max_iters: self.bp.max_iters,
            damping: self.bp.damping,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub algorithm: String,
    pub trial: usize,
    pub seed: u64,
    pub l1: f64,
    pub converged: bool,
    pub time_ms: f64,
    pub elbo: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation (divides by n).
    pub std: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub mean_time_ms: f64,
}

impl SummaryStats {
    pub fn from_values(values: &[f64], times: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf).sqrt();
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Some(SummaryStats {
            n,
            mean,
            std,
            median,
            min: sorted[0],
            max: sorted[n - 1],
            mean_time_ms: if times.is_empty() {
                0.0
            } else {
                times.iter().sum::<f64>() / times.len() as f64
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub converged: usize,
    #[serde(flatten)]
    pub stats: SummaryStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub num_trials: usize,
    pub base_seed: u64,
    pub infeasible_trials: usize,
    pub notes: Vec<String>,
    pub algorithms: Vec<AlgorithmSummary>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summary: ExperimentSummary,
}

/// Outcome of one algorithm on one model instance.
#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub node_marginals: NodeMarginals,
    pub converged: bool,
    pub time_ms: f64,
    pub elbo: Option<f64>,
}

/// Run one configured algorithm on an instance; the time covers the
/// inference call only.
pub fn run_algorithm(
    alg: &AlgorithmSpec,
    spec: &ModelSpec,
    graph: &FactorGraph,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<AlgorithmRun> {
    let partition = match (alg.kind, &alg.partition) {
        (AlgorithmKind::Gmf, Some(s)) => Some(s.parse::<PartitionScheme>()?.resolve(graph, Some(spec))?),
        (AlgorithmKind::Gmf, None) => return Err(Error::domain(format!("algorithm '{}' needs a partition", alg.id))),
        _ => None,
    };
    let start = Instant::now();
    let (node_marginals, converged, elbo) = match alg.kind {
        AlgorithmKind::Exact => (all_node_marginals(graph, config.cap)?.node_marginals, true, None),
        AlgorithmKind::Gmf | AlgorithmKind::Mf => {
            let p = partition.unwrap_or_else(|| Partition::singletons(graph.num_variables()));
            let r = run_gmf(graph, &p, &config.gmf_config(seed))?;
            (r.node_marginals, r.converged, Some(r.elbo))
        }
        AlgorithmKind::Bp => {
            let r = run_bp(graph, &config.bp_config(seed))?;
            (r.node_marginals, r.converged, None)
        }
        AlgorithmKind::BpSlices => {
            let ModelSpec::Fhmm { spec, observations } = spec else {
                return Err(Error::domain("bp_slices needs an fHMM model"));
            };
            let chain = fhmm_slice_chain(spec, observations, config.cap)?;
            let r = run_bp(&chain, &config.bp_config(seed))?;
            (project_slice_marginals(spec, &r.node_marginals)?, r.converged, None)
        }
    };
    Ok(AlgorithmRun {
        node_marginals,
        converged,
        time_ms: start.elapsed().as_secs_f64() * 1e3,
        elbo,
    })
}

fn notes_for(config: &ExperimentConfig) -> Vec<String> {
    let mut notes = vec!["std is the population standard deviation".to_string()];
    let mut seen = |n: &str| {
        if !notes.iter().any(|x| x == n) {
            notes.push(n.to_string());
        }
    };
    for p in &config.panels {
        match p.model {
            ModelRecipe::Sigmoid { .. } => {
                seen("sigmoid biases are drawn from the weight range");
                seen("observed sigmoid layers are sampled ancestrally from the trial's model");
                seen("bp runs on the factor graph of the moralized network");
            }
            ModelRecipe::Fhmm { .. } => {
                seen("fHMM parameters are random: normalized uniform(0,1) transition rows, uniform(-1,1) emission weights, identity covariance scaled by uniform(0.5,2)");
                seen("bp_slices runs BP on the chain of joint time slices");
            }
            ModelRecipe::Ising { .. } => {}
        }
    }
    notes
}

/// Run every panel for `num_trials` trials with seeds `base_seed + trial`.
/// Trials whose oracle exceeds the cap are skipped and counted.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let mut records = Vec::new();
    let mut infeasible = 0;
    let multi = config.panels.len() > 1;
    for panel in &config.panels {
        for trial in 0..config.num_trials {
            let seed = config.base_seed.wrapping_add(trial as u64);
            let spec = panel.model.instantiate(seed)?;
            let graph = spec.build(config.cap)?;
            let oracle = match all_node_marginals(&graph, config.cap) {
                Ok(o) => o,
                Err(Error::Capacity { .. }) => {
                    log::warn!("panel {} trial {trial}: oracle infeasible, skipped", panel.name);
                    infeasible += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            for alg in &panel.algorithms {
                let run = run_algorithm(alg, &spec, &graph, config, seed)?;
                let l1 = l1_error(&oracle.node_marginals, &run.node_marginals)?;
                records.push(TrialRecord {
                    algorithm: if multi {
                        format!("{}/{}", panel.name, alg.id)
                    } else {
                        alg.id.clone()
                    },
                    trial,
                    seed,
                    l1,
                    converged: run.converged,
                    time_ms: run.time_ms,
                    elbo: run.elbo,
                });
            }
            log::info!("{} trial {trial} done", panel.name);
        }
    }
    let summary = summarize(config, &records, infeasible);
    Ok(ExperimentOutput { records, summary })
}

fn summarize(config: &ExperimentConfig, records: &[TrialRecord], infeasible: usize) -> ExperimentSummary {
    let mut names: Vec<&str> = Vec::new();
    for r in records {
        if !names.contains(&r.algorithm.as_str()) {
            names.push(&r.algorithm);
        }
    }
    let algorithms = names
        .into_iter()
        .filter_map(|name| {
            let rows: Vec<&TrialRecord> = records.iter().filter(|r| r.algorithm == name).collect();
            let l1: Vec<f64> = rows.iter().map(|r| r.l1).collect();
            let times: Vec<f64> = rows.iter().map(|r| r.time_ms).collect();
            SummaryStats::from_values(&l1, &times).map(|stats| AlgorithmSummary {
                algorithm: name.to_string(),
                converged: rows.iter().filter(|r| r.converged).count(),
                stats,
            })
        })
        .collect();
    ExperimentSummary {
        name: config.name.clone(),
        num_trials: config.num_trials,
        base_seed: config.base_seed,
        infeasible_trials: infeasible,
        notes: notes_for(config),
        algorithms,
    }
}

pub const CSV_HEADER: &str = "algorithm,trial,seed,l1,converged,time_ms,elbo";

impl ExperimentOutput {
    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let elbo = r.elbo.map(|e| e.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.algorithm, r.trial, r.seed, r.l1, r.converged, r.time_ms, elbo
            );
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.summary)?;
        s.push('\n');
        Ok(s)
    }

    /// Write `results.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.csv"), self.csv())?;
        std::fs::write(dir.join("summary.json"), self.summary_json()?)?;
        Ok(())
    }
}
