//! Run report shared by every inference routine.

use serde::{Deserialize, Serialize};

use crate::exact::NodeMarginals;

/// JSON run report. `sweeps` counts GMF sweeps or BP iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elbo: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub elbo_trace: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_partition: Option<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub node_marginals: NodeMarginals,
    pub wall_time_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restart_index: Option<usize>,
}
