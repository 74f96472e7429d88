//! Config loading: built-in defaults, then the JSON file, then `--seed`
//! and `--set key=value` overrides, then typed deserialisation.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use graphflow::convergence_lab::{sample_measure, FigureConfig};
use graphflow::dynamics::{FluxRelation, Scheme};
use graphflow::energy::KernelSpec;
use graphflow::graph::{build_geometric_graph, BaseMeasure, Graph, GraphDocument, WeightKernel};
use graphflow::variational::SpeedSource;

use crate::CliError;

/// `seed` is the config key `--seed` writes to together with its value.
pub fn load<T: Serialize + DeserializeOwned>(defaults: &T, path: Option<&Path>, seed: Option<(&str, Value)>, sets: &[String]) -> Result<(T, Value), CliError> {
    let mut value = serde_json::to_value(defaults).expect("defaults serialise");
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("config: cannot read {}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text).map_err(|e| CliError::validation(format!("config: {}: {e}", path.display())))?;
        merge(&mut value, file);
    }
    if let Some((key, v)) = seed {
        set_path(&mut value, key, v)?;
    }
    for kv in sets {
        let (key, raw) = kv.split_once('=').ok_or_else(|| CliError::validation(format!("set: expected key=value, got `{kv}`")))?;
        // bare words are taken as strings, so `kernel=abs` works unquoted
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut value, key.trim(), parsed)?;
    }
    let typed: T = serde_json::from_value(value.clone()).map_err(|e| CliError::validation(format!("config: {e}")))?;
    // re-serialise so the echo shows normalised kernel names
    let echo = serde_json::to_value(&typed).expect("configs serialise");
    Ok((typed, echo))
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn set_path(value: &mut Value, key: &str, new: Value) -> Result<(), CliError> {
    let mut cur = value;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| CliError::validation(format!("{key}: `{part}` is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), new);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split yields at least one part")
}

/// Where the vertex set comes from: a sampled point cloud or a saved graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_file: Option<PathBuf>,
    pub density: String,
    pub n: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub weight_kernel: WeightKernel,
}

impl GraphConfig {
    pub fn build(&self) -> Result<(Graph, BaseMeasure), CliError> {
        if let Some(path) = &self.graph_file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("graph_file: cannot read {}: {e}", path.display())))?;
            let doc: GraphDocument = serde_json::from_str(&text).map_err(|e| CliError::validation(format!("graph_file: {e}")))?;
            return Ok(doc.into_parts()?);
        }
        if self.n == 0 {
            return Err(CliError::validation("n: needs at least one point".into()));
        }
        let pts = sample_measure(&self.density, self.n, self.seed)?;
        let g = build_geometric_graph(pts, self.epsilon, self.weight_kernel)?;
        let n = g.n();
        Ok((g, BaseMeasure::empirical(n)))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_file: Option<PathBuf>,
    pub density: String,
    pub n: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub weight_kernel: WeightKernel,
    pub kernel: KernelSpec,
    pub relation: FluxRelation,
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    /// Initial masses; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

impl SimulateConfig {
    pub fn graph(&self) -> GraphConfig {
        GraphConfig {
            graph_file: self.graph_file.clone(),
            density: self.density.clone(),
            n: self.n,
            seed: self.seed,
            epsilon: self.epsilon,
            weight_kernel: self.weight_kernel,
        }
    }
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let fig = FigureConfig::two_moon();
        Self {
            graph_file: None,
            density: fig.density,
            n: fig.n,
            seed: fig.seed,
            epsilon: fig.dynamics.epsilon,
            weight_kernel: fig.dynamics.weight_kernel,
            kernel: fig.dynamics.kernel,
            relation: fig.dynamics.relation,
            scheme: fig.dynamics.scheme,
            dt: fig.dynamics.dt,
            t_end: fig.t_end,
            record_every: fig.record_every,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeGiorgiConfig {
    pub run: SimulateConfig,
    pub speed_source: SpeedSource,
    /// PASS needs |G_T| within this fraction of |ΔE| + both integrals.
    pub relative_tolerance: f64,
}

impl Default for DeGiorgiConfig {
    fn default() -> Self {
        let mut run = SimulateConfig::default();
        run.n = 60;
        run.t_end = 5.0;
        run.dt = 0.01;
        run.scheme = Scheme::Rk4;
        run.record_every = 1;
        Self { run, speed_source: SpeedSource::RecordedFlux, relative_tolerance: 1e-6 }
    }
}

/// Inline graph for small quasi-metric problems.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphDocument>,
    /// Probability vectors; every ordered pair is solved.
    pub measures: Vec<Vec<f64>>,
    pub m_steps: usize,
    pub tolerance: f64,
    pub max_iters: usize,
    /// Unused by the solver; recorded for re-runs.
    pub seed: u64,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            graph_file: None,
            graph: Some(GraphDocument { positions: vec![vec![0.0], vec![1.0]], edges: vec![(0, 1, 1.0)], mu: vec![0.1, 0.5] }),
            measures: vec![vec![0.2, 0.8], vec![0.8, 0.2]],
            m_steps: 64,
            tolerance: 1e-8,
            max_iters: 20_000,
            seed: 0,
        }
    }
}

impl DistanceConfig {
    pub fn build(&self) -> Result<(Graph, BaseMeasure), CliError> {
        match (&self.graph_file, &self.graph) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("graph_file: cannot read {}: {e}", path.display())))?;
                let doc: GraphDocument = serde_json::from_str(&text).map_err(|e| CliError::validation(format!("graph_file: {e}")))?;
                Ok(doc.into_parts()?)
            }
            (None, Some(doc)) => Ok(doc.clone().into_parts()?),
            (None, None) => Err(CliError::validation("graph: give either graph or graph_file".into())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionsConfig {
    pub graph: GraphConfig,
    pub eps_grid: Vec<f64>,
}

impl Default for AssumptionsConfig {
    fn default() -> Self {
        Self { graph: SimulateConfig::default().graph(), eps_grid: graphflow::graph::DEFAULT_EPS_GRID.to_vec() }
    }
}
