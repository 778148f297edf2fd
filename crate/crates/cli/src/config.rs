use std::path::Path;

use anyhow::{Context, Result};
use qcbb::engine::{ClockMode, SolverConfig};
use serde::{Deserialize, Serialize};

/// Run settings read from a JSON file. Every key is optional and uses the
/// flag's name with underscores; command-line flags win over the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub p: Option<usize>,
    pub shots: Option<u64>,
    pub node_queries: Option<usize>,
    pub node_limit: Option<usize>,
    pub time_limit: Option<f64>,
    pub gap: Option<f64>,
    pub seed: Option<u64>,
    pub warm_start: Option<bool>,
    pub workers: Option<usize>,
    pub clock: Option<ClockMode>,
    pub no_bound_pruning: Option<bool>,
    pub vqa_on_pruned_nodes: Option<bool>,
    pub queries: Option<usize>,
    pub instance: Option<String>,
    pub trace: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flag values as parsed; `None` means not given.
#[derive(Debug, Clone, Default)]
pub struct FlagConfig {
    pub p: Option<usize>,
    pub shots: Option<u64>,
    pub node_queries: Option<usize>,
    pub node_limit: Option<usize>,
    pub time_limit: Option<f64>,
    pub gap: Option<f64>,
    pub seed: Option<u64>,
    pub warm_start: bool,
    pub workers: Option<usize>,
    pub clock: Option<ClockMode>,
    pub no_bound_pruning: bool,
    pub vqa_on_pruned_nodes: bool,
}

/// Seed precedence: flag, then config file, then `QCBB_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>, env: Option<&str>) -> Result<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .with_context(|| format!("QCBB_SEED is not an unsigned integer: {v:?}")),
        None => Ok(0),
    }
}

pub fn merge(flags: &FlagConfig, file: &FileConfig, env_seed: Option<&str>) -> Result<SolverConfig> {
    let d = SolverConfig::default();
    let config = SolverConfig {
        p: flags.p.or(file.p).unwrap_or(d.p),
        shots: flags.shots.or(file.shots).unwrap_or(d.shots),
        node_queries: flags.node_queries.or(file.node_queries).unwrap_or(d.node_queries),
        node_limit: flags.node_limit.or(file.node_limit),
        time_limit: flags.time_limit.or(file.time_limit),
        gap_target: flags.gap.or(file.gap),
        seed: resolve_seed(flags.seed, file.seed, env_seed)?,
        warm_start: flags.warm_start || file.warm_start.unwrap_or(d.warm_start),
        bound: d.bound,
        bound_pruning: !(flags.no_bound_pruning || file.no_bound_pruning.unwrap_or(false)),
        big_m_pruning: d.big_m_pruning,
        vqa_on_pruned_nodes: flags.vqa_on_pruned_nodes
            || file.vqa_on_pruned_nodes.unwrap_or(d.vqa_on_pruned_nodes),
        workers: flags.workers.or(file.workers).unwrap_or(d.workers),
        clock: flags.clock.or(file.clock).unwrap_or(d.clock),
    };
    config.validate()?;
    Ok(config)
}
