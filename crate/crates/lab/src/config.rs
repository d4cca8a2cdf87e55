use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Everything needed to repeat a run. The worker count is deliberately
/// absent: outputs do not depend on it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    /// Built-in name, spec path, or variant parameters.
    pub spec: Option<String>,
    pub eta: Option<f64>,
    pub k: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub grid: Option<String>,
    pub seed: u64,
    pub restarts: Option<usize>,
    /// Command-specific settings.
    pub params: BTreeMap<String, serde_json::Value>,
    pub tolerances: BTreeMap<String, f64>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunConfig {
    pub fn new(command: &str, seed: u64) -> Self {
        RunConfig { command: command.to_string(), seed, ..Default::default() }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.params.insert(key.to_string(), serde_json::to_value(value).expect("plain data serializes"));
        self
    }

    pub fn tolerance(&mut self, key: &str, value: f64) -> &mut Self {
        self.tolerances.insert(key.to_string(), value);
        self
    }
}
