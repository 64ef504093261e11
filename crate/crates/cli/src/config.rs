use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use simgrade::{Algorithm, AssignmentConfig, EmbedConfig, PrepConfig, SimulationConfig};

use crate::Failure;

/// Every tunable of a run. Loaded from `--config`, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed shared by every stage; stage-level seed fields are overwritten with it.
    pub seed: u64,
    pub threads: Option<usize>,
    pub prep: PrepConfig,
    pub min_count: usize,
    pub embed: EmbedConfig,
    pub assignment: AssignmentConfig,
    pub simulation: SimulationConfig,
    pub algorithms: Vec<Algorithm>,
    pub n_repetitions: usize,
    pub bootstrap_trials: usize,
    pub analysis_window: usize,
    pub semantic_pairs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: None,
            prep: PrepConfig::default(),
            min_count: 1,
            embed: EmbedConfig::default(),
            assignment: AssignmentConfig::default(),
            simulation: SimulationConfig::default(),
            algorithms: Algorithm::ALL.to_vec(),
            n_repetitions: 20,
            bootstrap_trials: 100_000,
            analysis_window: 3,
            semantic_pairs: 100_000,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn sync_seeds(&mut self) {
        self.embed.seed = self.seed;
        self.assignment.seed = self.seed;
        self.simulation.seed = self.seed;
    }
}

/// Assigns `Some` values onto config fields.
macro_rules! override_fields {
    ($($target:expr => $value:expr),* $(,)?) => {
        $(if let Some(v) = $value {
            $target = v;
        })*
    };
}
pub(crate) use override_fields;
