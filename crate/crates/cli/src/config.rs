//! Layered settings: built-in defaults, then an optional JSON file, then flags.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use scenesum::dataset::SyntheticConfig;
use scenesum::metrics::Integration;
use scenesum::pipeline::{Method, SummarizeConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateSettings {
    pub r_max: f64,
    pub steps: usize,
    pub integration: Integration,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        EvaluateSettings {
            r_max: 3.0,
            steps: 100,
            integration: Integration::Trapezoid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSettings {
    pub methods: Vec<Method>,
    pub ks: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            methods: Method::ALL.to_vec(),
            ks: vec![10, 20, 30, 40],
            seeds: vec![0, 1, 2, 3, 4],
        }
    }
}

/// Contents of a `--config` file. Every section and field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub generate: SyntheticConfig,
    pub summarize: SummarizeConfig,
    pub evaluate: EvaluateSettings,
    pub sweep: SweepSettings,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

pub fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}
