use std::path::Path;

use chartforge::dataset::{CsiDataset, SynthSpec};
use chartforge::train::TrainConfig;
use serde::{Deserialize, Serialize};

/// Windowing and split settings needed to rebuild a run's samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSettings {
    pub seq_len: usize,
    pub ratio: f64,
    pub standardize: bool,
    /// Seeds the split (and, for training, initialisation and shuffling).
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataRecord {
    pub path: String,
    /// `[N, links, 2, subcarriers, taps]`.
    pub shape: [usize; 5],
    pub sampling_interval: f64,
}

impl DataRecord {
    pub fn describe(path: &Path, d: &CsiDataset) -> Self {
        Self {
            path: path.display().to_string(),
            shape: d.shape().dims(),
            sampling_interval: d.sampling_interval,
        }
    }
}

/// Configuration snapshot plus every file a command produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<DataSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            synth: None,
            data: None,
            settings: None,
            train: None,
            artifacts: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serialises");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read manifest {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("malformed manifest {}: {e}", path.display()))
    }
}
