//! Run configuration: one JSON document covering the scene, the model and
//! training settings, the evaluation options, and the global seed, thread
//! count, and precision. Every field has a default, so an empty document
//! (or no file at all) is a valid starting point; command-line flags
//! override file values, and each command writes the fully resolved
//! configuration next to its outputs for reproducibility.

use std::fs;
use std::path::Path;

use anyhow::Context;
use pcst_core::metrics::MetricsOptions;
use pcst_core::synth::SceneSpec;
use pcst_core::trainer::{Precision, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Root seed every derived stream (scene, queries, init, sampling)
    /// descends from.
    pub seed: u64,
    /// Worker threads; 1 keeps every computation on the calling thread.
    pub threads: usize,
    /// Element type for model arithmetic. Files always store `f32`.
    pub precision: Precision,
    /// Synthetic scene the `generate` and `ablate` commands build.
    pub scene: SceneSpec,
    /// Training loop and embedded tracker settings.
    pub train: TrainConfig,
    /// Evaluation options for `eval` and `ablate`.
    pub metrics: MetricsOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 1,
            precision: Precision::default(),
            scene: SceneSpec::default(),
            train: TrainConfig::default(),
            metrics: MetricsOptions::default(),
        }
    }
}

impl RunConfig {
    /// Parse a JSON configuration file. Unknown fields are rejected only by
    /// structure (serde ignores extras), missing fields take defaults.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read configuration file {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("malformed configuration in {}", path.display()))
    }

    /// Copy the global seed and precision into the nested training
    /// configuration and the scene, so one flag steers every stage.
    pub fn resolve(&mut self) {
        self.scene.seed = self.seed;
        self.train.seed = self.seed;
        self.train.precision = self.precision;
        self.train.tracker.auxiliary.seed = self.seed;
    }

    /// Check every nested section; must be called after [`Self::resolve`].
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.threads == 0 {
            anyhow::bail!("threads must be at least 1");
        }
        self.scene.validate().context("scene configuration")?;
        self.train.validate().context("training configuration")?;
        Ok(())
    }

    /// Write the resolved configuration as pretty JSON.
    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)
            .with_context(|| format!("cannot write configuration to {}", path.display()))
    }
}
