use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// File names inside a run directory, relative to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunPaths {
    pub config: String,
    pub tasks: String,
    pub metrics_jsonl: String,
    pub metrics_csv: String,
    pub final_checkpoint: String,
    pub checkpoints: Vec<String>,
}

impl Default for RunPaths {
    fn default() -> Self {
        Self {
            config: "config.toml".into(),
            tasks: "tasks.json".into(),
            metrics_jsonl: "metrics.jsonl".into(),
            metrics_csv: "metrics.csv".into(),
            final_checkpoint: "final.policy".into(),
            checkpoints: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub status: RunStatus,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub error: Option<String>,
    /// TOML text of the full configuration, parseable with `ExperimentConfig::from_toml`.
    pub config: String,
    pub paths: RunPaths,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Content hash of the configuration: equal configs share a run id.
pub fn run_id(config: &ExperimentConfig) -> String {
    let digest = Sha256::digest(config.to_toml().as_bytes());
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("{}-s{}-{hex}", config.train.mode.name().to_ascii_lowercase(), config.train.seed)
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(config: &ExperimentConfig) -> Self {
        Self {
            run_id: run_id(config),
            status: RunStatus::Running,
            started_at: now(),
            finished_at: None,
            error: None,
            config: config.to_toml(),
            paths: RunPaths::default(),
        }
    }

    pub fn config(&self) -> Result<ExperimentConfig, crate::error::CliError> {
        ExperimentConfig::from_toml(&self.config)
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")
    }

    pub fn read(dir: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}
