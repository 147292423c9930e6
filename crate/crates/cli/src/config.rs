//! Experiment configuration: a TOML file with `[train]`, `[env]` and
//! `[output]` tables, plus `--section.key value` overrides.

use std::path::Path;

use mgrpo_core::env::EnvConfig;
use mgrpo_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write a policy checkpoint every this many steps; 0 keeps only the final one.
    pub checkpoint_interval: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub env: EnvConfig,
    pub output: OutputConfig,
}

/// One `--path value` pair from the command line.
#[derive(Clone, Debug, PartialEq)]
pub struct Override {
    pub path: String,
    pub value: String,
}

impl Override {
    /// Accepts `section.key` paths as written, and bare `kebab-name` as a
    /// shorthand for `train.kebab_name`.
    pub fn new(flag: &str, value: &str) -> Self {
        let name = flag.trim_start_matches('-');
        let path = if name.contains('.') {
            name.to_string()
        } else {
            format!("train.{}", name.replace('-', "_"))
        };
        Self {
            path,
            value: value.to_string(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.env.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn with_overrides(&self, overrides: &[Override]) -> Result<Self, CliError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut tree = Value::try_from(self).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            set_path(&mut tree, &o.path, parse_scalar(&o.value))?;
        }
        let config: ExperimentConfig = tree
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("after overrides: {}", e.message())))?;
        config.validate()?;
        Ok(config)
    }
}

/// Interprets a flag value as a TOML literal, falling back to a bare string.
fn parse_scalar(raw: &str) -> Value {
    let probe = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&probe) {
        Ok(mut table) => table.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

fn set_path(tree: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("malformed override path `{path}`")));
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut node = tree;
    for key in parents {
        let table = node
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{path}`: `{key}` is not a table")))?;
        node = table
            .entry(key.to_string())
            .or_insert_with(|| Value::Table(Default::default()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| CliError::Config(format!("override `{path}`: parent is not a table")))?;
    // unset optional fields are absent from the tree, so a new key is allowed
    // here and rejected by deserialization if it is unknown
    table.insert(last.to_string(), value);
    Ok(())
}
