//! Experiment configuration: a structured text document with `env`, `im`,
//! `shaper` and `train` sections, plus dotted-path overrides of the form
//! `--set key=value`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use opshape_core::env::{build_env, BuiltEnv, EnvError, EnvKind, EnvSpec};
use opshape_core::intrinsic::ImConfig;
use opshape_core::learner::TrainConfig;
use opshape_core::shaping::ShaperConfig;
use opshape_core::specfile::{self, SpecError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("config does not parse: {0}")]
    Parse(String),

    #[error("invalid value for key `{key}`: {message}")]
    BadKey { key: String, message: String },

    #[error("seeds must be nonempty and distinct")]
    BadSeeds,

    #[error("env section must name either `builtin` or `file`")]
    MissingEnv,

    #[error(transparent)]
    Env(#[from] EnvError),

    #[error(transparent)]
    Spec(#[from] SpecError),
}

/// Where the environment comes from: a bundled builder or an MDP document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvSection {
    /// Bundled environment shortcut.
    #[serde(default)]
    pub builtin: Option<EnvKind>,
    /// Path to an MDP document.
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub width: Option<usize>,
    #[serde(default)]
    pub height: Option<usize>,
    #[serde(default)]
    pub length: Option<usize>,
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub gamma_e: Option<f64>,
    #[serde(default)]
    pub noisy_cells: Option<Vec<usize>>,
    #[serde(default)]
    pub goal_reward: Option<f64>,
    #[serde(default)]
    pub step_cost: Option<f64>,
    #[serde(default)]
    pub cliff_penalty: Option<f64>,
    #[serde(default)]
    pub left_reward: Option<f64>,
    #[serde(default)]
    pub right_reward: Option<f64>,
}

/// One experiment: environment, intrinsic stream, shaper, training loop,
/// seeds and output location.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub output: PathBuf,
    pub seeds: Vec<u64>,
    pub env: EnvSection,
    pub im: ImConfig,
    pub shaper: ShaperConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::BadSeeds);
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().cloned().collect();
        if distinct.len() != self.seeds.len() {
            return Err(ConfigError::BadSeeds);
        }
        if self.env.builtin.is_none() && self.env.file.is_none() {
            return Err(ConfigError::MissingEnv);
        }
        Ok(())
    }

    /// Materialize the environment this config names.
    pub fn build_env(&self, config_dir: &Path) -> Result<BuiltEnv, ConfigError> {
        if let Some(kind) = self.env.builtin {
            let spec = EnvSpec {
                kind,
                width: self.env.width,
                height: self.env.height,
                length: self.env.length,
                horizon: self.env.horizon,
                gamma_e: self.env.gamma_e,
                noisy_cells: self.env.noisy_cells.clone(),
                goal_reward: self.env.goal_reward,
                step_cost: self.env.step_cost,
                cliff_penalty: self.env.cliff_penalty,
                left_reward: self.env.left_reward,
                right_reward: self.env.right_reward,
            };
            return Ok(build_env(&spec)?);
        }
        let rel = self.env.file.as_ref().ok_or(ConfigError::MissingEnv)?;
        let path = if rel.is_absolute() { rel.clone() } else { config_dir.join(rel) };
        let text = std::fs::read_to_string(&path)
            .map_err(|source| ConfigError::Io { path: path.clone(), source })?;
        let mdp = specfile::mdp_from_str(&text)?;
        let num_states = mdp.num_states();
        Ok(BuiltEnv {
            mdp,
            name: path.file_stem().map_or("mdp".into(), |s| s.to_string_lossy().into_owned()),
            decision_state: 0,
            noisy_cells: BTreeSet::new(),
            state_labels: (0..num_states).map(|s| format!("s{s}")).collect(),
        })
    }
}

/// Parse a config document, apply `--set key=value` overrides, validate.
pub fn load_config(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut value: toml::Value =
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    for entry in overrides {
        apply_override(&mut value, entry)?;
    }
    let config: RunConfig = value.try_into().map_err(|e| ConfigError::Parse(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config_file(path: &Path, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    load_config(&text, overrides)
}

/// Apply one `key.path=value` override to a parsed document. The value text
/// is itself parsed as a document fragment, so strings, numbers, booleans
/// and arrays all work.
fn apply_override(root: &mut toml::Value, entry: &str) -> Result<(), ConfigError> {
    let (key, raw) = entry.split_once('=').ok_or_else(|| ConfigError::BadKey {
        key: entry.to_string(),
        message: "expected key=value".into(),
    })?;
    let key = key.trim();
    let fragment = format!("x = {raw}");
    let parsed: toml::Value = toml::from_str(&fragment)
        .or_else(|_| toml::from_str(&format!("x = {raw:?}")))
        .map_err(|e| ConfigError::BadKey { key: key.to_string(), message: e.to_string() })?;
    let new_value = parsed.get("x").cloned().ok_or_else(|| ConfigError::BadKey {
        key: key.to_string(),
        message: "empty value".into(),
    })?;

    let mut cursor = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cursor.as_table_mut().ok_or_else(|| ConfigError::BadKey {
            key: key.to_string(),
            message: format!("`{}` is not a table", parts[..i].join(".")),
        })?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), new_value);
            return Ok(());
        }
        cursor = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    Ok(())
}
