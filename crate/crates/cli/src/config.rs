//! Run configuration files: TOML with `[run]`, `[algo]` and `[tree]` sections.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use gbrl_core::algos::{AlgoConfig, TrainConfig, TreeParams};
use gbrl_core::envs::EnvKind;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Failure};

/// Presets shipped with the binary, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("cartpole_ppo", include_str!("../presets/cartpole_ppo.toml")),
    ("cartpole_a2c", include_str!("../presets/cartpole_a2c.toml")),
    ("cartpole_awr", include_str!("../presets/cartpole_awr.toml")),
    ("catgrid_ppo", include_str!("../presets/catgrid_ppo.toml")),
    ("pendulum_ppo", include_str!("../presets/pendulum_ppo.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub env: EnvKind,
    #[serde(default)]
    pub seed: u64,
    pub total_timesteps: u64,
    /// Boosting iterations between checkpoints; 0 disables them.
    #[serde(default)]
    pub checkpoint_interval: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_shared")]
    pub shared_ac: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_shared() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    #[serde(default)]
    pub algo: AlgoConfig,
    #[serde(default)]
    pub tree: TreeParams,
}

const SECTIONS: [&str; 3] = ["run", "algo", "tree"];

impl RunConfig {
    /// Parses config text, then applies `key=value` overrides. Keys are
    /// `section.key`, or a bare key that names a field of exactly one section.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::new(Failure::Config, e))?;
        for spec in overrides {
            apply_override(&mut table, spec)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::new(Failure::Config, anyhow!("{}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file, or an embedded preset written as `preset:<name>`.
    pub fn load(source: &str, overrides: &[String]) -> Result<Self, CliError> {
        let text = match source.strip_prefix("preset:") {
            Some(name) => preset(name)
                .ok_or_else(|| CliError::new(Failure::Config, anyhow!("unknown preset {name:?}")))?
                .to_owned(),
            None => read_text(Path::new(source))?,
        };
        Self::parse(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialize to TOML")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train_config().validate().map_err(|e| CliError::new(Failure::Invalid, e))?;
        if self.run.total_timesteps == 0 {
            return Err(CliError::new(Failure::Invalid, anyhow!("total_timesteps must be >= 1")));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            algo: self.algo.clone(),
            tree: self.tree,
            total_timesteps: self.run.total_timesteps,
            shared_ac: self.run.shared_ac,
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))
        .map_err(|e| CliError::new(Failure::Io, e))
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let fail = |msg: String| CliError::new(Failure::Config, anyhow!(msg));
    let spec = spec.strip_prefix("--").unwrap_or(spec);
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| fail(format!("override {spec:?} is not of the form key=value")))?;
    let (section, field) = match key.split_once('.') {
        Some((s, f)) if SECTIONS.contains(&s) => (s.to_owned(), f.to_owned()),
        Some(_) => return Err(fail(format!("unknown config section in {key:?}"))),
        None => (section_of(key).ok_or_else(|| fail(format!("unknown config key {key:?}")))?, key.to_owned()),
    };
    // Values are TOML literals; anything else is taken as a bare string.
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let entry = table
        .entry(section)
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(section) = entry else {
        return Err(fail(format!("config entry for {key:?} is not a section")));
    };
    section.insert(field, value);
    Ok(())
}

/// The one section whose fields include `key`.
fn section_of(key: &str) -> Option<String> {
    let defaults = RunConfig {
        run: RunSection {
            env: EnvKind::CartPole,
            seed: 0,
            total_timesteps: 1,
            checkpoint_interval: 0,
            output_dir: default_output_dir(),
            shared_ac: true,
        },
        algo: AlgoConfig {
            total_iterations: Some(0),
            ..AlgoConfig::default()
        },
        tree: TreeParams::default(),
    };
    let toml::Value::Table(all) = toml::Value::try_from(&defaults).ok()? else {
        return None;
    };
    let hits: Vec<&String> = all
        .iter()
        .filter(|(_, v)| v.as_table().is_some_and(|t| t.contains_key(key)))
        .map(|(s, _)| s)
        .collect();
    match hits.as_slice() {
        [one] => Some((*one).clone()),
        _ => None,
    }
}
