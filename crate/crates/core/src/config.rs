//! Suite-wide TOML configuration.
//!
//! Every field has a default, so an empty file is a valid config. Unknown keys
//! are rejected at every level. `--set a.b.c=value` overrides are applied to
//! the parsed document before it is deserialized, so they go through the same
//! key checking as the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::BenchConfig;
use crate::disturbance::DisturbanceProfile;
use crate::dynamics::PlatformParams;
use crate::env::EnvConfig;
use crate::lqr::LqrConfig;
use crate::ppo::PpoConfig;
use crate::tracker::TrackerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("bad override {0:?}: expected dotted.key=value")]
    Override(String),
    #[error("override {key}: {reason}")]
    OverridePath { key: String, reason: String },
    #[error("invalid value for {section}: {reason}")]
    Invalid { section: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub platform: PlatformParams,
    pub disturbance: DisturbanceProfile,
    pub env: EnvConfig,
    pub ppo: PpoConfig,
    pub lqr: LqrConfig,
    pub tracker: TrackerConfig,
    pub bench: BenchConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            platform: PlatformParams::default(),
            disturbance: DisturbanceProfile::default(),
            env: EnvConfig::default(),
            ppo: PpoConfig::default(),
            lqr: LqrConfig::default(),
            tracker: TrackerConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

/// Parses the right-hand side of an override as a TOML value, falling back to
/// a bare string (`--set tracker.lemniscate=bernoulli`).
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Sets `key` (dotted) in `doc`, creating intermediate tables.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.into()))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(spec.into()));
    }
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut table = doc;
    for p in path {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match entry {
            toml::Value::Table(t) => t,
            _ => {
                return Err(ConfigError::OverridePath {
                    key: key.into(),
                    reason: format!("{p} is not a section"),
                })
            }
        };
    }
    table.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

impl SuiteConfig {
    /// Parses a TOML document with overrides applied on top.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: SuiteConfig = doc.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path` (or the defaults when `None`) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                path: p.to_path_buf(),
                source,
            })?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |section: &'static str| move |e: String| ConfigError::Invalid { section, reason: e };
        self.platform.validate().map_err(|e| invalid("platform")(e.to_string()))?;
        self.disturbance.validate().map_err(|e| invalid("disturbance")(e.to_string()))?;
        self.env.reward.validate().map_err(invalid("env.reward"))?;
        if self.env.episode_len == 0 {
            return Err(invalid("env")("episode_len must be positive".into()));
        }
        self.ppo.validate().map_err(|e| invalid("ppo")(e.to_string()))?;
        self.lqr.validate().map_err(|e| invalid("lqr")(e.to_string()))?;
        let t = &self.tracker;
        if !(t.size > 0.0 && t.lookahead_r > 0.0 && t.target_speed > 0.0 && t.spacing > 0.0) {
            return Err(invalid("tracker")("size, lookahead_r, target_speed and spacing must be positive".into()));
        }
        if self.bench.trajectories == 0 || self.bench.episode_len == 0 {
            return Err(invalid("bench")("trajectories and episode_len must be positive".into()));
        }
        Ok(())
    }

    /// The resolved config as TOML, written next to every output.
    pub fn snapshot(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
