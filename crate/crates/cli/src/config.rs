//! Run configuration file and the file < environment < flag override chain.

use std::fs;
use std::path::Path;

use anyhow::Result;
use cdfa_core::data::SynthConfig;
use cdfa_core::trainer::TrainConfig;
use cdfa_core::CdfaError;
use log::info;
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "CDFA_SEED";

/// Top-level TOML document. Every section is optional and falls back to the
/// defaults printed by `--help`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    /// Ablation preset applied on top of `[train]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub synth: SynthConfig,
    pub train: TrainConfig,
}

impl RunConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            info!("config file: none, using built-in defaults");
            return Ok(RunConfigFile::default());
        };
        let text = fs::read_to_string(path).map_err(|e| {
            CdfaError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: RunConfigFile = toml::from_str(&text)
            .map_err(|e| CdfaError::Config(format!("{}: {e}", path.display())))?;
        info!("config file: {}", path.display());
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }
}

/// The defaults as a TOML block for `--help`.
pub fn defaults_help() -> String {
    format!(
        "Configuration file (TOML, unknown keys are rejected). Defaults:\n\n{}",
        RunConfigFile::default().to_toml()
    )
}

/// Seed from the environment, if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            let seed = v.trim().parse::<u64>().map_err(|_| {
                CdfaError::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))
            })?;
            Ok(Some(seed))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CdfaError::Config(format!("{SEED_ENV}: {e}")).into()),
    }
}

/// Applies the environment and then the flag to `seed`, logging each layer.
pub fn resolve_seed(seed: &mut u64, flag: Option<u64>) -> Result<()> {
    info!("seed from file/defaults: {seed}");
    if let Some(s) = env_seed()? {
        info!("seed overridden by {SEED_ENV}: {s}");
        *seed = s;
    }
    if let Some(s) = flag {
        info!("seed overridden by --seed: {s}");
        *seed = s;
    }
    Ok(())
}
