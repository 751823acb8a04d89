//! Experiment harness behind the `resctl` binary: config loading, sweeps,
//! the named reproductions and artifact writers.

pub mod artifacts;
pub mod reproduce;
pub mod sweep;

use std::path::Path;

use anyhow::{bail, Context, Result};
use resctl_core::ExperimentConfig;

/// Reads a config from a `.toml` or `.json` file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => ExperimentConfig::from_json(&text)?,
        Some("toml") => ExperimentConfig::from_toml(&text)?,
        _ => bail!("{}: config files must end in .toml or .json", path.display()),
    };
    cfg.validate().with_context(|| format!("validating {}", path.display()))?;
    Ok(cfg)
}

/// Config from a file if given, otherwise the named preset, with an
/// optional seed override.
pub fn resolve_config(file: Option<&Path>, preset: &str, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = match file {
        Some(p) => load_config(p)?,
        None => match ExperimentConfig::preset(preset) {
            Some(c) => c,
            None => bail!("unknown preset {preset:?}; known: {}", ExperimentConfig::preset_names().join(", ")),
        },
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}
