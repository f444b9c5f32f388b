//! Config-file loading and the override chain: file values (TOML), then the
//! `HL_DATA_DIR` environment variable, then the `--seed` flag.

use std::path::Path;

use hl_core::sim::SimConfig;

use crate::CliError;

/// Environment variable overriding the dataset directory.
pub const DATA_DIR_ENV: &str = "HL_DATA_DIR";

/// Loads the run configuration. A missing `--config` means all defaults; an
/// empty file parses to the same. Unknown keys and out-of-range values are
/// rejected with the offending key named (and, for parse errors, the line).
pub fn load(path: Option<&Path>, seed_override: Option<u64>) -> Result<SimConfig, CliError> {
    let mut config = match path {
        None => SimConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::data(format!("cannot read config {}: {e}", p.display()))
            })?;
            parse(&text).map_err(|e| {
                CliError::data(format!("invalid config {}: {e}", p.display()))
            })?
        }
    };
    if let Ok(dir) = std::env::var(DATA_DIR_ENV) {
        if !dir.is_empty() {
            config.data_dir = dir;
        }
    }
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    config
        .validate()
        .map_err(|e| CliError::data(format!("invalid config: {e}")))?;
    Ok(config)
}

/// Parses TOML text into an (unvalidated) configuration.
pub fn parse(text: &str) -> Result<SimConfig, String> {
    toml::from_str::<SimConfig>(text).map_err(|e| e.to_string())
}

/// Serializes a configuration back to TOML. Round-trips through [`parse`].
#[cfg(test)]
pub fn to_toml(config: &SimConfig) -> String {
    toml::to_string(config).expect("config serializes to TOML")
}
