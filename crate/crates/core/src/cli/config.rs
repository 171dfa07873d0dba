use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

/// Pipeline settings read from a TOML file; command-line flags take
/// precedence over these, and these over built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub trace: Option<PathBuf>,
    pub prefix_table: Option<PathBuf>,
    pub honeypot: Option<PathBuf>,
    pub names: Option<PathBuf>,
    pub attacks: Option<PathBuf>,
    pub fingerprint_spec: Option<PathBuf>,
    pub seen_table: Option<PathBuf>,
    pub ns_table: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub reference_names: Option<String>,
    pub responses: Option<PathBuf>,
    pub ttl_table: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub sampling: Option<u32>,
    pub truncation: Option<u32>,
    pub k_max: Option<usize>,
    pub slack: Option<f64>,
    pub share_threshold: Option<f64>,
    pub min_packets: Option<u64>,
    pub min_segment: Option<usize>,
    pub eps: Option<f64>,
    pub min_pts: Option<usize>,
    pub min_attacks: Option<usize>,
    pub min_amps: Option<usize>,
    pub min_step: Option<u64>,
    pub min_days: Option<usize>,
    pub edns: Option<bool>,
    pub min_requests: Option<usize>,
    pub max_gap: Option<f64>,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(PipelineConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}

pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

/// A required path given neither as a flag nor in the config file.
#[derive(Debug)]
pub struct MissingArg(pub String);

pub fn require(flag: Option<PathBuf>, config: Option<PathBuf>, name: &str) -> std::result::Result<PathBuf, MissingArg> {
    flag.or(config).ok_or_else(|| MissingArg(format!("--{name} is required (flag or config key)")))
}
