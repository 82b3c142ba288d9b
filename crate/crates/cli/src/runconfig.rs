//! Run configuration: one JSON document carrying the outer-algorithm,
//! interior-point and exact-penalty parameters. The defaults are the
//! reference parameter set, so a full-scale experiment is a single config
//! change away from the shipped desk-scale runs.

use mipdeco::{ExpConfig, OuterConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub outer: OuterConfig,
    pub exp: ExpConfig,
    /// Candidate cap for oracle enumeration runs.
    pub oracle_budget: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            outer: OuterConfig::default(),
            exp: ExpConfig::default(),
            oracle_budget: 200_000,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
