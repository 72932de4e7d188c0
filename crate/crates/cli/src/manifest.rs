//! Run manifest written by every command.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    /// SHA-256 of the resolved configuration, excluding the output directory.
    pub config_hash: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    /// SHA-256 of every file written next to the manifest.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &'static str, config: &C, seed: Option<u64>) -> anyhow::Result<Self> {
        let value = serde_json::to_value(config)?;
        let compact = serde_json::to_string(&value)?;
        Ok(Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            core_version: gcomp_core::VERSION,
            config_hash: gcomp_core::sha256_hex(compact.as_bytes()),
            seed,
            config: value,
            outputs: BTreeMap::new(),
        })
    }

    /// Records the hash of `dir/name`.
    pub fn record(&mut self, dir: &Path, name: &str) -> anyhow::Result<()> {
        let bytes = fs::read(dir.join(name)).with_context(|| format!("reading back {name}"))?;
        self.outputs.insert(name.to_string(), gcomp_core::sha256_hex(&bytes));
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.join("manifest.json"), text)?;
        Ok(())
    }
}
