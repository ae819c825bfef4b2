use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use prefixlab::config::KvConfig;
use prefixlab::critic::{CriticArch, TrainConfig};
use prefixlab::data::FORMAT_VERSION;
use prefixlab::env::{EnvConfig, PromptConfig};
use prefixlab::gae::GaeConfig;
use prefixlab::probe::ProbeConfig;
use prefixlab::{Error, Result};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::Global;

/// Config keys read by the CLI itself.
const CLI_KEYS: &[&str] = &["schedule", "split"];

/// Effective configuration of one command run.
pub struct RunConfig {
    pub kv: KvConfig,
    pub seed: u64,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn from_global(g: &Global) -> Result<Self> {
        let mut kv = match &g.config {
            Some(p) => KvConfig::load(p)?,
            None => KvConfig::default(),
        };
        for s in &g.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
            kv.set(k.trim(), v.trim());
        }
        let known: BTreeSet<&str> = [
            EnvConfig::KEYS,
            PromptConfig::KEYS,
            GaeConfig::KEYS,
            TrainConfig::KEYS,
            CriticArch::KEYS,
            ProbeConfig::KEYS,
            CLI_KEYS,
        ]
        .concat()
        .into_iter()
        .collect();
        kv.check_known(&known)?;
        Ok(Self {
            kv,
            seed: g.seed,
            out: g.out.clone(),
        })
    }

    pub fn env(&self) -> Result<EnvConfig> {
        EnvConfig::from_kv(&self.kv)
    }

    pub fn prompts(&self, n_categories: usize) -> Result<PromptConfig> {
        PromptConfig::from_kv(&self.kv, n_categories)
    }

    pub fn gae(&self, steps: usize) -> Result<GaeConfig> {
        GaeConfig::from_kv(&self.kv, steps)
    }

    pub fn outputs(&self, command: &str) -> Result<Outputs> {
        fs::create_dir_all(&self.out).map_err(|e| Error::Config(format!("{}: {e}", self.out.display())))?;
        Ok(Outputs {
            dir: self.out.clone(),
            command: command.to_string(),
            files: BTreeMap::new(),
            args: BTreeMap::new(),
            inputs: BTreeMap::new(),
        })
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Files written by a command, and the manifest describing the run.
pub struct Outputs {
    dir: PathBuf,
    command: String,
    files: BTreeMap<String, String>,
    args: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
}

impl Outputs {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.path(name), bytes)?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Records a file that was written by other code.
    pub fn record(&mut self, name: &str) -> Result<()> {
        let bytes = fs::read(self.path(name))?;
        self.files.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn arg(&mut self, key: &str, value: impl ToString) {
        self.args.insert(key.to_string(), value.to_string());
    }

    /// Records the digest of an input file.
    pub fn input(&mut self, label: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        self.inputs.insert(label.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    /// Writes `run-<command>.json`. No timestamps, so reruns are byte-identical.
    pub fn finish(self, run: &RunConfig) -> Result<()> {
        let manifest = json!({
            "command": self.command,
            "seed": run.seed,
            "config": run.kv.render(),
            "config_digest": run.kv.digest(),
            "args": self.args,
            "inputs": self.inputs,
            "outputs": self.files,
            "versions": {
                "prefixlab": env!("CARGO_PKG_VERSION"),
                "dataset_format": FORMAT_VERSION,
            },
        });
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join(format!("run-{}.json", self.command)), text)?;
        Ok(())
    }
}
