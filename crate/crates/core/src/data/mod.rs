//! Rollout datasets: collection, prompt-level splits and JSONL persistence.
//!
//! A dataset on disk is a directory with `records.jsonl` (one
//! [`RolloutRecord`] per line) and a `manifest.json` sidecar.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::KvConfig;
use crate::env::{CodeGrid, Env, EnvConfig, Prompt, PromptConfig};
use crate::error::{Error, Result};
use crate::gae::noisy_label;
use crate::rng::{derive_rng, derive_seed, rng_from_seed, Rng};

pub const FORMAT_VERSION: u32 = 1;
pub const RECORDS_FILE: &str = "records.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

const PROMPT_STREAM: u64 = 0x7072_6f6d_7074;
const SPLIT_STREAM: u64 = 0x7370_6c69_74;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One scored rollout. `codes` is the grid in row-major order (`r × t`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub prompt_id: usize,
    pub prompt_events: Vec<usize>,
    pub event_count: usize,
    pub codes: Vec<u32>,
    pub r: usize,
    pub t: usize,
    pub score: f64,
    pub realized_events: Vec<usize>,
    pub env_seed: u64,
    pub split: Split,
}

impl RolloutRecord {
    pub fn grid(&self) -> Result<CodeGrid> {
        CodeGrid::from_row_major(self.r, self.t, &self.codes)
    }

    pub fn prompt(&self, n_categories: usize) -> Result<Prompt> {
        Prompt::new(self.prompt_events.clone(), n_categories)
    }

    /// A fresh noisy label; the stored score is never modified.
    pub fn noisy_label(&self, sigma: f64, rng: &mut Rng) -> f64 {
        noisy_label(self.score, sigma, rng)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    fn bump(&mut self, split: Split) {
        match split {
            Split::Train => self.train += 1,
            Split::Val => self.val += 1,
            Split::Test => self.test += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub env_config_digest: String,
    /// The environment config in `key = value` form, enough to rebuild the env.
    pub env_config: String,
    pub counts: SplitCounts,
    pub rollouts_per_prompt: usize,
    pub n_prompts: usize,
    pub creation_seed: u64,
}

/// A record that could not be produced during collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectFailure {
    pub prompt_id: usize,
    pub rollout: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub records: Vec<RolloutRecord>,
    /// Not persisted.
    pub failures: Vec<CollectFailure>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &RolloutRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Records grouped by prompt id, in id order.
    pub fn by_prompt(&self) -> BTreeMap<usize, Vec<&RolloutRecord>> {
        let mut out: BTreeMap<usize, Vec<&RolloutRecord>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.prompt_id).or_default().push(r);
        }
        out
    }

    /// The environment config recorded in the manifest.
    pub fn env_config(&self) -> Result<EnvConfig> {
        EnvConfig::from_kv(&KvConfig::parse(&self.manifest.env_config)?)
    }

    fn recount(&mut self) {
        let mut counts = SplitCounts::default();
        for r in &self.records {
            counts.bump(r.split);
        }
        self.manifest.counts = counts;
    }

    /// The JSONL body exactly as [`save`] writes it.
    pub fn records_jsonl(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        Ok(buf)
    }

    /// SHA-256 over the manifest and records as serialized on disk.
    pub fn digest(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec_pretty(&self.manifest)?);
        h.update(self.records_jsonl()?);
        Ok(hex::encode(h.finalize()))
    }
}

/// `n` prompts from one seeded stream.
pub fn synthesize_prompts(n: usize, cfg: &PromptConfig, seed: u64) -> Vec<Prompt> {
    let mut rng = derive_rng(seed, &[PROMPT_STREAM]);
    (0..n).map(|_| crate::env::sample_prompt(&mut rng, cfg)).collect()
}

/// Seed of rollout `i` of prompt `prompt_id`.
pub fn rollout_seed(seed: u64, prompt_id: usize, i: usize) -> u64 {
    derive_seed(seed, &[prompt_id as u64, i as u64])
}

/// Generates `rollouts_per_prompt` scored rollouts for every prompt. Records
/// that fail are listed in `failures` instead of aborting the run. All
/// records start in the train split.
pub fn collect(env: &Env, prompts: &[Prompt], rollouts_per_prompt: usize, seed: u64) -> Result<Dataset> {
    if rollouts_per_prompt == 0 {
        return Err(Error::Config("rollouts_per_prompt must be at least 1".into()));
    }
    let per_prompt: Vec<Vec<std::result::Result<RolloutRecord, CollectFailure>>> = prompts
        .par_iter()
        .enumerate()
        .map(|(prompt_id, prompt)| {
            (0..rollouts_per_prompt)
                .map(|i| {
                    let env_seed = rollout_seed(seed, prompt_id, i);
                    rollout(env, prompt, prompt_id, env_seed).map_err(|e| CollectFailure {
                        prompt_id,
                        rollout: i,
                        kind: e.kind().to_string(),
                        message: e.to_string(),
                    })
                })
                .collect()
        })
        .collect();
    let mut records = Vec::with_capacity(prompts.len() * rollouts_per_prompt);
    let mut failures = Vec::new();
    for r in per_prompt.into_iter().flatten() {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }
    let mut ds = Dataset {
        manifest: DatasetManifest {
            format_version: FORMAT_VERSION,
            env_config_digest: env.config().digest(),
            env_config: env.config().to_kv().render(),
            counts: SplitCounts::default(),
            rollouts_per_prompt,
            n_prompts: prompts.len(),
            creation_seed: seed,
        },
        records,
        failures,
    };
    ds.recount();
    Ok(ds)
}

fn rollout(env: &Env, prompt: &Prompt, prompt_id: usize, env_seed: u64) -> Result<RolloutRecord> {
    let mut rng = rng_from_seed(env_seed);
    let (grid, _, reward) = env.generate(prompt, &mut rng)?;
    Ok(RolloutRecord {
        prompt_id,
        prompt_events: prompt.events().to_vec(),
        event_count: prompt.event_count(),
        codes: grid.to_row_major(),
        r: grid.n_rows(),
        t: grid.width(),
        score: reward.score,
        realized_events: env.decode_events(&grid),
        env_seed,
        split: Split::Train,
    })
}

fn check_ratios(ratios: [f64; 3]) -> Result<()> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::BadRatios(ratios));
    }
    Ok(())
}

/// Prompt counts per split for `n` prompts: train gets `round(n·a)`, val gets
/// `round(n·(a+b)) − round(n·a)`, test the rest.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    check_ratios(ratios)?;
    let a = ((n as f64) * ratios[0]).round() as usize;
    let ab = (((n as f64) * (ratios[0] + ratios[1])).round() as usize).clamp(a, n);
    Ok([a.min(n), ab - a.min(n), n - ab])
}

/// Assigns every prompt (and so all of its rollouts) to one split, after a
/// seeded shuffle of the prompt ids.
pub fn split(mut dataset: Dataset, ratios: [f64; 3], seed: u64) -> Result<Dataset> {
    let mut ids: Vec<usize> = dataset.by_prompt().keys().copied().collect();
    let sizes = split_sizes(ids.len(), ratios)?;
    let mut rng = derive_rng(seed, &[SPLIT_STREAM]);
    ids.shuffle(&mut rng);
    let mut assign = BTreeMap::new();
    for (k, id) in ids.into_iter().enumerate() {
        let s = if k < sizes[0] {
            Split::Train
        } else if k < sizes[0] + sizes[1] {
            Split::Val
        } else {
            Split::Test
        };
        assign.insert(id, s);
    }
    for r in &mut dataset.records {
        r.split = assign[&r.prompt_id];
    }
    dataset.recount();
    Ok(dataset)
}

pub fn save(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut out = BufWriter::new(File::create(dir.join(RECORDS_FILE))?);
    out.write_all(&dataset.records_jsonl()?)?;
    out.flush()?;
    let mut m = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut m, &dataset.manifest)?;
    m.write_all(b"\n")?;
    m.flush()?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<Dataset> {
    let manifest_text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let value: serde_json::Value = serde_json::from_str(&manifest_text)?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::CorruptRecord {
            line: 0,
            reason: "manifest has no format_version".into(),
        })? as u32;
    if found != FORMAT_VERSION {
        return Err(Error::FormatVersionMismatch {
            expected: FORMAT_VERSION,
            found,
        });
    }
    let manifest: DatasetManifest = serde_json::from_value(value)?;
    let reader = BufReader::new(File::open(dir.join(RECORDS_FILE))?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let rec: RolloutRecord = serde_json::from_str(&line).map_err(|e| Error::CorruptRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        if rec.codes.len() != rec.r * rec.t {
            return Err(Error::CorruptRecord {
                line: line_no,
                reason: format!("{} codes for a {}x{} grid", rec.codes.len(), rec.r, rec.t),
            });
        }
        records.push(rec);
    }
    let ds = Dataset {
        manifest,
        records,
        failures: Vec::new(),
    };
    if ds.manifest.counts.total() != ds.records.len() {
        return Err(Error::CorruptRecord {
            line: ds.records.len() + 1,
            reason: format!(
                "manifest lists {} records, file has {}",
                ds.manifest.counts.total(),
                ds.records.len()
            ),
        });
    }
    Ok(ds)
}
