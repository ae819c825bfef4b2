use serde::{Deserialize, Serialize};

use crate::config::{check_prob, KvConfig};
use crate::error::{Error, Result};

/// Largest event count a prompt may request.
pub const MAX_PROMPT_EVENTS: usize = 6;

/// Distribution of per-generation fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FidelityDist {
    Fixed(f64),
    Beta { alpha: f64, beta: f64 },
}

/// Environment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub n_event_categories: usize,
    pub n_texture_tokens: usize,
    /// Codebook rows `R`.
    pub rows: usize,
    /// Steps `T`.
    pub steps: usize,
    /// Sketch (prefix) region `[0, T_sketch)`.
    pub sketch_steps: usize,
    pub leak_prob: f64,
    pub fidelity: FidelityDist,
    /// Share of unrealized events whose fate is fixed in the plan (and thus
    /// visible to the sketch) rather than decided in the body.
    pub plan_commitment: f64,
    pub min_event_len: usize,
    /// Shortest event-token run that `decode_events` reports.
    pub min_run_len: usize,
    /// Probability that an unrealized event is dropped rather than substituted.
    pub drop_substitute_split: f64,
    pub reorder_prob: f64,
    /// Probability that a secondary-row code is replaced by a uniform token.
    pub row_noise: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            n_event_categories: 10,
            n_texture_tokens: 8,
            rows: 2,
            steps: 64,
            sketch_steps: 8,
            leak_prob: 0.8,
            fidelity: FidelityDist::Beta {
                alpha: 1.0,
                beta: 3.0,
            },
            plan_commitment: 0.99,
            min_event_len: 4,
            min_run_len: 3,
            drop_substitute_split: 0.5,
            reorder_prob: 0.0,
            row_noise: 0.1,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub const KEYS: &'static [&'static str] = &[
        "n_event_categories",
        "n_texture_tokens",
        "R",
        "T",
        "T_sketch",
        "leak_prob",
        "fidelity",
        "fidelity_alpha",
        "fidelity_beta",
        "plan_commitment",
        "min_event_len",
        "min_run_len",
        "drop_substitute_split",
        "reorder_prob",
        "row_noise",
        "seed",
    ];

    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let (da, db) = match d.fidelity {
            FidelityDist::Beta { alpha, beta } => (alpha, beta),
            FidelityDist::Fixed(_) => unreachable!(),
        };
        let fidelity = if kv.contains("fidelity") {
            FidelityDist::Fixed(kv.get("fidelity", 1.0)?)
        } else {
            FidelityDist::Beta {
                alpha: kv.get("fidelity_alpha", da)?,
                beta: kv.get("fidelity_beta", db)?,
            }
        };
        let cfg = Self {
            n_event_categories: kv.get("n_event_categories", d.n_event_categories)?,
            n_texture_tokens: kv.get("n_texture_tokens", d.n_texture_tokens)?,
            rows: kv.get("R", d.rows)?,
            steps: kv.get("T", d.steps)?,
            sketch_steps: kv.get("T_sketch", d.sketch_steps)?,
            leak_prob: kv.get("leak_prob", d.leak_prob)?,
            fidelity,
            plan_commitment: kv.get("plan_commitment", d.plan_commitment)?,
            min_event_len: kv.get("min_event_len", d.min_event_len)?,
            min_run_len: kv.get("min_run_len", d.min_run_len)?,
            drop_substitute_split: kv.get("drop_substitute_split", d.drop_substitute_split)?,
            reorder_prob: kv.get("reorder_prob", d.reorder_prob)?,
            row_noise: kv.get("row_noise", d.row_noise)?,
            seed: kv.get("seed", d.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Writes every key, so the rendering fully determines the environment.
    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        kv.set("n_event_categories", self.n_event_categories);
        kv.set("n_texture_tokens", self.n_texture_tokens);
        kv.set("R", self.rows);
        kv.set("T", self.steps);
        kv.set("T_sketch", self.sketch_steps);
        kv.set("leak_prob", self.leak_prob);
        match self.fidelity {
            FidelityDist::Fixed(f) => kv.set("fidelity", f),
            FidelityDist::Beta { alpha, beta } => {
                kv.set("fidelity_alpha", alpha);
                kv.set("fidelity_beta", beta);
            }
        }
        kv.set("plan_commitment", self.plan_commitment);
        kv.set("min_event_len", self.min_event_len);
        kv.set("min_run_len", self.min_run_len);
        kv.set("drop_substitute_split", self.drop_substitute_split);
        kv.set("reorder_prob", self.reorder_prob);
        kv.set("row_noise", self.row_noise);
        kv.set("seed", self.seed);
        kv
    }

    pub fn digest(&self) -> String {
        self.to_kv().digest()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_event_categories < 2 {
            return fail("n_event_categories must be at least 2".into());
        }
        if self.n_texture_tokens < 1 {
            return fail("n_texture_tokens must be at least 1".into());
        }
        if self.rows < 1 {
            return fail("R must be at least 1".into());
        }
        if self.sketch_steps >= self.steps {
            return fail(format!(
                "T_sketch ({}) must be below T ({})",
                self.sketch_steps, self.steps
            ));
        }
        if self.min_run_len < 1 || self.min_event_len < self.min_run_len {
            return fail("need 1 <= min_run_len <= min_event_len".into());
        }
        check_prob("leak_prob", self.leak_prob)?;
        check_prob("plan_commitment", self.plan_commitment)?;
        check_prob("drop_substitute_split", self.drop_substitute_split)?;
        check_prob("reorder_prob", self.reorder_prob)?;
        check_prob("row_noise", self.row_noise)?;
        match self.fidelity {
            FidelityDist::Fixed(f) => check_prob("fidelity", f)?,
            FidelityDist::Beta { alpha, beta } => {
                if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
                    return fail("fidelity_alpha and fidelity_beta must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn body_steps(&self) -> usize {
        self.steps - self.sketch_steps
    }
}

/// Prompt sampler configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    /// Weight of event count `k + 1` at index `k`.
    pub count_weights: Vec<f64>,
    /// Weight of each category; categories within a prompt are distinct.
    pub category_weights: Vec<f64>,
}

impl PromptConfig {
    pub const KEYS: &'static [&'static str] =
        &["prompt_count_weights", "prompt_category_weights"];

    pub fn uniform(max_events: usize, n_categories: usize) -> Self {
        Self {
            count_weights: vec![1.0; max_events],
            category_weights: vec![1.0; n_categories],
        }
    }

    /// Every prompt has exactly `count` events.
    pub fn fixed_count(count: usize, n_categories: usize) -> Self {
        let mut count_weights = vec![0.0; count];
        count_weights[count - 1] = 1.0;
        Self {
            count_weights,
            category_weights: vec![1.0; n_categories],
        }
    }

    pub fn from_kv(kv: &KvConfig, n_categories: usize) -> Result<Self> {
        let d = Self::uniform(MAX_PROMPT_EVENTS, n_categories);
        let cfg = Self {
            count_weights: kv
                .get_list("prompt_count_weights")?
                .unwrap_or(d.count_weights),
            category_weights: kv
                .get_list("prompt_category_weights")?
                .unwrap_or(d.category_weights),
        };
        cfg.validate(n_categories)?;
        Ok(cfg)
    }

    pub fn validate(&self, n_categories: usize) -> Result<()> {
        let bad = |w: &[f64]| w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || w.iter().sum::<f64>() <= 0.0;
        if self.count_weights.is_empty()
            || self.count_weights.len() > MAX_PROMPT_EVENTS
            || bad(&self.count_weights)
        {
            return Err(Error::Config(format!(
                "prompt_count_weights needs 1..={MAX_PROMPT_EVENTS} non-negative weights with positive sum"
            )));
        }
        if self.category_weights.len() != n_categories || bad(&self.category_weights) {
            return Err(Error::Config(format!(
                "prompt_category_weights needs {n_categories} non-negative weights with positive sum"
            )));
        }
        let positive = self.category_weights.iter().filter(|w| **w > 0.0).count();
        if positive < self.count_weights.len() {
            return Err(Error::Config(
                "fewer positively weighted categories than the largest event count".into(),
            ));
        }
        Ok(())
    }
}
