use rayon::prelude::*;
use serde::Serialize;

use crate::data::synthesize_prompts;
use crate::env::{CodeGrid, Env, GenState, PromptConfig};
use crate::error::{Error, Result};
use crate::rng::{derive_rng, derive_seed};
use crate::stats::{mean, median, std_dev};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrefixStats {
    pub prefix_id: usize,
    pub event_count: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostfixVariance {
    pub rows: Vec<PrefixStats>,
    pub median_std: f64,
    pub std_of_means: f64,
    /// `median_std / std_of_means`.
    pub ratio: f64,
}

/// Mean and sample std of the scores of completions of one prefix, one per seed.
pub fn completion_stats(env: &Env, prefix: &CodeGrid, state: &GenState, seeds: &[u64]) -> Result<(f64, f64)> {
    let scores = seeds
        .iter()
        .map(|&s| Ok(env.continue_from(prefix, state, &mut derive_rng(s, &[]))?.1.score))
        .collect::<Result<Vec<f64>>>()?;
    Ok((mean(&scores), std_dev(&scores)))
}

/// Samples `n_prefixes` prompts and prefixes of `prefix_len` columns, then
/// completes each prefix `n_completions` times.
pub fn postfix_variance(
    env: &Env,
    prompts: &PromptConfig,
    n_prefixes: usize,
    n_completions: usize,
    prefix_len: usize,
    seed: u64,
) -> Result<PostfixVariance> {
    if n_completions < 2 {
        return Err(Error::Config("postfix variance needs at least 2 completions".into()));
    }
    if n_prefixes < 2 {
        return Err(Error::Config("postfix variance needs at least 2 prefixes".into()));
    }
    if prefix_len == 0 || prefix_len > env.steps() {
        return Err(Error::StepOutOfRange {
            step: prefix_len,
            max: env.steps(),
        });
    }
    let ps = synthesize_prompts(n_prefixes, prompts, seed);
    let rows = ps
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = derive_rng(seed, &[i as u64, 0]);
            let (prefix, state) = env.generate_prefix(p, prefix_len, &mut rng)?;
            let seeds: Vec<u64> = (0..n_completions).map(|k| derive_seed(seed, &[i as u64, 1, k as u64])).collect();
            let (m, s) = completion_stats(env, &prefix, &state, &seeds)?;
            Ok(PrefixStats {
                prefix_id: i,
                event_count: p.event_count(),
                mean: m,
                std: s,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let stds: Vec<f64> = rows.iter().map(|r| r.std).collect();
    let median_std = median(&stds);
    let std_of_means = std_dev(&means);
    Ok(PostfixVariance {
        rows,
        median_std,
        std_of_means,
        ratio: median_std / std_of_means,
    })
}
