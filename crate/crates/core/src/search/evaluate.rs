use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::schedule::{schedule_cost, SearchSchedule};
use super::strategy::{run_bon, run_plan_critic, run_softmax_resample, PrefixScorer, SearchOutcome, Selector};
use crate::env::{Env, Prompt};
use crate::error::{Error, Result};
use crate::stats::{mean, sign_test, SignTest};

/// A sampling strategy with everything but the scorer.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Blind,
    BestOfN { n: usize, oracle: bool },
    PlanCritic { schedule: SearchSchedule },
    SoftmaxResample { schedule: SearchSchedule, temperature: f64 },
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Blind => write!(f, "blind"),
            Strategy::BestOfN { n, oracle: true } => write!(f, "bon{n}-oracle"),
            Strategy::BestOfN { n, oracle: false } => write!(f, "bon{n}-critic"),
            Strategy::PlanCritic { schedule } => write!(f, "plan-critic[{schedule}]"),
            Strategy::SoftmaxResample { schedule, temperature } => write!(f, "softmax{temperature}[{schedule}]"),
        }
    }
}

impl Strategy {
    pub fn cost(&self, steps: usize) -> usize {
        match self {
            Strategy::Blind => steps,
            Strategy::BestOfN { n, .. } => n * steps,
            Strategy::PlanCritic { schedule } | Strategy::SoftmaxResample { schedule, .. } => schedule_cost(schedule),
        }
    }

    pub fn needs_scorer(&self) -> bool {
        !matches!(self, Strategy::Blind | Strategy::BestOfN { oracle: true, .. })
    }

    pub fn run(
        &self,
        env: &Env,
        prompt: &Prompt,
        prompt_id: usize,
        scorer: Option<&dyn PrefixScorer>,
        run_seed: u64,
    ) -> Result<SearchOutcome> {
        let need = || scorer.ok_or_else(|| Error::Config(format!("strategy {self} needs a critic")));
        match self {
            Strategy::Blind => run_bon(env, prompt, prompt_id, 1, Selector::Oracle, run_seed),
            Strategy::BestOfN { n, oracle: true } => run_bon(env, prompt, prompt_id, *n, Selector::Oracle, run_seed),
            Strategy::BestOfN { n, oracle: false } => {
                run_bon(env, prompt, prompt_id, *n, Selector::Scorer(need()?), run_seed)
            }
            Strategy::PlanCritic { schedule } => run_plan_critic(env, prompt, prompt_id, schedule, need()?, run_seed),
            Strategy::SoftmaxResample { schedule, temperature } => {
                run_softmax_resample(env, prompt, prompt_id, schedule, need()?, *temperature, run_seed)
            }
        }
    }
}

/// One CSV row of a strategy report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptResult {
    pub strategy: String,
    pub prompt_id: usize,
    pub event_count: usize,
    pub score: f64,
    pub oracle_score: f64,
    pub cost_tokens: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketMean {
    pub strategy: String,
    /// Event count, or 0 for all prompts.
    pub event_count: usize,
    pub n: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyReport {
    pub strategy: String,
    pub rows: Vec<PromptResult>,
    pub overall_mean: f64,
    /// Per event count, ascending; buckets with no prompt are omitted.
    pub buckets: Vec<BucketMean>,
    /// Event counts in `1..=max` with no prompt.
    pub empty_buckets: Vec<usize>,
    pub cost_tokens: usize,
    /// Not written to CSV so that reports stay byte-identical across runs.
    pub wall_time_s: f64,
}

impl StrategyReport {
    pub fn scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.score).collect()
    }

    pub fn bucket(&self, event_count: usize) -> Option<&BucketMean> {
        self.buckets.iter().find(|b| b.event_count == event_count)
    }

    /// The overall row followed by the buckets.
    pub fn summary_rows(&self) -> Vec<BucketMean> {
        let mut out = vec![BucketMean {
            strategy: self.strategy.clone(),
            event_count: 0,
            n: self.rows.len(),
            mean: self.overall_mean,
        }];
        out.extend(self.buckets.iter().cloned());
        out
    }
}

/// Runs `strategy` on every prompt (prompt id = index).
pub fn evaluate_strategy(
    env: &Env,
    strategy: &Strategy,
    scorer: Option<&dyn PrefixScorer>,
    prompts: &[Prompt],
    run_seed: u64,
) -> Result<StrategyReport> {
    let start = Instant::now();
    let name = strategy.to_string();
    let cost = strategy.cost(env.steps());
    let rows = prompts
        .par_iter()
        .enumerate()
        .map(|(id, p)| {
            let out = strategy.run(env, p, id, scorer, run_seed)?;
            debug_assert_eq!(out.cost, cost);
            Ok(PromptResult {
                strategy: name.clone(),
                prompt_id: id,
                event_count: p.event_count(),
                score: out.score,
                oracle_score: out.oracle_score,
                cost_tokens: out.cost,
                seed: run_seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut by_count: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in &rows {
        by_count.entry(r.event_count).or_default().push(r.score);
    }
    let max = by_count.keys().next_back().copied().unwrap_or(0);
    let empty_buckets = (1..=max).filter(|c| !by_count.contains_key(c)).collect();
    let buckets = by_count
        .into_iter()
        .map(|(event_count, s)| BucketMean {
            strategy: name.clone(),
            event_count,
            n: s.len(),
            mean: mean(&s),
        })
        .collect();
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    Ok(StrategyReport {
        strategy: name,
        overall_mean: mean(&scores),
        rows,
        buckets,
        empty_buckets,
        cost_tokens: cost,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketGap {
    pub event_count: usize,
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `mean_a − mean_b`.
    pub gap: f64,
}

/// Paired comparison of two reports over the same prompts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub sign: SignTest,
    pub buckets: Vec<BucketGap>,
}

pub fn compare(a: &StrategyReport, b: &StrategyReport) -> Result<Comparison> {
    if a.rows.len() != b.rows.len()
        || a.rows.iter().zip(&b.rows).any(|(x, y)| x.prompt_id != y.prompt_id)
    {
        return Err(Error::LengthMismatch {
            left: a.rows.len(),
            right: b.rows.len(),
        });
    }
    let buckets = a
        .buckets
        .iter()
        .filter_map(|ba| {
            b.bucket(ba.event_count).map(|bb| BucketGap {
                event_count: ba.event_count,
                n: ba.n,
                mean_a: ba.mean,
                mean_b: bb.mean,
                gap: ba.mean - bb.mean,
            })
        })
        .collect();
    Ok(Comparison {
        a: a.strategy.clone(),
        b: b.strategy.clone(),
        n: a.rows.len(),
        mean_a: a.overall_mean,
        mean_b: b.overall_mean,
        sign: sign_test(&a.scores(), &b.scores()),
        buckets,
    })
}
