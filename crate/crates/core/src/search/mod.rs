//! Inference-time strategies with exact token accounting.
//!
//! Every strategy is a [`SearchSchedule`]: best-of-N is a single stage,
//! prefix-first search samples many short prefixes, prunes them with a
//! critic and completes the survivors.

mod evaluate;
mod postfix;
mod schedule;
mod strategy;

pub use evaluate::{
    compare, evaluate_strategy, BucketGap, BucketMean, Comparison, PromptResult, Strategy, StrategyReport,
};
pub use postfix::{completion_stats, postfix_variance, PostfixVariance, PrefixStats};
pub use schedule::{schedule_cost, SearchSchedule, Stage};
pub use strategy::{
    candidate_seed, run_blind, run_bon, run_plan_critic, run_softmax_resample, run_staged, CriticScorer,
    PrefixScorer, Pruning, RolloutOracle, SearchOutcome, Selector, StageTrace,
};

#[cfg(test)]
mod tests;
