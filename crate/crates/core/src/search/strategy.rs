use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use super::schedule::{schedule_cost, SearchSchedule};
use crate::critic::{score_prefix, CriticParams};
use crate::env::{CodeGrid, Env, GenState, Prompt};
use crate::error::{Error, Result};
use crate::rng::{derive_rng, derive_seed};
use crate::scalar::Scalar;

/// Scores a partial or complete generation. The state is available so an
/// oracle can be injected in tests; learned critics must ignore it.
pub trait PrefixScorer: Sync {
    fn score(&self, prefix: &CodeGrid, state: &GenState) -> Result<f64>;

    /// Whether the scorer may be queried at column count `cut`.
    fn supports_cut(&self, _cut: usize) -> bool {
        true
    }
}

/// A trained critic, queried only at its supervised steps (and at `T`).
#[derive(Debug, Clone, Copy)]
pub struct CriticScorer<'a, F> {
    pub params: &'a CriticParams<F>,
    pub interval: usize,
}

impl<F: Scalar> PrefixScorer for CriticScorer<'_, F> {
    fn score(&self, prefix: &CodeGrid, state: &GenState) -> Result<f64> {
        Ok(score_prefix(prefix, &state.prompt, self.params)?.to_f64_lossy())
    }

    fn supports_cut(&self, cut: usize) -> bool {
        self.interval > 0 && cut % self.interval == 0
    }
}

/// Mean score of `samples` completions from the true generator state, with
/// the same completion seeds for every prefix. Exact on complete grids.
#[derive(Debug, Clone, Copy)]
pub struct RolloutOracle<'a> {
    pub env: &'a Env,
    pub samples: usize,
    pub seed: u64,
}

impl PrefixScorer for RolloutOracle<'_> {
    fn score(&self, prefix: &CodeGrid, state: &GenState) -> Result<f64> {
        if prefix.width() >= self.env.steps() {
            return Ok(self.env.score(&state.prompt, prefix));
        }
        let mut total = 0.0;
        for k in 0..self.samples {
            let mut rng = derive_rng(self.seed, &[k as u64]);
            total += self.env.continue_from(prefix, state, &mut rng)?.1.score;
        }
        Ok(total / self.samples.max(1) as f64)
    }
}

/// How survivors are chosen at an interior cut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pruning {
    /// Highest scores, ties to the lower candidate index.
    TopK,
    /// Without replacement, with probability ∝ exp(score / temperature).
    Softmax { temperature: f64 },
}

/// How the returned sequence is picked among the completed candidates.
#[derive(Clone, Copy)]
pub enum Selector<'a> {
    /// The true score (not available at inference time).
    Oracle,
    Scorer(&'a dyn PrefixScorer),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTrace {
    pub cut: usize,
    pub width: usize,
    /// Scores at the cut (empty if nothing was pruned there).
    pub scores: Vec<f64>,
    /// Indices of the candidates carried into the next stage.
    pub kept: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub grid: CodeGrid,
    /// True score of the returned sequence.
    pub score: f64,
    /// Selector score of the returned sequence.
    pub selector_score: f64,
    /// Best true score among the completed candidates.
    pub oracle_score: f64,
    /// Columns generated per codebook row.
    pub cost: usize,
    pub stages: Vec<StageTrace>,
}

struct Candidate {
    grid: CodeGrid,
    state: GenState,
}

const PRUNE_STREAM: u64 = u64::MAX;

/// Seed of candidate `i` at stage `stage`.
pub fn candidate_seed(run_seed: u64, prompt_id: usize, stage: usize, i: usize) -> u64 {
    derive_seed(run_seed, &[prompt_id as u64, stage as u64, i as u64])
}

/// Indices ordered by score descending, then index ascending.
fn ranked(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

fn gumbel_top_k(scores: &[f64], k: usize, temperature: f64, rng: &mut crate::rng::Rng) -> Vec<usize> {
    let keys: Vec<f64> = scores
        .iter()
        .map(|&s| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            s / temperature - (-u.ln()).ln()
        })
        .collect();
    let mut kept = ranked(&keys);
    kept.truncate(k);
    kept
}

fn score_all(scorer: &dyn PrefixScorer, cands: &[Candidate]) -> Result<Vec<f64>> {
    cands.par_iter().map(|c| scorer.score(&c.grid, &c.state)).collect()
}

/// Runs a staged search for one prompt. Candidate `i` of stage `s` draws from
/// [`candidate_seed`]`(run_seed, prompt_id, s, i)`, so results do not depend on
/// the worker count.
#[allow(clippy::too_many_arguments)]
pub fn run_staged(
    env: &Env,
    prompt: &Prompt,
    prompt_id: usize,
    schedule: &SearchSchedule,
    pruner: Option<&dyn PrefixScorer>,
    pruning: Pruning,
    selector: Selector<'_>,
    run_seed: u64,
) -> Result<SearchOutcome> {
    schedule.validate_for(env.steps())?;
    if let Pruning::Softmax { temperature } = pruning {
        if !(temperature > 0.0) {
            return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
        }
    }
    let stages = schedule.stages();
    for (s, next) in stages.iter().zip(&stages[1..]) {
        if next.width < s.width {
            match pruner {
                None => return Err(Error::Config(format!("pruning at cut {} needs a scorer", s.cut))),
                Some(p) if !p.supports_cut(s.cut) => return Err(Error::ScheduleCriticMismatch { cut: s.cut }),
                Some(_) => {}
            }
        }
    }

    let first = stages[0];
    let mut cands: Vec<Candidate> = (0..first.width)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_rng(candidate_seed(run_seed, prompt_id, 0, i), &[]);
            let (grid, state) = env.generate_prefix(prompt, first.cut, &mut rng)?;
            Ok(Candidate { grid, state })
        })
        .collect::<Result<_>>()?;
    let mut generated = first.width * first.cut;
    let mut traces = Vec::with_capacity(stages.len());

    for (k, next) in stages[1..].iter().enumerate() {
        let stage = stages[k];
        let mut trace = StageTrace {
            cut: stage.cut,
            width: stage.width,
            scores: Vec::new(),
            kept: (0..next.width).collect(),
        };
        if next.width < cands.len() {
            let scorer = pruner.expect("checked above");
            let scores = score_all(scorer, &cands)?;
            trace.kept = match pruning {
                Pruning::TopK => {
                    let mut r = ranked(&scores);
                    r.truncate(next.width);
                    r
                }
                Pruning::Softmax { temperature } => {
                    let mut rng = derive_rng(candidate_seed(run_seed, prompt_id, k + 1, 0), &[PRUNE_STREAM]);
                    gumbel_top_k(&scores, next.width, temperature, &mut rng)
                }
            };
            trace.scores = scores;
            let mut slots: Vec<Option<Candidate>> = cands.into_iter().map(Some).collect();
            cands = trace.kept.iter().map(|&i| slots[i].take().expect("distinct")).collect();
        }
        traces.push(trace);
        let counts: Vec<usize> = cands
            .par_iter_mut()
            .enumerate()
            .map(|(j, c)| {
                let mut rng = derive_rng(candidate_seed(run_seed, prompt_id, k + 1, j), &[]);
                env.extend(&mut c.grid, &mut c.state, next.cut, &mut rng)
            })
            .collect::<Result<_>>()?;
        generated += counts.iter().sum::<usize>();
    }
    assert_eq!(generated, schedule_cost(schedule), "generated columns must match the schedule cost");

    let truth: Vec<f64> = cands.par_iter().map(|c| env.score(&c.state.prompt, &c.grid)).collect();
    let selected = match selector {
        Selector::Oracle => truth.clone(),
        Selector::Scorer(s) => score_all(s, &cands)?,
    };
    let best = ranked(&selected)[0];
    let last = stages[stages.len() - 1];
    traces.push(StageTrace {
        cut: last.cut,
        width: last.width,
        scores: selected.clone(),
        kept: vec![best],
    });
    Ok(SearchOutcome {
        score: truth[best],
        selector_score: selected[best],
        oracle_score: truth.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        cost: generated,
        grid: cands.swap_remove(best).grid,
        stages: traces,
    })
}

/// One unguided generation (cost `T`).
pub fn run_blind(env: &Env, prompt: &Prompt, prompt_id: usize, run_seed: u64) -> Result<SearchOutcome> {
    run_bon(env, prompt, prompt_id, 1, Selector::Oracle, run_seed)
}

/// `n` full generations, returning the selector's favourite (cost `n·T`).
pub fn run_bon(
    env: &Env,
    prompt: &Prompt,
    prompt_id: usize,
    n: usize,
    selector: Selector<'_>,
    run_seed: u64,
) -> Result<SearchOutcome> {
    let schedule = SearchSchedule::best_of(n, env.steps())?;
    run_staged(env, prompt, prompt_id, &schedule, None, Pruning::TopK, selector, run_seed)
}

/// Prefix-first search: prune with the critic at each interior cut, complete
/// the survivors and return the one the critic scores highest.
pub fn run_plan_critic(
    env: &Env,
    prompt: &Prompt,
    prompt_id: usize,
    schedule: &SearchSchedule,
    critic: &dyn PrefixScorer,
    run_seed: u64,
) -> Result<SearchOutcome> {
    run_staged(
        env,
        prompt,
        prompt_id,
        schedule,
        Some(critic),
        Pruning::TopK,
        Selector::Scorer(critic),
        run_seed,
    )
}

/// As [`run_plan_critic`], but survivors are resampled with softmax weights.
pub fn run_softmax_resample(
    env: &Env,
    prompt: &Prompt,
    prompt_id: usize,
    schedule: &SearchSchedule,
    critic: &dyn PrefixScorer,
    temperature: f64,
    run_seed: u64,
) -> Result<SearchOutcome> {
    run_staged(
        env,
        prompt,
        prompt_id,
        schedule,
        Some(critic),
        Pruning::Softmax { temperature },
        Selector::Scorer(critic),
        run_seed,
    )
}
