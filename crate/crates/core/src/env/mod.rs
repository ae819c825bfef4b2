//! Synthetic autoregressive generator over multi-codebook code grids.
//!
//! A generation first samples a [`LatentPlan`] (which events will sound,
//! where, and which ones will be dropped or substituted). The sketch region
//! `[0, T_sketch)` leaks the audible part of that plan with probability
//! `leak_prob` per slot; the body realizes it as runs of event tokens. Rows
//! `1..R` are hashes of row 0 plus noise.

mod config;
mod grid;
mod plan;
mod prompt;
mod reward;
mod vocab;

pub use config::{EnvConfig, FidelityDist, PromptConfig, MAX_PROMPT_EVENTS};
pub use grid::CodeGrid;
pub use plan::{body_failure_prob, sample_plan, slot_len, Fate, LatentPlan, PlannedEvent};
pub use prompt::{category_name, sample_prompt, Prompt};
pub use reward::{clap_surrogate, decode_events, instruction_score, RewardSignal};
pub use vocab::{Token, TokenRole, Vocab};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{hash2, Rng};

/// Generator state carried alongside a partial grid (the analog of a decoder
/// cache). Consumers that score prefixes from tokens must not read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenState {
    pub prompt: Prompt,
    pub plan: LatentPlan,
    pub position: usize,
    /// Fate decided when the body reaches each event, `None` before that.
    pub body_fates: Vec<Option<Fate>>,
}

/// A validated environment.
#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    vocab: Vocab,
}

impl Env {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let vocab = Vocab::new(cfg.n_event_categories, cfg.n_texture_tokens);
        Ok(Self { cfg, vocab })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn steps(&self) -> usize {
        self.cfg.steps
    }

    pub fn sample_prompt(&self, rng: &mut Rng, cfg: &PromptConfig) -> Prompt {
        sample_prompt(rng, cfg)
    }

    pub fn sample_plan(&self, prompt: &Prompt, rng: &mut Rng) -> Result<LatentPlan> {
        sample_plan(prompt, rng, &self.cfg)
    }

    /// Samples a plan and returns the empty grid and state at position 0.
    pub fn start(&self, prompt: &Prompt, rng: &mut Rng) -> Result<(CodeGrid, GenState)> {
        Prompt::new(prompt.events().to_vec(), self.cfg.n_event_categories)?;
        let plan = self.sample_plan(prompt, rng)?;
        let n = plan.events.len();
        Ok((
            CodeGrid::empty(self.cfg.rows),
            GenState {
                prompt: prompt.clone(),
                plan,
                position: 0,
                body_fates: vec![None; n],
            },
        ))
    }

    /// Generates columns `[state.position, upto)`; returns how many were added.
    pub fn extend(
        &self,
        grid: &mut CodeGrid,
        state: &mut GenState,
        upto: usize,
        rng: &mut Rng,
    ) -> Result<usize> {
        if grid.width() != state.position {
            return Err(Error::StateMismatch {
                position: state.position,
                width: grid.width(),
            });
        }
        let upto = upto.min(self.cfg.steps);
        let start = state.position;
        let mut column = vec![0; self.cfg.rows];
        while state.position < upto {
            self.next_column(state, rng, &mut column);
            grid.push_column(&column);
            state.position += 1;
        }
        Ok(upto.saturating_sub(start))
    }

    fn next_column(&self, state: &mut GenState, rng: &mut Rng, column: &mut [Token]) {
        let t = state.position;
        let v = &self.vocab;
        let row0 = if t < self.cfg.sketch_steps {
            let leak = rng.random::<f64>() < self.cfg.leak_prob;
            let texture = rng.random_range(0..v.n_texture());
            if leak {
                let audible = state.plan.audible();
                match audible.len() {
                    0 => v.silence(),
                    n => v.sketch(audible[t % n]),
                }
            } else {
                v.texture(texture)
            }
        } else {
            match state.plan.events.iter().position(|e| e.contains(t)) {
                None => v.silence(),
                Some(i) => {
                    let fate = match state.body_fates[i] {
                        Some(f) => f,
                        None => {
                            let f = self.body_fate(state, i, rng);
                            state.body_fates[i] = Some(f);
                            f
                        }
                    };
                    match fate {
                        Fate::Realize => v.event(state.plan.events[i].category),
                        Fate::Substitute(s) => v.event(s),
                        Fate::Drop => v.silence(),
                    }
                }
            }
        };
        column[0] = row0;
        let size = v.size() as u64;
        for (r, slot) in column.iter_mut().enumerate().skip(1) {
            let noisy = rng.random::<f64>() < self.cfg.row_noise;
            let uniform = rng.random_range(0..size);
            let code = if noisy {
                uniform
            } else {
                hash2(row0 as u64, r as u64) % size
            };
            *slot = code as Token;
        }
    }

    fn body_fate(&self, state: &GenState, i: usize, rng: &mut Rng) -> Fate {
        let planned = state.plan.events[i].fate;
        if planned != Fate::Realize {
            return planned;
        }
        let q = body_failure_prob(state.plan.fidelity, self.cfg.plan_commitment);
        if rng.random::<f64>() < q {
            plan::unrealized_fate(&state.prompt, &self.cfg, rng)
        } else {
            Fate::Realize
        }
    }

    /// Generates a prefix of `width` columns.
    pub fn generate_prefix(
        &self,
        prompt: &Prompt,
        width: usize,
        rng: &mut Rng,
    ) -> Result<(CodeGrid, GenState)> {
        let (mut grid, mut state) = self.start(prompt, rng)?;
        self.extend(&mut grid, &mut state, width, rng)?;
        Ok((grid, state))
    }

    pub fn generate(&self, prompt: &Prompt, rng: &mut Rng) -> Result<(CodeGrid, GenState, RewardSignal)> {
        let (grid, state) = self.generate_prefix(prompt, self.cfg.steps, rng)?;
        let reward = self.reward(prompt, &grid);
        Ok((grid, state, reward))
    }

    /// Completes a prefix under the plan carried by `state`. Columns before
    /// `state.position` are never modified.
    pub fn continue_from(
        &self,
        prefix: &CodeGrid,
        state: &GenState,
        rng: &mut Rng,
    ) -> Result<(CodeGrid, RewardSignal)> {
        let mut grid = prefix.clone();
        let mut state = state.clone();
        self.extend(&mut grid, &mut state, self.cfg.steps, rng)?;
        let reward = self.reward(&state.prompt, &grid);
        Ok((grid, reward))
    }

    pub fn decode_events(&self, grid: &CodeGrid) -> Vec<usize> {
        decode_events(grid, &self.cfg)
    }

    pub fn score(&self, prompt: &Prompt, grid: &CodeGrid) -> f64 {
        clap_surrogate(prompt.events(), grid, &self.cfg)
    }

    pub fn reward(&self, prompt: &Prompt, grid: &CodeGrid) -> RewardSignal {
        RewardSignal::new(self.score(prompt, grid), self.cfg.steps)
    }
}
