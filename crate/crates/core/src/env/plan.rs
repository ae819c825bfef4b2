use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::config::{EnvConfig, FidelityDist};
use super::prompt::Prompt;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// What happens to one intended event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fate {
    Realize,
    Drop,
    Substitute(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedEvent {
    pub category: usize,
    pub start: usize,
    pub len: usize,
    /// Fate committed at plan time. `Realize` may still fail in the body.
    pub fate: Fate,
}

impl PlannedEvent {
    pub fn contains(&self, t: usize) -> bool {
        t >= self.start && t < self.start + self.len
    }
}

/// The latent plan sampled before any token is emitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPlan {
    pub events: Vec<PlannedEvent>,
    pub fidelity: f64,
    pub leak_prob: f64,
}

impl LatentPlan {
    pub fn intended(&self) -> Vec<usize> {
        self.events.iter().map(|e| e.category).collect()
    }

    /// Categories the plan currently intends to make audible, in order.
    pub fn audible(&self) -> Vec<usize> {
        self.events
            .iter()
            .filter_map(|e| match e.fate {
                Fate::Realize => Some(e.category),
                Fate::Substitute(s) => Some(s),
                Fate::Drop => None,
            })
            .collect()
    }
}

/// Probability that an event marked `Realize` in the plan fails in the body,
/// chosen so that the overall realization probability equals `fidelity`.
pub fn body_failure_prob(fidelity: f64, commitment: f64) -> f64 {
    let planned_unrealized = commitment * (1.0 - fidelity);
    if planned_unrealized >= 1.0 {
        return 1.0;
    }
    ((1.0 - commitment) * (1.0 - fidelity) / (1.0 - planned_unrealized)).clamp(0.0, 1.0)
}

/// Drop or substitute an unrealized event. Substitutes come from categories
/// absent from the prompt.
pub(crate) fn unrealized_fate(prompt: &Prompt, cfg: &EnvConfig, rng: &mut Rng) -> Fate {
    let drop = rng.random::<f64>() < cfg.drop_substitute_split;
    let pick = rng.random::<f64>();
    if drop {
        return Fate::Drop;
    }
    let others: Vec<usize> = (0..cfg.n_event_categories)
        .filter(|c| !prompt.events().contains(c))
        .collect();
    if others.is_empty() {
        Fate::Drop
    } else {
        Fate::Substitute(others[((pick * others.len() as f64) as usize).min(others.len() - 1)])
    }
}

pub fn slot_len(n_events: usize, cfg: &EnvConfig) -> Result<usize> {
    let body = cfg.body_steps();
    let slot = body / n_events.max(1);
    // one separator column keeps neighbouring runs apart
    if slot < cfg.min_event_len + 1 {
        return Err(Error::BodyOverflow {
            events: n_events,
            min_len: cfg.min_event_len,
            body,
        });
    }
    Ok(slot)
}

pub fn sample_plan(prompt: &Prompt, rng: &mut Rng, cfg: &EnvConfig) -> Result<LatentPlan> {
    let n = prompt.event_count();
    let slot = slot_len(n, cfg)?;
    let mut order = prompt.events().to_vec();
    if rng.random::<f64>() < cfg.reorder_prob {
        order.shuffle(rng);
    }
    let fidelity = match cfg.fidelity {
        FidelityDist::Fixed(f) => f,
        FidelityDist::Beta { alpha, beta } => Beta::new(alpha, beta)
            .map_err(|e| Error::Config(format!("fidelity distribution: {e}")))?
            .sample(rng),
    };
    let commit = cfg.plan_commitment * (1.0 - fidelity);
    let events = order
        .into_iter()
        .enumerate()
        .map(|(i, category)| {
            let fate = if rng.random::<f64>() < commit {
                unrealized_fate(prompt, cfg, rng)
            } else {
                Fate::Realize
            };
            let len = rng.random_range(cfg.min_event_len..slot);
            PlannedEvent {
                category,
                start: cfg.sketch_steps + i * slot,
                len,
                fate,
            }
        })
        .collect();
    Ok(LatentPlan {
        events,
        fidelity,
        leak_prob: cfg.leak_prob,
    })
}
