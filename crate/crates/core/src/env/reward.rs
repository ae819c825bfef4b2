//! Analytic instruction-following score between prompted and realized events.

use serde::{Deserialize, Serialize};

use super::config::EnvConfig;
use super::grid::CodeGrid;
use super::vocab::{TokenRole, Vocab};

/// Score plus the sparse per-step reward used for critic training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSignal {
    pub score: f64,
    /// Training label; equals `score` until noise is applied.
    pub noisy_label: f64,
    /// Zero everywhere except the last step, which holds `score`.
    pub sparse: Vec<f64>,
}

impl RewardSignal {
    pub fn new(score: f64, steps: usize) -> Self {
        let mut sparse = vec![0.0; steps];
        if let Some(last) = sparse.last_mut() {
            *last = score;
        }
        Self {
            score,
            noisy_label: score,
            sparse,
        }
    }
}

/// Maximal runs of a single event token in row 0 of the body, in temporal
/// order. Runs shorter than `min_run_len` are ignored.
pub fn decode_events(grid: &CodeGrid, cfg: &EnvConfig) -> Vec<usize> {
    let vocab = Vocab::new(cfg.n_event_categories, cfg.n_texture_tokens);
    let row = grid.row(0);
    let start = cfg.sketch_steps.min(row.len());
    let mut out = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    let flush = |run: Option<(usize, usize)>, out: &mut Vec<usize>| {
        if let Some((cat, len)) = run {
            if len >= cfg.min_run_len {
                out.push(cat);
            }
        }
    };
    for &tok in &row[start..] {
        let cat = match vocab.role(tok) {
            Some(TokenRole::Event(c)) => Some(c),
            _ => None,
        };
        current = match (current, cat) {
            (Some((c, len)), Some(n)) if c == n => Some((c, len + 1)),
            (run, next) => {
                flush(run, &mut out);
                next.map(|c| (c, 1))
            }
        };
    }
    flush(current, &mut out);
    out
}

/// Matched pairs `(prompt index, realized index)`, pairing the k-th occurrence
/// of a category in the prompt with its k-th occurrence in the realization.
fn matched_pairs(prompt: &[usize], realized: &[usize]) -> Vec<(usize, usize)> {
    let mut used = vec![false; realized.len()];
    let mut pairs = Vec::new();
    for (i, &c) in prompt.iter().enumerate() {
        if let Some(j) = (0..realized.len()).find(|&j| !used[j] && realized[j] == c) {
            used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

/// `100 · F1 · (0.5 + 0.5 · ORD)` with multiset F1 and ORD the fraction of
/// concordant pairs among matched events (1 when fewer than two matches).
pub fn instruction_score(prompt: &[usize], realized: &[usize]) -> f64 {
    if prompt.is_empty() && realized.is_empty() {
        return 100.0;
    }
    let pairs = matched_pairs(prompt, realized);
    let m = pairs.len();
    if m == 0 {
        return 0.0;
    }
    let f1 = 2.0 * m as f64 / (prompt.len() + realized.len()) as f64;
    let ord = if m < 2 {
        1.0
    } else {
        let mut concordant = 0usize;
        for a in 0..m {
            for b in a + 1..m {
                // prompt indices increase with a < b
                if pairs[b].1 > pairs[a].1 {
                    concordant += 1;
                }
            }
        }
        concordant as f64 / (m * (m - 1) / 2) as f64
    };
    100.0 * f1 * (0.5 + 0.5 * ord)
}

pub fn clap_surrogate(prompt: &[usize], grid: &CodeGrid, cfg: &EnvConfig) -> f64 {
    instruction_score(prompt, &decode_events(grid, cfg))
}
