use super::model::{embed_prefix, encode_and_score, Example};
use super::train::{train, TrainConfig, TrainOutcome};
use super::{CriticArch, CriticParams};
use crate::data::{Dataset, Split};
use crate::env::{CodeGrid, EnvConfig, Prompt, Vocab};
use crate::error::{Error, Result};
use crate::probe::CorrelationReport;
use crate::scalar::Scalar;

/// Decoded grids, prompts and clean scores of one split.
#[derive(Debug, Clone, Default)]
pub struct ExampleSet {
    pub grids: Vec<CodeGrid>,
    pub prompts: Vec<Prompt>,
    pub scores: Vec<f64>,
}

impl ExampleSet {
    pub fn from_split(ds: &Dataset, split: Split, n_categories: usize) -> Result<Self> {
        let mut out = Self::default();
        for r in ds.in_split(split) {
            out.grids.push(r.grid()?);
            out.prompts.push(r.prompt(n_categories)?);
            out.scores.push(r.score);
        }
        Ok(out)
    }

    pub fn examples(&self) -> Vec<Example<'_>> {
        self.grids
            .iter()
            .zip(&self.prompts)
            .zip(&self.scores)
            .map(|((grid, prompt), &label)| Example { grid, prompt, label })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Architecture matching the environment a dataset was collected from.
pub fn arch_for(env: &EnvConfig) -> CriticArch {
    let vocab = Vocab::new(env.n_event_categories, env.n_texture_tokens);
    CriticArch::new(vocab.size(), env.rows, env.n_event_categories)
}

/// Trains on the train split, selecting on the val split.
pub fn train_on_dataset<F: Scalar>(ds: &Dataset, arch: CriticArch, cfg: &TrainConfig) -> Result<TrainOutcome<F>> {
    let train_set = ExampleSet::from_split(ds, Split::Train, arch.n_categories)?;
    let val_set = ExampleSet::from_split(ds, Split::Val, arch.n_categories)?;
    train(&train_set.examples(), &val_set.examples(), arch, cfg)
}

/// Correlation between the critic value after `step` columns and the final
/// score, over a set of complete generations.
pub fn value_score_correlation<F: Scalar>(
    set: &ExampleSet,
    params: &CriticParams<F>,
    step: usize,
) -> Result<CorrelationReport> {
    if set.is_empty() {
        return Err(Error::Degenerate("no examples".into()));
    }
    let values = set
        .grids
        .iter()
        .zip(&set.prompts)
        .map(|(g, p)| {
            let e = embed_prefix(&g.prefix(step), params)?;
            Ok(encode_and_score(&e, p, &[step], params)?.last().to_f64_lossy())
        })
        .collect::<Result<Vec<f64>>>()?;
    CorrelationReport::compute(&values, &set.scores)
}
