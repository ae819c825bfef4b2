use super::model::{loss_and_grad, Example};
use super::{CriticArch, CriticParams};
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::gae::{noisy_label, supervised_steps, GaeConfig};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{derive_rng, Rng};
use crate::scalar::Scalar;

use rand::Rng as _;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// Cap on examples used for each validation pass.
    pub max_eval_examples: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub gae: GaeConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            steps: 6000,
            batch_size: 64,
            seed: 0,
            eval_every: 250,
            max_eval_examples: 2048,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            gae: GaeConfig::default(),
        }
    }
}

impl TrainConfig {
    pub const KEYS: &'static [&'static str] = &[
        "learning_rate",
        "train_steps",
        "batch_size",
        "eval_every",
        "max_eval_examples",
    ];

    pub fn from_kv(kv: &KvConfig, gae: GaeConfig, seed: u64) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            learning_rate: kv.get("learning_rate", d.learning_rate)?,
            steps: kv.get("train_steps", d.steps)?,
            batch_size: kv.get("batch_size", d.batch_size)?,
            eval_every: kv.get("eval_every", d.eval_every)?,
            max_eval_examples: kv.get("max_eval_examples", d.max_eval_examples)?,
            seed,
            gae,
            ..d
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.steps == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "learning_rate must be > 0, train_steps and batch_size >= 1".into(),
            ));
        }
        if self.eval_every == 0 || self.max_eval_examples == 0 {
            return Err(Error::Config("eval_every and max_eval_examples must be >= 1".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LossPoint {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    /// Parameters with the lowest validation loss seen (initial included).
    pub params: CriticParams<F>,
    pub curve: Vec<LossPoint>,
    pub best_step: usize,
    pub initial_val_loss: f64,
    pub best_val_loss: f64,
}

/// Random weights, zero output layer, output bias at the mean training label.
pub fn init_params<F: Scalar>(arch: CriticArch, train: &[Example<'_>], rng: &mut Rng) -> CriticParams<F> {
    let mut params = CriticParams::random(arch, rng);
    params.w2_mut().iter_mut().for_each(|w| *w = F::zero());
    let mean = train.iter().map(|e| e.label).sum::<f64>() / train.len().max(1) as f64;
    *params.b2_mut() = F::of(mean / arch.value_scale);
    params
}

fn evenly_spaced<'a>(examples: &[Example<'a>], cap: usize) -> Vec<Example<'a>> {
    if examples.len() <= cap {
        return examples.to_vec();
    }
    (0..cap)
        .map(|i| examples[i * examples.len() / cap])
        .collect()
}

/// Loss on clean labels with targets from the current parameters.
fn eval_loss<F: Scalar>(
    examples: &[Example<'_>],
    params: &CriticParams<F>,
    steps: &[usize],
    gae: &GaeConfig,
) -> Result<f64> {
    Ok(loss_and_grad(examples, params, steps, gae)?.0.to_f64_lossy())
}

/// Minibatch Adam on the GAE critic loss. Labels are re-noised on every draw.
pub fn train<F: Scalar>(
    train: &[Example<'_>],
    val: &[Example<'_>],
    arch: CriticArch,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<F>> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Degenerate("training and validation sets must be non-empty".into()));
    }
    let width = train[0].grid.width();
    let steps = supervised_steps(width, cfg.gae.interval)?;
    let mut rng = derive_rng(cfg.seed, &[0x7472_6169_6e]);
    let mut params: CriticParams<F> = init_params(arch, train, &mut rng);
    let mut adam = Adam::new(arch.n_params(), cfg.adam());

    let val_sub = evenly_spaced(val, cfg.max_eval_examples);
    let train_sub = evenly_spaced(train, cfg.max_eval_examples);
    let initial_val = eval_loss(&val_sub, &params, &steps, &cfg.gae)?;
    let mut curve = vec![LossPoint {
        step: 0,
        train_loss: eval_loss(&train_sub, &params, &steps, &cfg.gae)?,
        val_loss: initial_val,
    }];
    let mut best = (params.clone(), 0usize, initial_val);

    let mut window = 0.0;
    let mut window_len = 0usize;
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for step in 1..=cfg.steps {
        batch.clear();
        for _ in 0..cfg.batch_size {
            let ex = train[rng.random_range(0..train.len())];
            batch.push(Example {
                label: noisy_label(ex.label, cfg.gae.label_noise_sigma, &mut rng),
                ..ex
            });
        }
        let (loss, grad) = loss_and_grad(&batch, &params, &steps, &cfg.gae)?;
        let loss = loss.to_f64_lossy();
        if !loss.is_finite() {
            return Err(Error::Diverged { step });
        }
        adam.step(params.as_mut_slice(), grad.as_slice());
        if !params.is_finite() {
            return Err(Error::Diverged { step });
        }
        window += loss;
        window_len += 1;
        if step % cfg.eval_every == 0 || step == cfg.steps {
            let val_loss = eval_loss(&val_sub, &params, &steps, &cfg.gae)?;
            if !val_loss.is_finite() {
                return Err(Error::Diverged { step });
            }
            curve.push(LossPoint {
                step,
                train_loss: window / window_len as f64,
                val_loss,
            });
            window = 0.0;
            window_len = 0;
            if val_loss <= best.2 {
                best = (params.clone(), step, val_loss);
            }
        }
    }
    Ok(TrainOutcome {
        params: best.0,
        curve,
        best_step: best.1,
        initial_val_loss: initial_val,
        best_val_loss: best.2,
    })
}
