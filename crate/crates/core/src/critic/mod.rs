//! Prefix critic: codebook-sum token embeddings, causal cumulative-mean
//! pooling, prompt features and a two-layer tanh value head.
//!
//! For a prefix with columns `1..=t` and a prompt with events `c_1..c_N`:
//!
//! ```text
//! e'_k  = Σ_r Embed_r[code_{r,k}]
//! x_t   = [ mean(e'_1..e'_t) ; mean_i Prompt[c_i] ; count_scale · N ]
//! s_t   = value_scale · (w2 · tanh(W1 x_t + b1) + b2)
//! ```
//!
//! `s_t` depends only on columns `≤ t`. Gradients are derived by hand in
//! [`model`] and checked against central differences in the tests.

mod checkpoint;
mod dataset;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use dataset::{arch_for, train_on_dataset, value_score_correlation, ExampleSet};
pub use model::{
    batch_targets, cumulative_feature, embed_prefix, encode_and_score, loss_and_grad,
    loss_and_grad_with_targets, loss_with_targets, score_prefix, Example,
};
pub use train::{init_params, train, LossPoint, TrainConfig, TrainOutcome};

use rand_distr::{Distribution, Normal};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::rng::{uniform, Rng};
use crate::scalar::Scalar;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticArch {
    pub vocab: usize,
    pub rows: usize,
    /// Embedding width `d`.
    pub width: usize,
    pub hidden: usize,
    pub n_categories: usize,
    /// Fixed output scale (score units).
    pub value_scale: f64,
}

impl CriticArch {
    pub const KEYS: &'static [&'static str] = &["critic_width", "critic_hidden", "value_scale"];

    pub fn new(vocab: usize, rows: usize, n_categories: usize) -> Self {
        Self {
            vocab,
            rows,
            width: 32,
            hidden: 64,
            n_categories,
            value_scale: 100.0,
        }
    }

    pub fn with_kv(mut self, kv: &KvConfig) -> Result<Self> {
        self.width = kv.get("critic_width", self.width)?;
        self.hidden = kv.get("critic_hidden", self.hidden)?;
        self.value_scale = kv.get("value_scale", self.value_scale)?;
        if self.width == 0 || self.hidden == 0 || !(self.value_scale > 0.0) {
            return Err(Error::Config(
                "critic_width, critic_hidden and value_scale must be positive".into(),
            ));
        }
        Ok(self)
    }

    pub fn features(&self) -> usize {
        2 * self.width + 1
    }

    fn embed_len(&self) -> usize {
        self.rows * self.vocab * self.width
    }

    fn prompt_offset(&self) -> usize {
        self.embed_len()
    }

    fn count_offset(&self) -> usize {
        self.prompt_offset() + self.n_categories * self.width
    }

    fn w1_offset(&self) -> usize {
        self.count_offset() + 1
    }

    fn b1_offset(&self) -> usize {
        self.w1_offset() + self.hidden * self.features()
    }

    fn w2_offset(&self) -> usize {
        self.b1_offset() + self.hidden
    }

    fn b2_offset(&self) -> usize {
        self.w2_offset() + self.hidden
    }

    pub fn n_params(&self) -> usize {
        self.b2_offset() + 1
    }
}

/// All critic weights in one flat vector; gradients share the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticParams<F> {
    arch: CriticArch,
    data: Vec<F>,
}

impl<F: Scalar> CriticParams<F> {
    pub fn zeros(arch: CriticArch) -> Self {
        Self {
            arch,
            data: vec![F::zero(); arch.n_params()],
        }
    }

    pub fn from_flat(arch: CriticArch, data: Vec<F>) -> Result<Self> {
        if data.len() != arch.n_params() {
            return Err(Error::LengthMismatch {
                left: arch.n_params(),
                right: data.len(),
            });
        }
        Ok(Self { arch, data })
    }

    /// Small random weights.
    pub fn random(arch: CriticArch, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(arch);
        let embed = Normal::new(0.0, 0.1).expect("valid std");
        for x in p.data[..arch.count_offset()].iter_mut() {
            *x = F::of(embed.sample(rng));
        }
        p.data[arch.count_offset()] = F::of(0.1);
        let fan = (6.0 / (arch.features() + arch.hidden) as f64).sqrt();
        for x in p.w1_mut() {
            *x = F::of(uniform(rng, -fan, fan));
        }
        let fan2 = (6.0 / (arch.hidden + 1) as f64).sqrt();
        for x in p.w2_mut() {
            *x = F::of(uniform(rng, -fan2, fan2));
        }
        p
    }

    pub fn arch(&self) -> &CriticArch {
        &self.arch
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn embedding(&self, row: usize, token: usize) -> &[F] {
        let d = self.arch.width;
        let at = (row * self.arch.vocab + token) * d;
        &self.data[at..at + d]
    }

    pub(crate) fn embedding_mut(&mut self, row: usize, token: usize) -> &mut [F] {
        let d = self.arch.width;
        let at = (row * self.arch.vocab + token) * d;
        &mut self.data[at..at + d]
    }

    pub fn prompt_embedding(&self, category: usize) -> &[F] {
        let d = self.arch.width;
        let at = self.arch.prompt_offset() + category * d;
        &self.data[at..at + d]
    }

    pub(crate) fn prompt_embedding_mut(&mut self, category: usize) -> &mut [F] {
        let d = self.arch.width;
        let at = self.arch.prompt_offset() + category * d;
        &mut self.data[at..at + d]
    }

    pub fn count_scale(&self) -> F {
        self.data[self.arch.count_offset()]
    }

    pub(crate) fn count_scale_mut(&mut self) -> &mut F {
        let at = self.arch.count_offset();
        &mut self.data[at]
    }

    /// `hidden × (2d + 1)`, row-major.
    pub fn w1(&self) -> &[F] {
        &self.data[self.arch.w1_offset()..self.arch.b1_offset()]
    }

    pub fn w1_mut(&mut self) -> &mut [F] {
        let (a, b) = (self.arch.w1_offset(), self.arch.b1_offset());
        &mut self.data[a..b]
    }

    pub fn b1(&self) -> &[F] {
        &self.data[self.arch.b1_offset()..self.arch.w2_offset()]
    }

    pub fn b1_mut(&mut self) -> &mut [F] {
        let (a, b) = (self.arch.b1_offset(), self.arch.w2_offset());
        &mut self.data[a..b]
    }

    pub fn w2(&self) -> &[F] {
        &self.data[self.arch.w2_offset()..self.arch.b2_offset()]
    }

    pub fn w2_mut(&mut self) -> &mut [F] {
        let (a, b) = (self.arch.w2_offset(), self.arch.b2_offset());
        &mut self.data[a..b]
    }

    pub fn b2(&self) -> F {
        self.data[self.arch.b2_offset()]
    }

    pub fn b2_mut(&mut self) -> &mut F {
        let at = self.arch.b2_offset();
        &mut self.data[at]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Swaps codebook rows `a` and `b` of the embedding tables.
    pub fn swap_rows(&mut self, a: usize, b: usize) {
        let block = self.arch.vocab * self.arch.width;
        for i in 0..block {
            self.data.swap(a * block + i, b * block + i);
        }
    }

    pub fn cast<G: Scalar>(&self) -> CriticParams<G> {
        CriticParams {
            arch: self.arch,
            data: self.data.iter().map(|x| G::of(x.to_f64_lossy())).collect(),
        }
    }
}
