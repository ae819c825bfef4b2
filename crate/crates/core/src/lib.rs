//! Desk-scale laboratory for prefix value critics on autoregressive
//! multi-codebook token generation.
//!
//! The crate is organized bottom-up:
//!
//! - [`env`]: a synthetic generator over `R × T` code grids that commits to a
//!   latent plan up front, leaks part of it into the prefix, and realizes it in
//!   the body; plus an analytic instruction-following score.
//! - [`gae`]: TD residuals and λ-weighted targets over a sparse supervision grid.
//! - [`critic`]: the prefix critic (codebook-sum embedding, causal pooling,
//!   tanh head) with hand-derived gradients and an Adam trainer.
//! - [`probe`]: prefix probes for global attributes and rank correlations.
//! - [`search`]: blind, best-of-N, prefix-first and staged sampling with exact
//!   token-cost accounting, plus the postfix-variance study.
//! - [`data`]: rollout collection, prompt-level splits and JSONL persistence.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common instantiations.

pub mod config;
pub mod critic;
pub mod data;
pub mod env;
pub mod error;
pub mod gae;
pub mod optim;
pub mod probe;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod search;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Critic parameters in double precision (training and finite-difference checks).
pub type Critic = critic::CriticParams<f64>;
/// Critic parameters in single precision.
pub type Critic32 = critic::CriticParams<f32>;
/// Value trace in double precision.
pub type ValueTrace = gae::ValueTrace<f64>;
/// GAE targets in double precision.
pub type GaeTargets = gae::GaeTargets<f64>;

/// Probe network in double precision.
pub type Probe = probe::ProbeModel<f64>;
