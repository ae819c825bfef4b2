//! Credit assignment over a sparse supervision grid.
//!
//! The critic is supervised only at steps `K, 2K, …, T`. Those `M` steps are
//! treated as consecutive positions `1..=M`; the reward is zero everywhere
//! except position `M`, which carries the sequence score `ŝ`, and the value
//! after the last position is bootstrapped as zero.
//!
//! Targets are the λ-weighted sums of TD residuals,
//! `r_j = s_j + Σ_{l=0}^{M-j} (γλ)^l δ_{j+l}` with
//! `δ_j = ŝ_j + γ s_{j+1} − s_j`, evaluated here through the equivalent
//! λ-return recursion `r_j = ŝ_j + γ((1−λ) s_{j+1} + λ r_{j+1})`. That form
//! keeps `r_M == ŝ` exact in floating point, and makes the `γ = λ = 1` and
//! `λ = 0` limits exact as well.

use rand_distr::{Distribution, Normal};

use crate::config::{check_prob, KvConfig};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaeConfig {
    pub gamma: f64,
    pub lambda: f64,
    /// Supervised-step spacing `K`.
    pub interval: usize,
    pub label_noise_sigma: f64,
}

impl Default for GaeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            interval: 8,
            label_noise_sigma: 1.0,
        }
    }
}

impl GaeConfig {
    pub const KEYS: &'static [&'static str] = &["gamma", "lambda", "interval", "label_noise_sigma"];

    /// Reads the GAE keys and checks that `interval` divides `steps`.
    pub fn from_kv(kv: &KvConfig, steps: usize) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            gamma: kv.get("gamma", d.gamma)?,
            lambda: kv.get("lambda", d.lambda)?,
            interval: kv.get("interval", d.interval)?,
            label_noise_sigma: kv.get("label_noise_sigma", d.label_noise_sigma)?,
        };
        cfg.validate(steps)?;
        Ok(cfg)
    }

    pub fn validate(&self, steps: usize) -> Result<()> {
        check_prob("gamma", self.gamma)?;
        check_prob("lambda", self.lambda)?;
        if !(self.label_noise_sigma >= 0.0 && self.label_noise_sigma.is_finite()) {
            return Err(Error::Config("label_noise_sigma must be >= 0".into()));
        }
        supervised_steps(steps, self.interval).map(|_| ())
    }
}

/// Supervised steps `[K, 2K, …, T]`.
pub fn supervised_steps(steps: usize, interval: usize) -> Result<Vec<usize>> {
    if interval == 0 || steps == 0 || steps % interval != 0 {
        return Err(Error::BadInterval { interval, steps });
    }
    Ok((1..=steps / interval).map(|i| i * interval).collect())
}

/// Value estimates at supervised steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTrace<F> {
    pub steps: Vec<usize>,
    pub values: Vec<F>,
    pub detached: bool,
}

impl<F: Scalar> ValueTrace<F> {
    pub fn new(steps: Vec<usize>, values: Vec<F>) -> Result<Self> {
        if steps.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: steps.len(),
                right: values.len(),
            });
        }
        if steps.is_empty() || steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Degenerate(
                "trace steps must be non-empty and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("trace values must be finite".into()));
        }
        Ok(Self {
            steps,
            values,
            detached: false,
        })
    }

    /// Copy that takes no part in gradient computation.
    pub fn detach(&self) -> Self {
        Self {
            detached: true,
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> F {
        *self.values.last().expect("trace is non-empty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaeTargets<F> {
    pub targets: Vec<F>,
}

/// `δ_j = ŝ_j + γ s_{j+1} − s_j` with `ŝ_j = 0` for `j < M`, `ŝ_M = ŝ`,
/// `s_{M+1} = 0`.
pub fn td_residuals<F: Scalar>(values: &[F], reward: F, gamma: F) -> Vec<F> {
    let m = values.len();
    (0..m)
        .map(|j| {
            let next = if j + 1 < m { values[j + 1] } else { F::zero() };
            let r = if j + 1 == m { reward } else { F::zero() };
            r + gamma * next - values[j]
        })
        .collect()
}

/// Advantages `A_j = δ_j + γλ A_{j+1}` by backward recursion.
pub fn advantages<F: Scalar>(values: &[F], reward: F, gamma: F, lambda: F) -> Vec<F> {
    let deltas = td_residuals(values, reward, gamma);
    let decay = gamma * lambda;
    let mut out = vec![F::zero(); deltas.len()];
    let mut acc = F::zero();
    for j in (0..deltas.len()).rev() {
        acc = deltas[j] + decay * acc;
        out[j] = acc;
    }
    out
}

/// λ-return recursion over raw values; see the module docs.
pub fn lambda_returns<F: Scalar>(values: &[F], reward: F, gamma: F, lambda: F) -> Vec<F> {
    let m = values.len();
    let mut out = vec![F::zero(); m];
    let mut next_value = F::zero();
    let mut next_return = F::zero();
    let one = F::one();
    for j in (0..m).rev() {
        let r = if j + 1 == m { reward } else { F::zero() };
        out[j] = r + gamma * ((one - lambda) * next_value + lambda * next_return);
        next_value = values[j];
        next_return = out[j];
    }
    out
}

pub fn gae_targets<F: Scalar>(
    s_old: &ValueTrace<F>,
    reward: F,
    cfg: &GaeConfig,
) -> Result<GaeTargets<F>> {
    if !s_old.detached {
        return Err(Error::NotDetached);
    }
    Ok(GaeTargets {
        targets: lambda_returns(&s_old.values, reward, F::of(cfg.gamma), F::of(cfg.lambda)),
    })
}

/// Mean over steps of `½ (s_j − r_j)²`.
pub fn critic_loss<F: Scalar>(values: &[F], targets: &[F]) -> Result<F> {
    if values.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: values.len(),
            right: targets.len(),
        });
    }
    if values.is_empty() {
        return Err(Error::Degenerate("empty trace".into()));
    }
    let sum: F = values
        .iter()
        .zip(targets)
        .map(|(&s, &r)| F::half() * (s - r) * (s - r))
        .sum();
    Ok(sum / F::of_usize(values.len()))
}

/// `score + N(0, σ²)`; σ = 0 returns `score` unchanged without consuming
/// randomness.
pub fn noisy_label(score: f64, sigma: f64, rng: &mut Rng) -> f64 {
    if sigma == 0.0 {
        return score;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated non-negative");
    score + normal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, uniform};
    use rand::Rng as _;

    /// Explicit double sum, independent of either recursion.
    fn brute_force(values: &[f64], reward: f64, gamma: f64, lambda: f64) -> Vec<f64> {
        let m = values.len();
        let s = |k: usize| if k < m { values[k] } else { 0.0 };
        let shat = |k: usize| if k + 1 == m { reward } else { 0.0 };
        (0..m)
            .map(|j| {
                let mut total = s(j);
                for l in 0..(m - j) {
                    let delta = shat(j + l) + gamma * s(j + l + 1) - s(j + l);
                    total += (gamma * lambda).powi(l as i32) * delta;
                }
                total
            })
            .collect()
    }

    #[test]
    fn supervised_grid() {
        let s = supervised_steps(288, 32).unwrap();
        assert_eq!(s.len(), 9);
        assert_eq!((s[0], s[8]), (32, 288));
        assert_eq!(supervised_steps(64, 64).unwrap(), vec![64]);
        let s = supervised_steps(64, 8).unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(*s.last().unwrap(), 64);
        assert!(matches!(supervised_steps(64, 7), Err(Error::BadInterval { .. })));
        assert!(supervised_steps(64, 0).is_err());
    }

    #[test]
    fn worked_residuals() {
        let d = td_residuals(&[0.5f64, 0.2, 0.1], 1.0, 0.9);
        let expected = [-0.32, -0.11, 0.9];
        for (a, b) in d.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{d:?}");
        }
        assert_eq!(td_residuals(&[0.0; 4], 1.0, 0.9), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(td_residuals(&[0.25], 2.0, 0.5), vec![1.75]);
    }

    #[test]
    fn worked_targets() {
        let trace = ValueTrace::new(vec![1, 2, 3], vec![0.5f64, 0.2, 0.1]).unwrap().detach();
        let cfg = GaeConfig {
            gamma: 0.9,
            lambda: 0.8,
            ..GaeConfig::default()
        };
        let r: Vec<f64> = gae_targets(&trace, 1.0, &cfg).unwrap().targets;
        let oracle = brute_force(&[0.5, 0.2, 0.1], 1.0, 0.9, 0.8);
        for (got, want) in r.iter().zip([0.56736, 0.738, 1.0]) {
            assert!((got - want).abs() < 1e-12, "{r:?}");
        }
        for (got, want) in r.iter().zip(&oracle) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn targets_require_detached_trace() {
        let trace = ValueTrace::new(vec![8], vec![0.0f64]).unwrap();
        assert!(matches!(
            gae_targets(&trace, 1.0, &GaeConfig::default()),
            Err(Error::NotDetached)
        ));
    }

    #[test]
    fn advantages_agree_with_returns() {
        let mut rng = rng_from_seed(1);
        for _ in 0..200 {
            let m = 1 + (uniform(&mut rng, 0.0, 16.0) as usize);
            let v: Vec<f64> = (0..m).map(|_| uniform(&mut rng, -5.0, 5.0)).collect();
            let (g, l, s) = (rng.random(), rng.random(), uniform(&mut rng, 0.0, 100.0));
            let adv = advantages(&v, s, g, l);
            let ret = lambda_returns(&v, s, g, l);
            for j in 0..m {
                assert!((v[j] + adv[j] - ret[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn limits_are_exact() {
        let mut rng = rng_from_seed(2);
        for _ in 0..200 {
            let m = 1 + (uniform(&mut rng, 0.0, 64.0) as usize);
            let v: Vec<f64> = (0..m).map(|_| uniform(&mut rng, -5.0, 5.0)).collect();
            let s = uniform(&mut rng, 0.0, 100.0);
            let (g, l): (f64, f64) = (rng.random(), rng.random());
            assert_eq!(*lambda_returns(&v, s, g, l).last().unwrap(), s);
            assert!(lambda_returns(&v, s, 1.0, 1.0).iter().all(|&r| r == s));
            let td0 = lambda_returns(&v, s, g, 0.0);
            for j in 0..m - 1 {
                assert_eq!(td0[j], g * v[j + 1]);
            }
            assert_eq!(td0[m - 1], s);
        }
    }

    #[test]
    fn targets_are_affine_in_reward() {
        let v = [0.3f64, -1.2, 2.0, 0.7, 4.1];
        let (g, l): (f64, f64) = (0.93, 0.7);
        let r0 = lambda_returns(&v, 0.0, g, l);
        let r1 = lambda_returns(&v, 1.0, g, l);
        let r2 = lambda_returns(&v, 2.0, g, l);
        let m = v.len();
        for j in 0..m {
            let slope = (g * l).powi((m - 1 - j) as i32);
            assert!((r1[j] - r0[j] - slope).abs() < 1e-12);
            assert!((r2[j] - r1[j] - slope).abs() < 1e-12);
        }
    }

    #[test]
    fn single_precision_targets() {
        let r = lambda_returns(&[0.5f32, 0.2, 0.1], 1.0, 0.9, 0.8);
        assert!((r[0] - 0.56736).abs() < 1e-6);
        assert_eq!(r[2], 1.0);
    }

    #[test]
    fn loss_values() {
        assert_eq!(critic_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(critic_loss(&[0.0, 0.0], &[2.0, 4.0]).unwrap(), 5.0);
        assert!(matches!(
            critic_loss(&[0.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
        // naive recomputation on a seeded batch
        let mut rng = rng_from_seed(3);
        let s: Vec<f64> = (0..37).map(|_| uniform(&mut rng, -3.0, 3.0)).collect();
        let r: Vec<f64> = (0..37).map(|_| uniform(&mut rng, -3.0, 3.0)).collect();
        let mut naive = 0.0;
        for i in 0..37 {
            naive += 0.5 * (s[i] - r[i]).powi(2);
        }
        assert!((critic_loss(&s, &r).unwrap() - naive / 37.0).abs() < 1e-12);
    }

    #[test]
    fn noise_statistics() {
        let mut rng = rng_from_seed(4);
        assert_eq!(noisy_label(42.0, 0.0, &mut rng), 42.0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| noisy_label(10.0, 1.0, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((0.97..=1.03).contains(&sd), "sd = {sd}");
        assert!((mean - 10.0).abs() < 0.02);
        let golden = noisy_label(50.0, 2.0, &mut rng_from_seed(2025));
        assert_eq!(golden, GOLDEN_NOISY);
    }

    const GOLDEN_NOISY: f64 = 50.211138926683496;
}
