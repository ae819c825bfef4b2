use rayon::prelude::*;

use super::CriticParams;
use crate::env::{CodeGrid, Prompt};
use crate::error::{Error, Result};
use crate::gae::{critic_loss, gae_targets, GaeConfig, ValueTrace};
use crate::scalar::Scalar;

/// One training example: a full grid, its prompt and a (possibly noisy) label.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub grid: &'a CodeGrid,
    pub prompt: &'a Prompt,
    pub label: f64,
}

/// Codebook-sum embeddings `e'` for every column of `grid` (`width × d`).
pub fn embed_prefix<F: Scalar>(grid: &CodeGrid, params: &CriticParams<F>) -> Result<Vec<Vec<F>>> {
    let arch = params.arch();
    if grid.n_rows() != arch.rows {
        return Err(Error::LengthMismatch {
            left: arch.rows,
            right: grid.n_rows(),
        });
    }
    (0..grid.width())
        .map(|t| {
            let mut e = vec![F::zero(); arch.width];
            for (r, code) in grid.column(t).enumerate() {
                if code as usize >= arch.vocab {
                    return Err(Error::CodeOutOfRange {
                        code,
                        vocab: arch.vocab,
                    });
                }
                for (acc, &w) in e.iter_mut().zip(params.embedding(r, code as usize)) {
                    *acc += w;
                }
            }
            Ok(e)
        })
        .collect()
}

fn check_steps(steps: &[usize], width: usize) -> Result<()> {
    let mut prev = 0;
    for &s in steps {
        if s == 0 || s > width || s <= prev {
            return Err(Error::StepOutOfRange {
                step: s,
                max: width,
            });
        }
        prev = s;
    }
    if steps.is_empty() {
        return Err(Error::Degenerate("no steps requested".into()));
    }
    Ok(())
}

fn prompt_features<F: Scalar>(prompt: &Prompt, params: &CriticParams<F>) -> Result<Vec<F>> {
    let arch = params.arch();
    let mut p = vec![F::zero(); arch.width];
    for &c in prompt.events() {
        if c >= arch.n_categories {
            return Err(Error::Config(format!(
                "prompt category {c} outside critic's {} categories",
                arch.n_categories
            )));
        }
        for (acc, &w) in p.iter_mut().zip(params.prompt_embedding(c)) {
            *acc += w;
        }
    }
    let n = F::of_usize(prompt.event_count());
    p.iter_mut().for_each(|x| *x /= n);
    Ok(p)
}

/// Cumulative mean of `e'_1..e'_t`.
pub fn cumulative_feature<F: Scalar>(
    grid: &CodeGrid,
    t: usize,
    params: &CriticParams<F>,
) -> Result<Vec<F>> {
    check_steps(&[t], grid.width())?;
    let e = embed_prefix(&grid.prefix(t), params)?;
    let mut m = vec![F::zero(); params.arch().width];
    for col in &e {
        for (acc, &x) in m.iter_mut().zip(col) {
            *acc += x;
        }
    }
    let inv = F::one() / F::of_usize(t);
    m.iter_mut().for_each(|x| *x *= inv);
    Ok(m)
}

/// Cached activations at one step.
struct StepCache<F> {
    x: Vec<F>,
    h: Vec<F>,
}

struct Forward<F> {
    values: Vec<F>,
    caches: Vec<StepCache<F>>,
}

fn head<F: Scalar>(x: &[F], params: &CriticParams<F>) -> (F, Vec<F>) {
    let arch = params.arch();
    let nf = arch.features();
    let w1 = params.w1();
    let b1 = params.b1();
    let w2 = params.w2();
    let mut h = vec![F::zero(); arch.hidden];
    let mut out = params.b2();
    for k in 0..arch.hidden {
        let row = &w1[k * nf..(k + 1) * nf];
        let z = row.iter().zip(x).fold(b1[k], |acc, (&w, &xi)| acc + w * xi);
        h[k] = z.tanh();
        out += w2[k] * h[k];
    }
    (F::of(arch.value_scale) * out, h)
}

fn forward<F: Scalar>(
    e: &[Vec<F>],
    prompt: &Prompt,
    steps: &[usize],
    params: &CriticParams<F>,
) -> Result<Forward<F>> {
    check_steps(steps, e.len())?;
    let arch = params.arch();
    let p = prompt_features(prompt, params)?;
    let count = params.count_scale() * F::of_usize(prompt.event_count());
    let mut cum = vec![F::zero(); arch.width];
    let mut next = 0;
    let mut values = Vec::with_capacity(steps.len());
    let mut caches = Vec::with_capacity(steps.len());
    for &s in steps {
        while next < s {
            for (acc, &x) in cum.iter_mut().zip(&e[next]) {
                *acc += x;
            }
            next += 1;
        }
        let inv = F::one() / F::of_usize(s);
        let mut x = Vec::with_capacity(arch.features());
        x.extend(cum.iter().map(|&c| c * inv));
        x.extend_from_slice(&p);
        x.push(count);
        let (value, h) = head(&x, params);
        values.push(value);
        caches.push(StepCache { x, h });
    }
    Ok(Forward { values, caches })
}

/// Values at `steps` (1-based column counts) from precomputed `e'`.
pub fn encode_and_score<F: Scalar>(
    e: &[Vec<F>],
    prompt: &Prompt,
    steps: &[usize],
    params: &CriticParams<F>,
) -> Result<ValueTrace<F>> {
    let fwd = forward(e, prompt, steps, params)?;
    ValueTrace::new(steps.to_vec(), fwd.values)
}

/// Value at the last column of `prefix`.
pub fn score_prefix<F: Scalar>(
    prefix: &CodeGrid,
    prompt: &Prompt,
    params: &CriticParams<F>,
) -> Result<F> {
    let width = prefix.width();
    if width == 0 {
        return Err(Error::StepOutOfRange { step: 0, max: 0 });
    }
    let e = embed_prefix(prefix, params)?;
    Ok(forward(&e, prompt, &[width], params)?.values[0])
}

/// Accumulates `∂L/∂θ` for one example given `∂L/∂s_j` at each step.
fn backward<F: Scalar>(
    grid: &CodeGrid,
    prompt: &Prompt,
    steps: &[usize],
    fwd: &Forward<F>,
    dvalues: &[F],
    params: &CriticParams<F>,
    grad: &mut CriticParams<F>,
) {
    let arch = *params.arch();
    let d = arch.width;
    let nf = arch.features();
    let scale = F::of(arch.value_scale);
    let one = F::one();
    // ∂L/∂(mean pooled feature at step j), later spread over its columns
    let mut dmean: Vec<Vec<F>> = Vec::with_capacity(steps.len());
    let mut dprompt = vec![F::zero(); d];
    let mut dcount = F::zero();
    let w1 = params.w1().to_vec();
    let w2 = params.w2().to_vec();
    for (j, cache) in fwd.caches.iter().enumerate() {
        let g = dvalues[j] * scale;
        *grad.b2_mut() += g;
        let mut dz = vec![F::zero(); arch.hidden];
        {
            let gw2 = grad.w2_mut();
            for k in 0..arch.hidden {
                gw2[k] += g * cache.h[k];
                dz[k] = g * w2[k] * (one - cache.h[k] * cache.h[k]);
            }
        }
        {
            let gb1 = grad.b1_mut();
            for k in 0..arch.hidden {
                gb1[k] += dz[k];
            }
        }
        let mut dx = vec![F::zero(); nf];
        {
            let gw1 = grad.w1_mut();
            for k in 0..arch.hidden {
                let row = k * nf;
                for i in 0..nf {
                    gw1[row + i] += dz[k] * cache.x[i];
                    dx[i] += dz[k] * w1[row + i];
                }
            }
        }
        dmean.push(dx[..d].to_vec());
        for i in 0..d {
            dprompt[i] += dx[d + i];
        }
        dcount += dx[2 * d];
    }

    // column t (0-based) contributes to every step s > t with weight 1/s
    let last = *steps.last().expect("steps validated non-empty");
    let mut col_grad = vec![F::zero(); d];
    let mut j = steps.len();
    for t in (0..last).rev() {
        while j > 0 && steps[j - 1] > t {
            j -= 1;
            let inv = one / F::of_usize(steps[j]);
            for i in 0..d {
                col_grad[i] += dmean[j][i] * inv;
            }
        }
        for (r, code) in grid.column(t).enumerate() {
            for (acc, &gi) in grad.embedding_mut(r, code as usize).iter_mut().zip(&col_grad) {
                *acc += gi;
            }
        }
    }

    let n = F::of_usize(prompt.event_count());
    for &c in prompt.events() {
        for (acc, &gi) in grad.prompt_embedding_mut(c).iter_mut().zip(&dprompt) {
            *acc += gi / n;
        }
    }
    *grad.count_scale_mut() += dcount * n;
}

/// GAE targets for each example from a detached evaluation under `params`.
pub fn batch_targets<F: Scalar>(
    batch: &[Example<'_>],
    params: &CriticParams<F>,
    steps: &[usize],
    gae: &GaeConfig,
) -> Result<Vec<Vec<F>>> {
    batch
        .iter()
        .map(|ex| {
            let e = embed_prefix(ex.grid, params)?;
            let s_old = encode_and_score(&e, ex.prompt, steps, params)?.detach();
            Ok(gae_targets(&s_old, F::of(ex.label), gae)?.targets)
        })
        .collect()
}

/// Batch-mean critic loss against fixed targets.
pub fn loss_with_targets<F: Scalar>(
    batch: &[Example<'_>],
    params: &CriticParams<F>,
    steps: &[usize],
    targets: &[Vec<F>],
) -> Result<F> {
    let mut total = F::zero();
    for (ex, r) in batch.iter().zip(targets) {
        let e = embed_prefix(ex.grid, params)?;
        let fwd = forward(&e, ex.prompt, steps, params)?;
        total += critic_loss(&fwd.values, r)?;
    }
    Ok(total / F::of_usize(batch.len()))
}

const GRAD_CHUNK: usize = 16;

/// Shared reduction: `targets_for(i, values)` supplies example `i`'s targets
/// given its (detached) forward values. Examples are reduced in fixed chunks,
/// in order, so the result does not depend on thread count.
fn reduce<F, T>(
    batch: &[Example<'_>],
    params: &CriticParams<F>,
    steps: &[usize],
    targets_for: T,
) -> Result<(F, CriticParams<F>)>
where
    F: Scalar,
    T: Fn(usize, &[F]) -> Result<Vec<F>> + Sync,
{
    if batch.is_empty() {
        return Err(Error::Degenerate("empty batch".into()));
    }
    let m = F::of_usize(steps.len());
    let partials: Vec<Result<(F, CriticParams<F>)>> = batch
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(c, exs)| {
            let mut grad = CriticParams::zeros(*params.arch());
            let mut loss = F::zero();
            for (i, ex) in exs.iter().enumerate() {
                let e = embed_prefix(ex.grid, params)?;
                let fwd = forward(&e, ex.prompt, steps, params)?;
                let r = targets_for(c * GRAD_CHUNK + i, &fwd.values)?;
                loss += critic_loss(&fwd.values, &r)?;
                let dvalues: Vec<F> = fwd
                    .values
                    .iter()
                    .zip(&r)
                    .map(|(&s, &t)| (s - t) / m)
                    .collect();
                backward(ex.grid, ex.prompt, steps, &fwd, &dvalues, params, &mut grad);
            }
            Ok((loss, grad))
        })
        .collect();
    let mut grad = CriticParams::zeros(*params.arch());
    let mut loss = F::zero();
    for part in partials {
        let (l, g) = part?;
        loss += l;
        for (acc, &x) in grad.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *acc += x;
        }
    }
    let n = F::of_usize(batch.len());
    grad.as_mut_slice().iter_mut().for_each(|x| *x /= n);
    Ok((loss / n, grad))
}

/// Loss and exact gradient against fixed targets.
pub fn loss_and_grad_with_targets<F: Scalar>(
    batch: &[Example<'_>],
    params: &CriticParams<F>,
    steps: &[usize],
    targets: &[Vec<F>],
) -> Result<(F, CriticParams<F>)> {
    if batch.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: batch.len(),
            right: targets.len(),
        });
    }
    reduce(batch, params, steps, |i, _| Ok(targets[i].clone()))
}

/// Loss and gradient with targets built from a detached copy of the current
/// values (`s_old`); the targets are constants for differentiation.
pub fn loss_and_grad<F: Scalar>(
    batch: &[Example<'_>],
    params: &CriticParams<F>,
    steps: &[usize],
    gae: &GaeConfig,
) -> Result<(F, CriticParams<F>)> {
    reduce(batch, params, steps, |i, values| {
        let s_old = ValueTrace::new(steps.to_vec(), values.to_vec())?.detach();
        Ok(gae_targets(&s_old, F::of(batch[i].label), gae)?.targets)
    })
}
