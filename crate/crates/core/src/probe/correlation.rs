use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Kendall τ-b, Spearman ρ and Pearson r over `n` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub kendall: f64,
    pub spearman: f64,
    pub pearson: f64,
    pub n: usize,
}

impl CorrelationReport {
    pub fn compute<F: Scalar>(a: &[F], b: &[F]) -> Result<Self> {
        Ok(Self {
            kendall: kendall(a, b)?.to_f64_lossy(),
            spearman: spearman(a, b)?.to_f64_lossy(),
            pearson: pearson(a, b)?.to_f64_lossy(),
            n: a.len(),
        })
    }
}

fn check<F: Scalar>(a: &[F], b: &[F]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::Degenerate("correlation needs at least 2 pairs".into()));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::Degenerate("non-finite value".into()));
    }
    Ok(())
}

fn cmp<F: Scalar>(x: F, y: F) -> Ordering {
    x.partial_cmp(&y).expect("finite values")
}

fn clamp<F: Scalar>(x: F) -> F {
    x.max(-F::one()).min(F::one())
}

pub fn pearson<F: Scalar>(a: &[F], b: &[F]) -> Result<F> {
    check(a, b)?;
    let n = F::of_usize(a.len());
    let ma = a.iter().copied().sum::<F>() / n;
    let mb = b.iter().copied().sum::<F>() / n;
    let (mut sab, mut saa, mut sbb) = (F::zero(), F::zero(), F::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == F::zero() || sbb == F::zero() {
        return Err(Error::Degenerate("constant input".into()));
    }
    Ok(clamp(sab / (saa.sqrt() * sbb.sqrt())))
}

/// 1-based ranks, ties get the average of the ranks they span.
pub fn average_ranks<F: Scalar>(x: &[F]) -> Vec<F> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| cmp(x[i], x[j]));
    let mut ranks = vec![F::zero(); x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && x[idx[j]] == x[idx[i]] {
            j += 1;
        }
        let r = F::of((i + j + 1) as f64 / 2.0);
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

pub fn spearman<F: Scalar>(a: &[F], b: &[F]) -> Result<F> {
    check(a, b)?;
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Sum of t(t−1)/2 over runs of equal adjacent elements.
fn tied_pairs<T, E: Fn(&T, &T) -> bool>(xs: &[T], eq: E) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in xs.windows(2) {
        if eq(&w[0], &w[1]) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort on `ys`, returning the number of inversions.
fn sort_count<F: Scalar>(ys: &mut [F], buf: &mut [F]) -> u64 {
    let n = ys.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_count(&mut ys[..mid], &mut buf[..mid]) + sort_count(&mut ys[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if cmp(ys[j], ys[i]) == Ordering::Less {
            buf[k] = ys[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = ys[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&ys[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&ys[j..n]);
    ys.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall τ-b in O(n log n) (Knight's algorithm).
pub fn kendall<F: Scalar>(a: &[F], b: &[F]) -> Result<F> {
    check(a, b)?;
    let n = a.len() as u64;
    let mut pairs: Vec<(F, F)> = a.iter().copied().zip(b.iter().copied()).collect();
    pairs.sort_by(|p, q| cmp(p.0, q.0).then(cmp(p.1, q.1)));
    let n0 = n * (n - 1) / 2;
    let n1 = tied_pairs(&pairs, |p, q| p.0 == q.0);
    let n3 = tied_pairs(&pairs, |p, q| p.0 == q.0 && p.1 == q.1);
    let mut ys: Vec<F> = pairs.iter().map(|p| p.1).collect();
    let mut buf = ys.clone();
    let swaps = sort_count(&mut ys, &mut buf);
    let n2 = tied_pairs(&ys, |x, y| x == y);
    if n1 == n0 || n2 == n0 {
        return Err(Error::Degenerate("constant input".into()));
    }
    // concordant − discordant = n0 − n1 − n2 + n3 − 2·swaps
    let num = n0 as f64 - n1 as f64 - n2 as f64 + n3 as f64 - 2.0 * swaps as f64;
    let den = ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt();
    Ok(clamp(F::of(num / den)))
}
