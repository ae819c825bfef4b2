//! Small descriptive statistics and the paired sign test.

use serde::Serialize;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than 2 values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `P(X ≥ k)` for `X ~ Binomial(n, 1/2)`.
pub fn binomial_upper_tail(k: u64, n: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let ln_n = ln_factorial(n);
    let ln_half = n as f64 * 0.5f64.ln();
    let mut ln_kf = ln_factorial(k);
    let mut ln_nk = ln_factorial(n - k);
    let mut total = 0.0;
    for j in k..=n {
        total += (ln_n - ln_kf - ln_nk + ln_half).exp();
        if j < n {
            ln_kf += ((j + 1) as f64).ln();
            ln_nk -= ((n - j) as f64).ln();
        }
    }
    total.min(1.0)
}

/// One-sided exact sign test of "a tends to exceed b". Ties are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignTest {
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
    pub p_value: f64,
}

pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    assert_eq!(a.len(), b.len(), "sign test needs paired samples");
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (x, y) in a.iter().zip(b) {
        if x > y {
            wins += 1;
        } else if x < y {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    SignTest {
        wins,
        losses,
        ties,
        p_value: binomial_upper_tail(wins, wins + losses),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn choose(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn tail_matches_direct_sum() {
        for n in 0..40u64 {
            for k in 0..=n + 1 {
                let direct: f64 = (k..=n).map(|j| choose(n, j)).sum::<f64>() / 2f64.powi(n as i32);
                assert!((binomial_upper_tail(k, n) - direct).abs() < 1e-12, "{k}/{n}");
            }
        }
    }

    #[test]
    fn sign_test_counts() {
        let t = sign_test(&[3.0, 2.0, 5.0, 1.0, 4.0], &[1.0, 2.0, 4.0, 0.0, 3.0]);
        assert_eq!((t.wins, t.losses, t.ties), (4, 0, 1));
        assert_eq!(t.p_value, 1.0 / 16.0);
        assert_eq!(sign_test(&[], &[]).p_value, 1.0);
    }

    #[test]
    fn descriptive() {
        assert_eq!(mean(&[1.0, 2.0, 6.0]), 3.0);
        assert_eq!(median(&[5.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(std_dev(&[2.0, 4.0]), 2f64.sqrt());
        assert_eq!(std_dev(&[7.0]), 0.0);
    }
}
