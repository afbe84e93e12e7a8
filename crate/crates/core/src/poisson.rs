//! Poisson tail probabilities, summed away from the mode so that neither tail
//! is computed as `1 - (something close to 1)` when it is small.

pub(crate) fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|j| (j as f64).ln()).sum()
}

fn ln_pmf(mean: f64, k: u64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mean.ln() - mean - ln_factorial(k)
}

/// `P(X <= m)` for `X ~ Poisson(mean)`.
pub(crate) fn lower_cdf(mean: f64, m: u64) -> f64 {
    if mean == 0.0 {
        return 1.0;
    }
    if (m as f64) >= mean {
        return (1.0 - upper_tail(mean, m)).max(0.0);
    }
    // terms decrease going down from m
    let mut term = ln_pmf(mean, m).exp();
    let mut sum = term;
    let mut k = m;
    while k > 0 {
        term *= k as f64 / mean;
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
        k -= 1;
    }
    sum.min(1.0)
}

/// `P(X > m)` for `X ~ Poisson(mean)`.
pub(crate) fn upper_tail(mean: f64, m: u64) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    if ((m + 1) as f64) < mean {
        return (1.0 - lower_cdf(mean, m)).max(0.0);
    }
    // terms decrease going up from m + 1
    let mut k = m + 1;
    let mut term = ln_pmf(mean, k).exp();
    let mut sum = term;
    loop {
        k += 1;
        term *= mean / k as f64;
        sum += term;
        if term <= sum * 1e-18 || term == 0.0 {
            break;
        }
    }
    sum.min(1.0)
}

/// `E[X · 1{X > m}] = mean · P(X > m - 1)`.
pub(crate) fn upper_partial_mean(mean: f64, m: u64) -> f64 {
    if m == 0 {
        mean
    } else {
        mean * upper_tail(mean, m - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_cdf(mean: f64, m: u64) -> f64 {
        let mut term = (-mean).exp();
        let mut sum = term;
        for k in 1..=m {
            term *= mean / k as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn matches_direct_summation() {
        for &mean in &[0.3, 1.0, 4.5, 20.0, 60.0] {
            for m in 0..120 {
                let lo = lower_cdf(mean, m);
                let hi = upper_tail(mean, m);
                assert!((lo - brute_cdf(mean, m)).abs() < 1e-12, "{mean} {m}");
                assert!((lo + hi - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn small_tails_keep_relative_accuracy() {
        // P(X > 30) for mean 2: leading term dominates
        let tail = upper_tail(2.0, 30);
        let lead = ln_pmf(2.0, 31).exp();
        assert!(tail > lead && tail < lead * 1.1);
        assert!(tail > 0.0 && tail < 1e-20);
    }

    #[test]
    fn partial_mean() {
        let mean: f64 = 3.0;
        let direct: f64 = (6..200u64).map(|k| k as f64 * ln_pmf(mean, k).exp()).sum();
        assert!((upper_partial_mean(mean, 5) - direct).abs() < 1e-13);
        assert_eq!(upper_partial_mean(mean, 0), mean);
    }
}
