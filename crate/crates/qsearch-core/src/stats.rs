//! Small statistics helpers used by the Monte Carlo estimators and tests.
//!
//! Summation is compensated (Neumaier) so that batch estimates do not depend
//! on accumulation order beyond rounding at the compensation level.

use serde::{Deserialize, Serialize};

/// Compensated (Neumaier) sum of a slice.
pub fn compensated_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty(), "mean of empty slice");
    compensated_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance (n - 1 denominator); requires n >= 2.
pub fn sample_variance(xs: &[f64]) -> f64 {
    assert!(xs.len() >= 2, "variance needs at least two samples");
    let m = mean(xs);
    let devs: Vec<f64> = xs.iter().map(|&x| (x - m) * (x - m)).collect();
    compensated_sum(&devs) / (xs.len() - 1) as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Standard error of the sample mean: s / sqrt(n).
pub fn standard_error(xs: &[f64]) -> f64 {
    sample_std(xs) / (xs.len() as f64).sqrt()
}

/// Monte Carlo estimate of an expectation with its uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    /// Sample mean of the per-path cost.
    pub mean: f64,
    /// Standard error of the mean: sample std / sqrt(n).
    pub std_err: f64,
    /// Number of independent samples.
    pub n: usize,
    /// Time step used by the underlying simulation.
    pub dt: f64,
}

impl RiskEstimate {
    pub fn from_samples(samples: &[f64], dt: f64) -> Self {
        assert!(samples.len() >= 2);
        RiskEstimate {
            mean: mean(samples),
            std_err: standard_error(samples),
            n: samples.len(),
            dt,
        }
    }
}

/// Two-sample Kolmogorov-Smirnov distance: sup |F_a - F_b| over the pooled
/// sample points.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).expect("NaN in KS sample"));
    sb.sort_by(|x, y| x.partial_cmp(y).expect("NaN in KS sample"));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        // Advance both CDFs past the next pooled value so ties move together.
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Lag-1 sample autocorrelation.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    assert!(xs.len() >= 3);
    let m = mean(xs);
    let num: Vec<f64> = xs.windows(2).map(|w| (w[0] - m) * (w[1] - m)).collect();
    let den: Vec<f64> = xs.iter().map(|&x| (x - m) * (x - m)).collect();
    compensated_sum(&num) / compensated_sum(&den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancellation() {
        // Naive left-to-right summation loses the 1.0 here.
        let xs = [1e16, 1.0, -1e16];
        assert_eq!(compensated_sum(&xs), 1.0);
    }

    #[test]
    fn mean_and_se_basic() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        let expected_var = (2.25 + 0.25 + 0.25 + 2.25) / 3.0;
        assert!((sample_variance(&xs) - expected_var).abs() < 1e-15);
        assert!((standard_error(&xs) - expected_var.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn ks_identical_samples_is_zero() {
        let a = [0.1, 0.5, 0.9, 0.3];
        assert_eq!(ks_distance(&a, &a), 0.0);
    }

    #[test]
    fn ks_disjoint_samples_is_one() {
        let a = [0.0, 0.1, 0.2];
        let b = [1.0, 1.1, 1.2];
        assert_eq!(ks_distance(&a, &b), 1.0);
    }

    #[test]
    fn ks_half_shifted() {
        // F_a puts mass {0,1} at 0 and 2; F_b at 1 and 3; sup gap = 1/2.
        let a = [0.0, 2.0];
        let b = [1.0, 3.0];
        assert_eq!(ks_distance(&a, &b), 0.5);
    }

    #[test]
    fn lag1_of_alternating_sequence_is_negative() {
        let xs: Vec<f64> = (0..100)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        assert!(lag1_autocorrelation(&xs) < -0.9);
    }
}
