//! Statistics used by the verification experiments: Wilson intervals,
//! one-sample Kolmogorov-Smirnov distance, chi-square goodness of fit and a
//! batch-based zero-slope test.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

/// Wilson score interval for a binomial proportion.
///
/// Exceedance probabilities near 1e-4 with 1e5 replicates sit deep in the
/// regime where Wald intervals undercover, so every interval in this crate
/// is a Wilson interval.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    assert!(trials > 0, "wilson interval needs at least one trial");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Half-width proxy used when reporting "within k standard errors".
pub fn wilson_half_width(successes: u64, trials: u64, z: f64) -> f64 {
    let (lo, hi) = wilson_interval(successes, trials, z);
    (hi - lo) / 2.0
}

/// One-sample Kolmogorov-Smirnov distance of a sample against a CDF.
///
/// `sample` does not need to be sorted. The supremum is attained at sample
/// points, where both one-sided gaps are checked.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    assert!(!sample.is_empty());
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample value"));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x).clamp(0.0, 1.0);
        let upper = (i as f64 + 1.0) / n - f;
        let lower = f - i as f64 / n;
        d = d.max(upper).max(lower);
    }
    d
}

/// Empirical CDF of a sample evaluated at `x` (proportion `<= x`).
pub fn empirical_cdf(sample: &[f64], x: f64) -> f64 {
    let count = sample.iter().filter(|&&s| s <= x).count();
    count as f64 / sample.len() as f64
}

/// Result of a chi-square goodness-of-fit test.
#[derive(Debug, Clone, Serialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub significance: f64,
    pub pass: bool,
}

/// Chi-square goodness of fit of observed non-negative integer counts
/// against a Poisson law with the given mean.
///
/// Cells are merged from both tails until every expected count is at least
/// five, the usual validity rule for the chi-square approximation.
pub fn chi_square_poisson(observed: &[u64], mean: f64, significance: f64) -> ChiSquareReport {
    let n = observed.len() as f64;
    let max_obs = *observed.iter().max().expect("empty sample") as usize;

    // Poisson pmf by forward recurrence; cell k = max_obs+1 holds the upper tail.
    let mut pmf = vec![0.0f64; max_obs + 2];
    let mut logp = -mean; // log pmf(0)
    let mut total = 0.0;
    for (k, slot) in pmf.iter_mut().take(max_obs + 1).enumerate() {
        if k > 0 {
            logp += (mean / k as f64).ln();
        }
        *slot = logp.exp();
        total += *slot;
    }
    pmf[max_obs + 1] = (1.0 - total).max(0.0);

    let mut counts = vec![0u64; max_obs + 2];
    for &o in observed {
        counts[(o as usize).min(max_obs + 1)] += 1;
    }

    // Merge cells until expected >= 5 everywhere.
    let mut cells: Vec<(u64, f64)> = counts
        .iter()
        .zip(pmf.iter())
        .map(|(&c, &p)| (c, p * n))
        .collect();
    let mut merged: Vec<(u64, f64)> = Vec::new();
    let mut acc = (0u64, 0.0f64);
    for (c, e) in cells.drain(..) {
        acc.0 += c;
        acc.1 += e;
        if acc.1 >= 5.0 {
            merged.push(acc);
            acc = (0, 0.0);
        }
    }
    if acc.1 > 0.0 {
        if let Some(last) = merged.last_mut() {
            last.0 += acc.0;
            last.1 += acc.1;
        } else {
            merged.push(acc);
        }
    }

    let statistic: f64 = merged
        .iter()
        .map(|&(c, e)| {
            let diff = c as f64 - e;
            diff * diff / e
        })
        .sum();
    let dof = merged.len().saturating_sub(1).max(1);
    let chi = ChiSquared::new(dof as f64).expect("valid dof");
    let p_value = 1.0 - chi.cdf(statistic);
    ChiSquareReport {
        statistic,
        dof,
        p_value,
        significance,
        pass: p_value > significance,
    }
}

/// Result of the batch-slope test for trend flatness.
#[derive(Debug, Clone, Serialize)]
pub struct SlopeReport {
    pub slope: f64,
    pub standard_error: f64,
    pub t_statistic: f64,
    pub critical: f64,
    pub batches: usize,
    pub pass: bool,
}

/// Tests whether the slope of `y` against `x` is statistically zero.
///
/// Replicate-level data are split into independent batches; an OLS slope is
/// fitted per batch and a t-test is run on the batch slopes. This sidesteps
/// the cross-level correlation of nested exceedance indicators.
pub fn batch_slope_test(batch_points: &[Vec<(f64, f64)>], significance: f64) -> SlopeReport {
    let slopes: Vec<f64> = batch_points.iter().map(|pts| ols_slope(pts)).collect();
    let b = slopes.len();
    assert!(b >= 3, "need at least 3 batches");
    let mean = slopes.iter().sum::<f64>() / b as f64;
    let var = slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (b as f64 - 1.0);
    let se = (var / b as f64).sqrt();
    let t_stat = if se > 0.0 {
        mean / se
    } else if mean == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let dist = StudentsT::new(0.0, 1.0, (b - 1) as f64).expect("valid dof");
    let critical = dist.inverse_cdf(1.0 - significance / 2.0);
    SlopeReport {
        slope: mean,
        standard_error: se,
        t_statistic: t_stat,
        critical,
        batches: b,
        pass: t_stat.abs() <= critical,
    }
}

fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wilson_contains_true_p_for_fair_counts() {
        // 50 successes out of 100 at z=1.96: textbook interval ~ (0.404, 0.596).
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert!(lo < 0.5 && 0.5 < hi);
        assert_relative_eq!(lo, 0.4038, epsilon = 1e-3);
        assert_relative_eq!(hi, 0.5962, epsilon = 1e-3);
    }

    #[test]
    fn wilson_interval_shrinks_like_inverse_sqrt_m() {
        let w1 = wilson_half_width(100, 1000, 1.96);
        let w4 = wilson_half_width(400, 4000, 1.96);
        // quadrupling the sample should halve the width (within 5%)
        assert_relative_eq!(w1 / w4, 2.0, epsilon = 0.1);
    }

    #[test]
    fn ks_distance_of_exact_uniform_grid_is_small() {
        // sample = i/(n+1) quantiles of U(0,1): D = 1/(n+1)
        let n = 999;
        let sample: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
        let d = ks_distance(&sample, |x| x.clamp(0.0, 1.0));
        assert!(d < 2.0 / n as f64, "d = {d}");
    }

    #[test]
    fn ks_distance_detects_wrong_law() {
        let sample: Vec<f64> = (1..=100).map(|i| i as f64 / 101.0).collect();
        let d = ks_distance(&sample, |x| x * x); // claims U^2 law
        assert!(d > 0.2);
    }

    #[test]
    fn chi_square_accepts_exact_poisson_quantile_sample() {
        // Deterministic sample whose histogram matches Poisson(4) closely.
        let mean = 4.0;
        let n = 10_000usize;
        let mut pmf = vec![0.0f64; 20];
        let mut logp = -mean;
        for k in 0..20 {
            if k > 0 {
                logp += (mean / k as f64).ln();
            }
            pmf[k] = logp.exp();
        }
        let mut observed = Vec::with_capacity(n);
        for (k, &p) in pmf.iter().enumerate() {
            let c = (p * n as f64).round() as usize;
            observed.extend(std::iter::repeat(k as u64).take(c));
        }
        let report = chi_square_poisson(&observed, mean, 0.01);
        assert!(report.pass, "stat = {}", report.statistic);
    }

    #[test]
    fn slope_test_flags_a_real_trend_and_accepts_noise() {
        let flat: Vec<Vec<(f64, f64)>> = (0..10)
            .map(|b| {
                (0..5)
                    .map(|i| (i as f64, ((b * 5 + i) % 7) as f64 * 1e-3))
                    .collect()
            })
            .collect();
        assert!(batch_slope_test(&flat, 0.05).pass);

        let trended: Vec<Vec<(f64, f64)>> = (0..10)
            .map(|b| {
                (0..5)
                    .map(|i| (i as f64, 2.0 * i as f64 + (b % 3) as f64 * 1e-3))
                    .collect()
            })
            .collect();
        assert!(!batch_slope_test(&trended, 0.05).pass);
    }
}
