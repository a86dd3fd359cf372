//! Small descriptive-statistics and distribution helpers.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with divisor `n - 1` (two-pass). `NaN` for `n < 2`.
pub fn sample_var(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_var(xs).sqrt()
}

/// Sample correlation; `NaN` when either side has zero variance.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// How a sample quantile is read off the order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuantileMethod {
    /// Linear interpolation between order statistics (Hyndman-Fan type 7).
    #[default]
    Linear,
    /// Inverse of the empirical CDF (type 1): the `ceil(n p)`-th order statistic.
    InverseCdf,
}

/// Quantile of already-sorted data, `p` in `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], p: f64, method: QuantileMethod) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty sample");
    match method {
        QuantileMethod::Linear => {
            let h = (n - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = h - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        }
        QuantileMethod::InverseCdf => {
            let k = ((n as f64) * p).ceil() as usize;
            sorted[k.clamp(1, n) - 1]
        }
    }
}

pub fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Type-7 quantile of unsorted data.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    quantile_sorted(&sorted_copy(xs), p, QuantileMethod::Linear)
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Two-sided p-value of a standard-normal statistic.
pub fn normal_two_sided_p(z: f64) -> f64 {
    if !z.is_finite() {
        return if z.is_nan() { f64::NAN } else { 0.0 };
    }
    (2.0 * std_normal().cdf(-z.abs())).min(1.0)
}

/// Upper-tail probability of a chi-squared variate.
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    ChiSquared::new(df as f64).expect("df > 0").sf(x).clamp(0.0, 1.0)
}

/// Significance stars at the conventional 1% / 5% / 10% levels.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn type7_matches_hand_values() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_abs_diff_eq!(quantile_sorted(&v, 0.10, QuantileMethod::Linear), 10.9, epsilon = 1e-12);
        assert_abs_diff_eq!(quantile_sorted(&v, 0.90, QuantileMethod::Linear), 90.1, epsilon = 1e-12);
        assert_eq!(quantile_sorted(&v, 0.10, QuantileMethod::InverseCdf), 10.0);
        assert_abs_diff_eq!(quantile(&[3.0, 1.0, 2.0], 0.25), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn sample_sd_uses_n_minus_one() {
        assert_abs_diff_eq!(sample_sd(&[0.0, 0.0, 0.0, 2.0]), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn star_levels() {
        assert_eq!(stars(0.004), "***");
        assert_eq!(stars(0.03), "**");
        assert_eq!(stars(0.08), "*");
        assert_eq!(stars(0.2), "");
    }

    #[test]
    fn chi2_tail() {
        assert_abs_diff_eq!(chi2_sf(3.841458820694124, 1), 0.05, epsilon = 1e-9);
        assert_eq!(chi2_sf(0.0, 2), 1.0);
    }
}
