//! Small shared numeric helpers: moments, quantiles, normal quantile.

use statrs::distribution::ContinuousCDF;
use statrs::distribution::Normal;

/// Arithmetic mean. Returns 0.0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Biased (divide-by-N) sample variance.
pub fn variance_pop(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Unbiased (divide-by-(N-1)) sample variance. Returns 0.0 for N < 2.
pub fn variance_sample(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Population standard deviation (divide-by-N convention).
pub fn sd_pop(xs: &[f64]) -> f64 {
    variance_pop(xs).sqrt()
}

/// Sample standard deviation (divide-by-(N-1) convention).
pub fn sd_sample(xs: &[f64]) -> f64 {
    variance_sample(xs).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics
/// (the `h = (n-1)p + 1` rule). `level` must lie in [0, 1] and `xs` must be
/// non-empty; `xs` need not be sorted.
pub fn quantile(xs: &[f64], level: f64) -> f64 {
    debug_assert!(!xs.is_empty());
    debug_assert!((0.0..=1.0).contains(&level));
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    quantile_sorted(&v, level)
}

/// Same as [`quantile`] but assumes `xs` is already sorted ascending.
pub fn quantile_sorted(xs: &[f64], level: f64) -> f64 {
    let n = xs.len();
    if n == 1 {
        return xs[0];
    }
    let h = (n - 1) as f64 * level;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        xs[n - 1]
    } else {
        xs[lo] + frac * (xs[lo + 1] - xs[lo])
    }
}

/// Standard normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// Standard normal cdf.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Fraction of values less than or equal to `x` (empirical cdf).
pub fn ecdf(xs: &[f64], x: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().filter(|&&v| v <= x).count() as f64 / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quantile_interpolates_between_order_statistics() {
        let xs: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_relative_eq!(quantile(&xs, 0.95), 95.05, epsilon = 1e-12);
        assert_relative_eq!(quantile(&xs, 0.0), 1.0);
        assert_relative_eq!(quantile(&xs, 1.0), 100.0);
    }

    #[test]
    fn normal_quantile_matches_reference() {
        assert_relative_eq!(normal_quantile(0.975), 1.959964, epsilon = 1e-6);
    }

    #[test]
    fn population_and_sample_variance_conventions() {
        let xs = [-1.0, 1.0];
        assert_relative_eq!(variance_pop(&xs), 1.0);
        assert_relative_eq!(variance_sample(&xs), 2.0);
    }
}
