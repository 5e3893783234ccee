//! Multiple testing: the bootstrap reality check and its exhaustive
//! (path-based) replacement.
//!
//! Both procedures standardize per-test statistics, take the maximum across
//! tests within each replicate (bootstrap draw or path), and read the
//! significance hurdle off a high quantile of those maxima:
//!
//! ```text
//! bootstrap:  t_n^(b) = sqrt(T)   (mean_n^(b) - mean_n) / sd_n^(b)
//! paths:      t_n^(p) = sqrt(T_p) (mean_n^(p) - mean_n) / sd_n^(p)
//! ```
//!
//! Sample statistics use the divide-by-(T-1) standard deviation. Replicates
//! are drawn with the moving-block bootstrap: whole rows (all tests jointly)
//! in blocks of consecutive dates, so cross-test and serial dependence
//! survive resampling. Per-replicate RNG streams derive from
//! `(seed, replicate index)`, making parallel generation order-independent.

use crate::stats;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MtestError {
    #[error("block length {block} exceeds the sample size {t}")]
    BlockTooLong { block: usize, t: usize },
    #[error("block length must be at least 1")]
    ZeroBlock,
    #[error("empty input")]
    Empty,
    #[error("confidence level {0} outside (0, 1)")]
    BadLevel(f64),
    #[error("point-wise benchmark requested but no default path supplied")]
    NoDefaultPath,
    #[error("quantile argument {x} outside the domain (2^-{n}, 1)")]
    QuantileDomain { x: f64, n: usize },
    #[error("non-positive dispersion")]
    BadSigma,
}

/// Which benchmark mean the path statistics subtract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkMode {
    /// Per-test mean of the designated default path.
    #[default]
    PointWise,
    /// Per-test mean over all paths.
    Average,
}

/// Sorted per-replicate statistics plus the resulting threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaxStatDistribution {
    /// Largest statistic of each replicate, one entry per replicate.
    pub maxima: Vec<f64>,
    /// "bootstrap" or "path".
    pub kind: String,
    pub level: f64,
    pub threshold: f64,
}

/// One replicate's data: `T x N` values in row-major order.
#[derive(Debug, Clone)]
pub struct SeriesMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl SeriesMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        SeriesMatrix { rows, cols, values }
    }

    #[inline]
    pub fn at(&self, t: usize, n: usize) -> f64 {
        self.values[t * self.cols + n]
    }

    pub fn column(&self, n: usize) -> Vec<f64> {
        (0..self.rows).map(|t| self.at(t, n)).collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        (0..self.cols).map(|n| stats::mean(&self.column(n))).collect()
    }
}

/// Moving-block bootstrap: each replicate concatenates blocks of `block_len`
/// consecutive rows (start uniform over the `T - L + 1` positions, drawn with
/// replacement) and truncates to `T` rows. Rows are resampled jointly across
/// all columns. Deterministic given the seed.
pub fn block_bootstrap(
    series: &SeriesMatrix,
    block_len: usize,
    replicates: usize,
    seed: u64,
) -> Result<Vec<SeriesMatrix>, MtestError> {
    let t = series.rows;
    if block_len == 0 {
        return Err(MtestError::ZeroBlock);
    }
    if block_len > t {
        return Err(MtestError::BlockTooLong { block: block_len, t });
    }
    let starts = t - block_len + 1;
    let mut out = Vec::with_capacity(replicates);
    for b in 0..replicates {
        let mut rng = replicate_rng(seed, b as u64);
        let mut values = Vec::with_capacity(t * series.cols);
        let mut filled = 0usize;
        while filled < t {
            let start = rng.random_range(0..starts);
            let take = block_len.min(t - filled);
            let from = start * series.cols;
            values.extend_from_slice(&series.values[from..from + take * series.cols]);
            filled += take;
        }
        out.push(SeriesMatrix::new(t, series.cols, values));
    }
    Ok(out)
}

/// Independent RNG stream for one replicate.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate.wrapping_add(1));
    rng
}

/// Per-replicate standardized statistics, sorted descending within each
/// replicate: `t_n^(b) = sqrt(T) (mean_n^(b) - mean_n) / sd_n^(b)`.
/// A replicate column with zero dispersion is flagged by a NaN entry and
/// excluded from the maxima downstream.
pub fn brc_statistics(replicates: &[SeriesMatrix], original: &SeriesMatrix) -> Vec<Vec<f64>> {
    let base_means = original.column_means();
    replicates
        .iter()
        .map(|rep| {
            let t = rep.rows as f64;
            let mut stats_vec: Vec<f64> = (0..rep.cols)
                .map(|n| {
                    let col = rep.column(n);
                    let sd = stats::sd_sample(&col);
                    if sd > 0.0 {
                        t.sqrt() * (stats::mean(&col) - base_means[n]) / sd
                    } else {
                        f64::NAN
                    }
                })
                .collect();
            stats_vec.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
            stats_vec
        })
        .collect()
}

/// Per-test summary a path carries into the exhaustive procedure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathTestStats {
    pub path_index: u64,
    /// Sample size behind this path's series.
    pub t_len: usize,
    /// Per-test means, one entry per anomaly.
    pub means: Vec<f64>,
    /// Per-test standard deviations (divide-by-(T-1)).
    pub sds: Vec<f64>,
}

/// Exhaustive statistics: bootstrap replicates replaced by paths,
/// `t_n^(p) = sqrt(T_p) (mean_n^(p) - mean_n) / sd_n^(p)`, sorted descending
/// within each path. The benchmark `mean_n` is the default path's mean
/// (point-wise) or the across-path mean.
pub fn emt_statistics(
    paths: &[PathTestStats],
    benchmark: BenchmarkMode,
    default_path: Option<u64>,
) -> Result<Vec<Vec<f64>>, MtestError> {
    if paths.is_empty() {
        return Err(MtestError::Empty);
    }
    let n_tests = paths[0].means.len();
    let base_means: Vec<f64> = match benchmark {
        BenchmarkMode::PointWise => {
            let idx = default_path.ok_or(MtestError::NoDefaultPath)?;
            let base = paths
                .iter()
                .find(|p| p.path_index == idx)
                .ok_or(MtestError::NoDefaultPath)?;
            base.means.clone()
        }
        BenchmarkMode::Average => (0..n_tests)
            .map(|n| stats::mean(&paths.iter().map(|p| p.means[n]).collect::<Vec<_>>()))
            .collect(),
    };
    Ok(paths
        .iter()
        .map(|p| {
            let t = p.t_len as f64;
            let mut stats_vec: Vec<f64> = (0..n_tests)
                .map(|n| {
                    if p.sds[n] > 0.0 {
                        t.sqrt() * (p.means[n] - base_means[n]) / p.sds[n]
                    } else {
                        f64::NAN
                    }
                })
                .collect();
            stats_vec.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
            stats_vec
        })
        .collect())
}

/// Largest finite statistic of each replicate.
pub fn replicate_maxima(sorted_stats: &[Vec<f64>]) -> Vec<f64> {
    sorted_stats
        .iter()
        .filter_map(|row| row.iter().copied().find(|v| v.is_finite()))
        .collect()
}

/// The `level` quantile of the replicate maxima (linear interpolation
/// between order statistics).
pub fn threshold(maxima: &[f64], level: f64) -> Result<f64, MtestError> {
    if maxima.is_empty() {
        return Err(MtestError::Empty);
    }
    if !(0.0..1.0).contains(&level) || level == 0.0 {
        return Err(MtestError::BadLevel(level));
    }
    Ok(stats::quantile(maxima, level))
}

/// Build the full distribution report for one method.
pub fn max_stat_distribution(
    sorted_stats: &[Vec<f64>],
    kind: &str,
    level: f64,
) -> Result<MaxStatDistribution, MtestError> {
    let maxima = replicate_maxima(sorted_stats);
    let thr = threshold(&maxima, level)?;
    Ok(MaxStatDistribution {
        maxima,
        kind: kind.to_string(),
        level,
        threshold: thr,
    })
}

/// Quantile of the maximum of `N` independent centered Gaussians with
/// common dispersion `sigma`:
///
/// ```text
/// F_sigma^{-1}(x) = sigma sqrt(2) erfinv(2 x^{1/N} - 1) = sigma PhiInv(x^{1/N})
/// ```
///
/// defined (and positive-derivative in `sigma`) for `x > 2^{-N}`; smaller `x`
/// is a domain error. Exactly linear in `sigma`.
pub fn gaussian_max_quantile(n_tests: usize, sigma: f64, x: f64) -> Result<f64, MtestError> {
    if sigma <= 0.0 {
        return Err(MtestError::BadSigma);
    }
    if x >= 1.0 || x <= 0.5f64.powi(n_tests as i32) {
        return Err(MtestError::QuantileDomain { x, n: n_tests });
    }
    let p = x.powf(1.0 / n_tests as f64);
    Ok(sigma * Normal::new(0.0, 1.0).unwrap().inverse_cdf(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_distr::Distribution;

    fn gaussian_matrix(rows: usize, cols: usize, sd: f64, seed: u64) -> SeriesMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gauss = rand_distr::Normal::new(0.0, sd).unwrap();
        SeriesMatrix::new(
            rows,
            cols,
            (0..rows * cols).map(|_| gauss.sample(&mut rng)).collect(),
        )
    }

    #[test]
    fn full_block_reproduces_original() {
        let m = gaussian_matrix(40, 3, 1.0, 1);
        let reps = block_bootstrap(&m, 40, 5, 9).unwrap();
        for rep in &reps {
            assert_eq!(rep.values, m.values);
        }
    }

    /// Exact expectation of the replicate mean under moving-block draws:
    /// block starts are uniform over `T - L + 1` positions, a replicate uses
    /// `ceil(T/L)` blocks with the last one truncated.
    fn expected_replicate_mean(col: &[f64], block_len: usize) -> f64 {
        let t = col.len();
        let starts = t - block_len + 1;
        let n_blocks = t.div_ceil(block_len);
        let tail = t - block_len * (n_blocks - 1);
        let expected_offset_value = |offset: usize| -> f64 {
            (0..starts).map(|s| col[s + offset]).sum::<f64>() / starts as f64
        };
        let full: f64 = (0..block_len).map(expected_offset_value).sum();
        let trunc: f64 = (0..tail).map(expected_offset_value).sum();
        ((n_blocks - 1) as f64 * full + trunc) / t as f64
    }

    #[test]
    fn bootstrap_mean_tracks_original() {
        let m = gaussian_matrix(200, 2, 1.0, 2);
        let block_len = 12;
        let reps = block_bootstrap(&m, block_len, 400, 3).unwrap();
        let base = m.column_means();
        for n in 0..2 {
            let col = m.column(n);
            let means: Vec<f64> = reps
                .iter()
                .map(|r| stats::mean(&r.column(n)))
                .collect();
            let mc_se = stats::sd_sample(&means) / (means.len() as f64).sqrt();
            let expected = expected_replicate_mean(&col, block_len);
            assert!(
                (stats::mean(&means) - expected).abs() < 3.0 * mc_se,
                "bootstrap mean {} vs exact expectation {expected} (se {mc_se})",
                stats::mean(&means)
            );
            // the edge-effect gap to the plain sample mean stays small
            assert!(
                (expected - base[n]).abs() < 4.0 * block_len as f64 / m.rows as f64,
                "edge effect unexpectedly large"
            );
        }
    }

    #[test]
    fn bootstrap_is_seed_deterministic() {
        let m = gaussian_matrix(60, 4, 1.0, 5);
        let a = block_bootstrap(&m, 12, 20, 42).unwrap();
        let b = block_bootstrap(&m, 12, 20, 42).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.values, y.values);
        }
        assert!(block_bootstrap(&m, 61, 5, 0).is_err());
        assert!(block_bootstrap(&m, 0, 5, 0).is_err());
    }

    #[test]
    fn brc_zero_for_identity_replicate() {
        let m = gaussian_matrix(50, 3, 1.0, 7);
        let stats_rows = brc_statistics(std::slice::from_ref(&m), &m);
        for row in &stats_rows {
            for v in row {
                assert_relative_eq!(*v, 0.0, epsilon = 1e-12);
            }
            // sorted descending
            for w in row.windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn brc_single_column_matches_gaussian_quantile() {
        // iid N(0, s): bootstrap means have sd s/sqrt(T), so sqrt(T)
        // (mean^(b) - mean)/sd^(b) is close to N(0,1); the 95% quantile of
        // the per-replicate "max" (N = 1) should sit near PhiInv(0.95).
        let s = 2.5;
        let m = gaussian_matrix(400, 1, s, 11);
        let reps = block_bootstrap(&m, 1, 576, 13).unwrap();
        let rows = brc_statistics(&reps, &m);
        let maxima = replicate_maxima(&rows);
        let thr = threshold(&maxima, 0.95).unwrap();
        let want = stats::normal_quantile(0.95);
        assert!(
            (thr - want).abs() < 0.25,
            "threshold {thr} vs analytic {want}"
        );
    }

    #[test]
    fn emt_zero_cases() {
        let mk = |idx: u64, mean: f64| PathTestStats {
            path_index: idx,
            t_len: 100,
            means: vec![mean, mean * 2.0],
            sds: vec![1.0, 1.0],
        };
        let paths = vec![mk(0, 0.3), mk(1, 0.3), mk(2, 0.3)];
        // path equal to the benchmark: zero statistics
        let rows = emt_statistics(&paths, BenchmarkMode::PointWise, Some(0)).unwrap();
        for v in &rows[0] {
            assert_relative_eq!(*v, 0.0, epsilon = 1e-12);
        }
        // all paths identical, average mode: all zero
        let rows = emt_statistics(&paths, BenchmarkMode::Average, None).unwrap();
        for row in &rows {
            for v in row {
                assert_relative_eq!(*v, 0.0, epsilon = 1e-12);
            }
        }
        assert!(emt_statistics(&paths, BenchmarkMode::PointWise, None).is_err());
        assert!(emt_statistics(&paths, BenchmarkMode::PointWise, Some(9)).is_err());
    }

    #[test]
    fn emt_reduces_to_brc_on_bootstrap_replicates() {
        let m = gaussian_matrix(120, 5, 1.0, 17);
        let reps = block_bootstrap(&m, 6, 50, 19).unwrap();
        let brc_rows = brc_statistics(&reps, &m);
        // repackage the replicates as "paths" with the original as benchmark
        let mut paths: Vec<PathTestStats> = reps
            .iter()
            .enumerate()
            .map(|(i, rep)| PathTestStats {
                path_index: i as u64 + 1,
                t_len: rep.rows,
                means: rep.column_means(),
                sds: (0..rep.cols)
                    .map(|n| stats::sd_sample(&rep.column(n)))
                    .collect(),
            })
            .collect();
        paths.push(PathTestStats {
            path_index: 0,
            t_len: m.rows,
            means: m.column_means(),
            sds: (0..m.cols).map(|n| stats::sd_sample(&m.column(n))).collect(),
        });
        let emt_rows = emt_statistics(&paths, BenchmarkMode::PointWise, Some(0)).unwrap();
        for (brc_row, emt_row) in brc_rows.iter().zip(&emt_rows) {
            for (a, b) in brc_row.iter().zip(emt_row) {
                assert_relative_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn threshold_rules() {
        assert_relative_eq!(threshold(&[3.0; 10], 0.95).unwrap(), 3.0);
        let xs: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_relative_eq!(threshold(&xs, 0.95).unwrap(), 95.05, epsilon = 1e-12);
        let t90 = threshold(&xs, 0.90).unwrap();
        let t99 = threshold(&xs, 0.99).unwrap();
        assert!(t90 <= t99);
        assert!(threshold(&[], 0.95).is_err());
        assert!(threshold(&xs, 1.2).is_err());
    }

    #[test]
    fn gaussian_max_quantile_values() {
        assert_relative_eq!(
            gaussian_max_quantile(1, 1.0, 0.975).unwrap(),
            1.959964,
            epsilon = 1e-5
        );
        assert_relative_eq!(
            gaussian_max_quantile(10, 1.0, 0.95).unwrap(),
            stats::normal_quantile(0.95f64.powf(0.1)),
            epsilon = 1e-12
        );
        assert!((gaussian_max_quantile(10, 1.0, 0.95).unwrap() - 2.568).abs() < 1e-3);
        // exactly linear in sigma
        for sigma in [0.5, 2.0, 7.3] {
            assert_relative_eq!(
                gaussian_max_quantile(82, sigma, 0.95).unwrap(),
                sigma * gaussian_max_quantile(82, 1.0, 0.95).unwrap(),
                epsilon = 1e-12
            );
        }
        assert!(gaussian_max_quantile(1, 1.0, 0.4).is_err());
        assert!(gaussian_max_quantile(1, 0.0, 0.9).is_err());
    }

    #[test]
    fn gaussian_max_quantile_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let gauss = rand_distr::Normal::new(0.0, 1.0).unwrap();
        for n_tests in [1usize, 10, 82] {
            let worlds = 4000;
            let maxima: Vec<f64> = (0..worlds)
                .map(|_| {
                    (0..n_tests)
                        .map(|_| gauss.sample(&mut rng))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            let empirical = stats::quantile(&maxima, 0.95);
            let analytic = gaussian_max_quantile(n_tests, 1.0, 0.95).unwrap();
            // Monte-Carlo se of a quantile via the density at the quantile
            let density = {
                let phi = (-analytic * analytic / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
                n_tests as f64 * stats::normal_cdf(analytic).powi(n_tests as i32 - 1) * phi
            };
            let se = (0.95 * 0.05 / worlds as f64).sqrt() / density;
            assert!(
                (empirical - analytic).abs() < 3.0 * se + 0.02,
                "N={n_tests}: {empirical} vs {analytic} (se {se})"
            );
        }
    }
}
