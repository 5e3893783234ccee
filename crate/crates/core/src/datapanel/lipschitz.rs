//! Lipschitz-ratio harness for the data-preparation transforms.
//!
//! For a transform `f` and two inputs `d1`, `d2`, the observed ratio is
//! `||f(d1) - f(d2)||_p / ||d1 - d2||_p`. [`lipschitz_bound`] returns the
//! matching analytic bound where one is known:
//!
//! - mean: `N^{-1/p}`
//! - biased variance: `N^{-1/p} (|mean(d1)+mean(d2)| + max_n |d1_n + d2_n|)`
//! - max / min (sup norm): 1
//! - forward imputation over a common missing set: `2^{1/p}`
//! - row removal over a common set: 1
//! - winsorization by `k` per tail (L1, both inputs sharing one rank order):
//!   `1 + k`
//! - differencing (L1): 2
//! - cumulative sum (L1): `N`
//! - standardization (L2): `(2 + A / (sd(d1)+sd(d2))) / sd(d2)` with
//!   `A = |mean(d1)+mean(d2)| + max_n |d1_n + d2_n|` and divide-by-N standard
//!   deviations. The two non-constant terms follow the same triangle-equality
//!   split as the variance bound; the constant is input-dependent.
//!
//! Bounds marked L1/L2-only return `None` for other norm orders.

use super::transforms;
use super::PanelError;
use crate::stats;

/// Which vector norm the ratio uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormOrder {
    L1,
    L2,
    LInf,
}

impl NormOrder {
    pub fn eval(self, xs: &[f64]) -> f64 {
        match self {
            NormOrder::L1 => xs.iter().map(|x| x.abs()).sum(),
            NormOrder::L2 => xs.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormOrder::LInf => xs.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    /// `N^{-1/p}` for the Hoelder factor in the mean/variance bounds.
    fn holder_factor(self, n: usize) -> f64 {
        match self {
            NormOrder::L1 => 1.0 / n as f64,
            NormOrder::L2 => 1.0 / (n as f64).sqrt(),
            NormOrder::LInf => 1.0,
        }
    }
}

/// A transform under Lipschitz scrutiny. Transforms that need a common
/// missing/removal index set carry it so both inputs are treated identically.
#[derive(Debug, Clone)]
pub enum Transform {
    Mean,
    Variance,
    Max,
    Min,
    Difference,
    CumulativeSum,
    Standardize,
    Winsorize(usize),
    /// Indices treated as missing in both inputs; filled from the nearest
    /// preceding non-listed index. Index 0 must not be listed.
    ImputeForward(Vec<usize>),
    /// Indices removed from both inputs.
    DropRows(Vec<usize>),
}

impl Transform {
    pub fn name(&self) -> &'static str {
        match self {
            Transform::Mean => "mean",
            Transform::Variance => "variance",
            Transform::Max => "max",
            Transform::Min => "min",
            Transform::Difference => "difference",
            Transform::CumulativeSum => "cumulative_sum",
            Transform::Standardize => "standardize",
            Transform::Winsorize(_) => "winsorize",
            Transform::ImputeForward(_) => "impute_forward",
            Transform::DropRows(_) => "drop_rows",
        }
    }

    pub fn apply(&self, xs: &[f64]) -> Result<Vec<f64>, PanelError> {
        match self {
            Transform::Mean => Ok(vec![stats::mean(xs)]),
            Transform::Variance => Ok(vec![stats::variance_pop(xs)]),
            Transform::Max => Ok(vec![xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)]),
            Transform::Min => Ok(vec![xs.iter().copied().fold(f64::INFINITY, f64::min)]),
            Transform::Difference => transforms::difference(xs),
            Transform::CumulativeSum => Ok(transforms::cumulative_sum(xs)),
            Transform::Standardize => transforms::standardize(xs),
            Transform::Winsorize(k) => transforms::winsorize(xs, *k),
            Transform::ImputeForward(missing) => {
                let mut out = xs.to_vec();
                for &i in missing {
                    debug_assert!(i > 0, "leading value must be present");
                    // nearest preceding non-missing index
                    let mut j = i - 1;
                    while missing.contains(&j) {
                        j -= 1;
                    }
                    out[i] = out[j];
                }
                Ok(out)
            }
            Transform::DropRows(remove) => Ok(xs
                .iter()
                .enumerate()
                .filter(|(i, _)| !remove.contains(i))
                .map(|(_, &x)| x)
                .collect()),
        }
    }
}

/// Observed divergence ratio `||f(d1) - f(d2)||_p / ||d1 - d2||_p`.
///
/// Defined as 0 when both numerator and denominator vanish, and infinity when
/// only the denominator does.
pub fn lipschitz_ratio(
    transform: &Transform,
    d1: &[f64],
    d2: &[f64],
    norm: NormOrder,
) -> Result<f64, PanelError> {
    if d1.len() != d2.len() {
        return Err(PanelError::LengthMismatch {
            column: "d2".into(),
            expected: d1.len(),
            got: d2.len(),
        });
    }
    let f1 = transform.apply(d1)?;
    let f2 = transform.apply(d2)?;
    let diff_out: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a - b).collect();
    let diff_in: Vec<f64> = d1.iter().zip(d2).map(|(a, b)| a - b).collect();
    let num = norm.eval(&diff_out);
    let den = norm.eval(&diff_in);
    if den == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(num / den)
}

/// The analytic bound for `(transform, norm)` evaluated on this input pair,
/// or `None` when no bound applies to that combination.
pub fn lipschitz_bound(
    transform: &Transform,
    d1: &[f64],
    d2: &[f64],
    norm: NormOrder,
) -> Option<f64> {
    let n = d1.len();
    match (transform, norm) {
        (Transform::Mean, p) => Some(p.holder_factor(n)),
        (Transform::Variance, p) => {
            Some(p.holder_factor(n) * pair_magnitude(d1, d2))
        }
        (Transform::Max, NormOrder::LInf) | (Transform::Min, NormOrder::LInf) => Some(1.0),
        (Transform::Difference, NormOrder::L1) => Some(2.0),
        (Transform::CumulativeSum, NormOrder::L1) => Some(n as f64),
        (Transform::Winsorize(k), NormOrder::L1) => Some(1.0 + *k as f64),
        (Transform::ImputeForward(_), p) => Some(match p {
            NormOrder::L1 => 2.0,
            NormOrder::L2 => std::f64::consts::SQRT_2,
            NormOrder::LInf => 1.0,
        }),
        (Transform::DropRows(_), _) => Some(1.0),
        (Transform::Standardize, NormOrder::L2) => {
            let s1 = stats::sd_pop(d1);
            let s2 = stats::sd_pop(d2);
            if s1 == 0.0 || s2 == 0.0 {
                return None;
            }
            Some((2.0 + pair_magnitude(d1, d2) / (s1 + s2)) / s2)
        }
        _ => None,
    }
}

/// `|mean(d1) + mean(d2)| + max_n |d1_n + d2_n|`, the input-magnitude factor
/// shared by the variance and standardization constants.
fn pair_magnitude(d1: &[f64], d2: &[f64]) -> f64 {
    let sums = stats::mean(d1) + stats::mean(d2);
    let dstar = d1
        .iter()
        .zip(d2)
        .fold(0.0f64, |m, (a, b)| m.max((a + b).abs()));
    sums.abs() + dstar
}

/// Covariance divergence bound used by the randomized suite. For the biased
/// sample covariance `cov(x, y) = (x - xbar)'(y - ybar) / N`, the gap
/// `|cov(x1,y1) - cov(x2,y2)|` is bounded by
///
/// ```text
/// ||y1 - ybar1||_1 / N * (||x1 - x2||_inf + |xbar1 - xbar2|)
///   + ||x2 - xbar2||_1 / N * (||y1 - y2||_inf + |ybar1 - ybar2|)
/// ```
#[cfg(test)]
fn covariance_gap_bound(x1: &[f64], y1: &[f64], x2: &[f64], y2: &[f64]) -> f64 {
    let n = x1.len() as f64;
    let centered_l1 = |v: &[f64]| {
        let m = stats::mean(v);
        v.iter().map(|a| (a - m).abs()).sum::<f64>()
    };
    let sup = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .fold(0.0f64, |m, (u, v)| m.max((u - v).abs()))
    };
    centered_l1(y1) / n * (sup(x1, x2) + (stats::mean(x1) - stats::mean(x2)).abs())
        + centered_l1(x2) / n * (sup(y1, y2) + (stats::mean(y1) - stats::mean(y2)).abs())
}

#[cfg(test)]
fn covariance_pop(x: &[f64], y: &[f64]) -> f64 {
    let mx = stats::mean(x);
    let my = stats::mean(y);
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / x.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| (rng.random::<f64>() - 0.5) * 2.0 * scale).collect()
    }

    #[test]
    fn ratio_zero_and_infinite_edges() {
        let d = [1.0, 2.0, 3.0];
        assert_eq!(
            lipschitz_ratio(&Transform::Mean, &d, &d, NormOrder::L1).unwrap(),
            0.0
        );
    }

    #[test]
    fn mean_respects_holder_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let n = rng.random_range(2..40);
            let d1 = random_vec(&mut rng, n, 5.0);
            let d2 = random_vec(&mut rng, n, 5.0);
            for p in [NormOrder::L1, NormOrder::L2, NormOrder::LInf] {
                let r = lipschitz_ratio(&Transform::Mean, &d1, &d2, p).unwrap();
                let b = lipschitz_bound(&Transform::Mean, &d1, &d2, p).unwrap();
                assert!(r <= b + 1e-12, "mean ratio {r} > bound {b}");
            }
        }
    }

    #[test]
    fn max_is_sup_norm_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let n = rng.random_range(2..40);
            let d1 = random_vec(&mut rng, n, 5.0);
            let d2 = random_vec(&mut rng, n, 5.0);
            for t in [Transform::Max, Transform::Min] {
                let r = lipschitz_ratio(&t, &d1, &d2, NormOrder::LInf).unwrap();
                assert!(r <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn covariance_gap_within_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let n = rng.random_range(2..30);
            let x1 = random_vec(&mut rng, n, 4.0);
            let y1 = random_vec(&mut rng, n, 4.0);
            let x2 = random_vec(&mut rng, n, 4.0);
            let y2 = random_vec(&mut rng, n, 4.0);
            let gap = (covariance_pop(&x1, &y1) - covariance_pop(&x2, &y2)).abs();
            let bound = covariance_gap_bound(&x1, &y1, &x2, &y2);
            assert!(gap <= bound + 1e-10, "cov gap {gap} > bound {bound}");
        }
    }

    #[test]
    fn unknown_bounds_are_none() {
        let d = [1.0, 2.0];
        assert!(lipschitz_bound(&Transform::Standardize, &d, &d, NormOrder::L1).is_none());
        assert!(lipschitz_bound(&Transform::Difference, &d, &d, NormOrder::LInf).is_none());
    }
}
