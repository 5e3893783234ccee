//! Vector-level data-preparation transforms. All are pure: same input,
//! bit-identical output.

use super::PanelError;
use crate::stats;

/// Rank-based winsorization: values below the `(k+1)`-th order statistic are
/// set to it, values above the `(N-k)`-th are set to it, so exactly the `k`
/// most extreme values in each tail are replaced. Ties are broken by stable
/// order statistics. Requires `2k < N`.
pub fn winsorize(xs: &[f64], k: usize) -> Result<Vec<f64>, PanelError> {
    let n = xs.len();
    if 2 * k >= n && !(k == 0 && n > 0) {
        return Err(PanelError::WinsorTooLarge { k, n });
    }
    if k == 0 {
        return Ok(xs.to_vec());
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        xs[a]
            .partial_cmp(&xs[b])
            .expect("NaN in winsorize input")
            .then(a.cmp(&b))
    });
    let lo = xs[order[k]]; // (k+1)-th order statistic
    let hi = xs[order[n - 1 - k]]; // (N-k)-th order statistic
    Ok(xs.iter().map(|&x| x.clamp(lo, hi)).collect())
}

/// Winsorization with a per-tail fraction: `k = floor(alpha * N)`.
pub fn winsorize_fraction(xs: &[f64], alpha: f64) -> Result<Vec<f64>, PanelError> {
    let k = (alpha * xs.len() as f64).floor() as usize;
    winsorize(xs, k)
}

/// First differences: output has length `N - 1`, `out_n = in_{n+1} - in_n`.
pub fn difference(xs: &[f64]) -> Result<Vec<f64>, PanelError> {
    if xs.len() < 2 {
        return Err(PanelError::TooShort { need: 2, got: xs.len() });
    }
    Ok(xs.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Running sums: `out_n = sum_{k <= n} in_k`.
pub fn cumulative_sum(xs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    xs.iter()
        .map(|&x| {
            acc += x;
            acc
        })
        .collect()
}

/// Demean and scale to unit standard deviation under the divide-by-N
/// convention.
pub fn standardize(xs: &[f64]) -> Result<Vec<f64>, PanelError> {
    let m = stats::mean(xs);
    let sd = stats::sd_pop(xs);
    if sd == 0.0 {
        return Err(PanelError::ZeroVariance);
    }
    Ok(xs.iter().map(|&x| (x - m) / sd).collect())
}

/// Scale a dependent-variable series by `sqrt(h * m)` where `h` is the return
/// horizon in periods and `m` the months per period, so the baseline scale is
/// the monthly return.
pub fn scale_dependent(ys: &[f64], horizon: u32, months_per_period: u32) -> Result<Vec<f64>, PanelError> {
    let hm = horizon as f64 * months_per_period as f64;
    if hm <= 0.0 {
        return Err(PanelError::BadScale(hm));
    }
    let s = hm.sqrt();
    Ok(ys.iter().map(|y| y / s).collect())
}
