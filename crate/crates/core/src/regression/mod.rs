//! Small dense linear-model kernels: OLS with iid and Newey-West HAC
//! standard errors, the augmented predictive regression with the
//! autocorrelation-bias correction, and the information criterion used by the
//! weighting schemes. Also hosts the ten-layer equity-premium study executor.

mod premium;

pub use premium::{
    premium_study_spec, run_premium_study, PremiumData, PremiumError, PremiumOptions,
    PremiumStudyReport,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("need more observations than parameters: n = {n}, columns = {k}")]
    TooFewObservations { n: usize, k: usize },
    #[error("singular design matrix (reciprocal condition {rcond:.3e})")]
    SingularDesign { rcond: f64 },
    #[error("HAC lag {lag} must be smaller than the sample size {n}")]
    LagTooLarge { lag: usize, n: usize },
    #[error("predictor has zero variance")]
    DegeneratePredictor,
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
}

/// Reciprocal condition number below which a design is declared singular.
pub const RCOND_TOLERANCE: f64 = 1e-10;

/// Everything one linear fit produces, in the shape the averaging formulas
/// consume: `rss` is the residual sum of squares, `yvar` the biased sample
/// variance of the dependent variable, `k` the predictor count excluding the
/// intercept.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionResult {
    pub coefficients: Vec<f64>,
    pub se_iid: Vec<f64>,
    pub se_hac: Option<Vec<f64>>,
    pub t_stats: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub n: usize,
    pub k: usize,
    pub yvar: f64,
    pub aic: f64,
    /// Bartlett lag actually used when HAC errors were computed.
    pub hac_lag: Option<usize>,
}

impl RegressionResult {
    /// t-statistics under the HAC errors when present, else the iid ones.
    pub fn t_stats_hac(&self) -> Option<Vec<f64>> {
        self.se_hac.as_ref().map(|se| {
            self.coefficients
                .iter()
                .zip(se)
                .map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 })
                .collect()
        })
    }
}

/// Ordinary least squares of `y` on the columns of `x` (pass the intercept as
/// an explicit column of ones).
///
/// The iid covariance is `s^2 (X'X)^{-1}` with `s^2 = RSS / (n - K)`, and the
/// information criterion is `n ln(RSS/n) + 2 (K + 1)` with `K` the column
/// count; only differences of the criterion matter downstream.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<RegressionResult, RegressionError> {
    let n = x.nrows();
    let k_cols = x.ncols();
    if y.len() != n {
        return Err(RegressionError::Dimensions(format!(
            "y has {} rows, X has {}",
            y.len(),
            n
        )));
    }
    if n <= k_cols {
        return Err(RegressionError::TooFewObservations { n, k: k_cols });
    }
    let svd = x.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
    if rcond < RCOND_TOLERANCE {
        return Err(RegressionError::SingularDesign { rcond });
    }
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let xtx_inv = xtx
        .try_inverse()
        .ok_or(RegressionError::SingularDesign { rcond })?;
    let beta = &xtx_inv * xty;
    let fitted = x * &beta;
    let residuals = y - fitted;
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let s2 = rss / (n - k_cols) as f64;
    let se_iid: Vec<f64> = (0..k_cols)
        .map(|i| (s2 * xtx_inv[(i, i)]).max(0.0).sqrt())
        .collect();
    let t_stats = beta
        .iter()
        .zip(&se_iid)
        .map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 })
        .collect();
    let ybar = y.mean();
    let yvar = y.iter().map(|v| (v - ybar) * (v - ybar)).sum::<f64>() / n as f64;
    let aic = n as f64 * (rss / n as f64).max(f64::MIN_POSITIVE).ln() + 2.0 * (k_cols as f64 + 1.0);
    Ok(RegressionResult {
        coefficients: beta.iter().copied().collect(),
        se_iid,
        se_hac: None,
        t_stats,
        residuals: residuals.iter().copied().collect(),
        rss,
        n,
        k: k_cols.saturating_sub(1),
        yvar,
        aic,
        hac_lag: None,
    })
}

/// Newey-West HAC standard errors for an already-fitted regression.
///
/// Builds the Bartlett-weighted score covariance
/// `S = Gamma_0 + sum_{l=1}^{L} (1 - l/(L+1)) (Gamma_l + Gamma_l')` with
/// `Gamma_l = sum_t g_t g_{t-l}'`, `g_t = x_t e_t`, and returns the square
/// roots of the diagonal of the sandwich `(X'X)^{-1} S (X'X)^{-1}`.
pub fn newey_west_se(
    x: &DMatrix<f64>,
    residuals: &[f64],
    lag: usize,
) -> Result<Vec<f64>, RegressionError> {
    let n = x.nrows();
    let k = x.ncols();
    if residuals.len() != n {
        return Err(RegressionError::Dimensions(format!(
            "residuals has {} rows, X has {}",
            residuals.len(),
            n
        )));
    }
    if lag >= n {
        return Err(RegressionError::LagTooLarge { lag, n });
    }
    // score rows g_t = x_t * e_t
    let mut scores = DMatrix::zeros(n, k);
    for t in 0..n {
        for j in 0..k {
            scores[(t, j)] = x[(t, j)] * residuals[t];
        }
    }
    let mut s = scores.transpose() * &scores; // Gamma_0
    for l in 1..=lag {
        let w = 1.0 - l as f64 / (lag as f64 + 1.0);
        let mut gamma = DMatrix::zeros(k, k);
        for t in l..n {
            for i in 0..k {
                for j in 0..k {
                    gamma[(i, j)] += scores[(t, i)] * scores[(t - l, j)];
                }
            }
        }
        s += (&gamma + gamma.transpose()) * w;
    }
    let xtx = x.transpose() * x;
    let xtx_inv = xtx.try_inverse().ok_or(RegressionError::SingularDesign {
        rcond: 0.0,
    })?;
    let cov = &xtx_inv * s * &xtx_inv;
    Ok((0..k).map(|i| cov[(i, i)].max(0.0).sqrt()).collect())
}

/// Standard plug-in Bartlett lag `floor(4 (n/100)^{2/9})`.
pub fn default_hac_lag(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Fit OLS and attach HAC errors at the plug-in lag (or a caller-chosen one).
pub fn ols_with_hac(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lag: Option<usize>,
) -> Result<RegressionResult, RegressionError> {
    let mut fit = ols(x, y)?;
    let lag = lag.unwrap_or_else(|| default_hac_lag(fit.n)).min(fit.n - 1);
    fit.se_hac = Some(newey_west_se(x, &fit.residuals, lag)?);
    fit.hac_lag = Some(lag);
    Ok(fit)
}

/// Bias-corrected AR(1) coefficient: `delta + (1 + 3 delta)/n + 3 (1 + 3 delta)/n^2`.
pub fn ar1_bias_correction(delta: f64, n: usize) -> f64 {
    let nf = n as f64;
    delta + (1.0 + 3.0 * delta) / nf + 3.0 * (1.0 + 3.0 * delta) / (nf * nf)
}

/// The augmented predictive regression
/// `y_{t+h} = a + b x_t + gamma nu_{t+1} + e`, where `nu_t = x_t - delta x_{t-1}`
/// is the innovation of the predictor's AR(1) fit `x_t = alpha + delta x_{t-1} + eps`.
///
/// `ys[t]` must already hold the horizon-`h` forward value aligned with
/// `xs[t]` (the executor builds it); the last `h` positions of `xs` have no
/// forward value and `ys` is shorter accordingly. With the correction flag
/// set, the AR(1) coefficient is replaced by its small-sample corrected
/// value before forming innovations.
pub struct AugmentedFit {
    pub result: RegressionResult,
    /// AR(1) coefficient actually used to build innovations.
    pub delta: f64,
}

pub fn augmented_predictive(
    xs: &[f64],
    ys: &[f64],
    use_bias_correction: bool,
    hac_lag: Option<usize>,
    with_hac: bool,
) -> Result<AugmentedFit, RegressionError> {
    // ys[t] pairs with xs[t]; innovations need xs[t+1] and xs[t], so usable
    // observations are t = 0 .. min(len(ys), len(xs)-1).
    let usable = ys.len().min(xs.len().saturating_sub(1));
    if usable < 5 {
        return Err(RegressionError::TooFewObservations { n: usable, k: 3 });
    }
    let n_ar = xs.len() - 1;
    let mean_x = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.iter().all(|&v| (v - mean_x).abs() < 1e-300) {
        return Err(RegressionError::DegeneratePredictor);
    }
    // AR(1) on the predictor over its full span
    let x_ar = DMatrix::from_fn(n_ar, 2, |t, j| if j == 0 { 1.0 } else { xs[t] });
    let y_ar = DVector::from_fn(n_ar, |t, _| xs[t + 1]);
    let ar_fit = ols(&x_ar, &y_ar)?;
    let mut delta = ar_fit.coefficients[1];
    if use_bias_correction {
        delta = ar1_bias_correction(delta, n_ar);
    }
    // main regression with the innovation nu_{t+1} = x_{t+1} - delta x_t
    let design = DMatrix::from_fn(usable, 3, |t, j| match j {
        0 => 1.0,
        1 => xs[t],
        _ => xs[t + 1] - delta * xs[t],
    });
    let y = DVector::from_fn(usable, |t, _| ys[t]);
    let result = if with_hac {
        ols_with_hac(&design, &y, hac_lag)?
    } else {
        ols(&design, &y)?
    };
    Ok(AugmentedFit { result, delta })
}

/// Design matrix `[1, x]` for the simple predictive regression.
pub fn design_with_intercept(xs: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), 2, |t, j| if j == 0 { 1.0 } else { xs[t] })
}
