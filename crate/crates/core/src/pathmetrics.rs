//! Outcome-cloud metrics: hacking intervals and their growth rates,
//! ease-to-confirm scoring of published values, and p-curve based triage.

use crate::pathgrid::StudySpec;
use crate::stats;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("fixed-layer count {k} outside 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("values length {got} does not match path count {expected}")]
    ValueCount { expected: u64, got: usize },
    #[error("power-law fit needs at least 2 strictly positive points")]
    FitUnderdetermined,
    #[error("non-positive interval average at free count {0}")]
    NonPositiveAri(usize),
    #[error("quantile level {0} outside (0, 1)")]
    BadQuantile(f64),
    #[error("parametric fit needs at least {need} outcomes, got {got}")]
    TooFewOutcomes { need: usize, got: usize },
    #[error("outcomes have zero dispersion; cannot fit a parametric cdf")]
    DegenerateSpread,
    #[error("empty input")]
    Empty,
    #[error("histogram bin count must be a positive even number, got {0}")]
    OddBins(usize),
    #[error("p-value {0} outside [0, 1]")]
    BadPValue(f64),
    #[error(transparent)]
    Grid(#[from] crate::pathgrid::GridError),
}

// ---------------------------------------------------------------------------
// hacking intervals
// ---------------------------------------------------------------------------

/// Interval statistics at one number of fixed layers `K`.
///
/// For every combination of `K` fixed layers and every configuration of
/// their options, the free paths form one cell; the cell's interval is
/// `max - min` of the defined outcome values inside it. `nominal_cells` is
/// `n_K = sum_l prod_{k in c_l(K)} r_k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KIntervals {
    pub fixed_count: usize,
    pub free_count: usize,
    pub intervals: Vec<f64>,
    pub nominal_cells: u64,
    pub empty_cells: usize,
    /// Average range of intervals over the non-empty cells.
    pub ari: f64,
}

/// Full interval report across the requested `K` range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HackingIntervalReport {
    pub slices: Vec<KIntervals>,
    /// `(free_count, ARI(free) / ARI(free - 1) - 1)` for consecutive slices.
    pub growth_rates: Vec<(usize, f64)>,
    /// `(a, b)` of `ARI(n) = a * b^n` fitted on (free_count, ARI), when the
    /// fit is defined.
    pub power_law: Option<(f64, f64)>,
    /// Paths excluded from min/max (errored, infeasible, or value-less).
    pub excluded_paths: usize,
}

/// Interval slice for one `K`: `values[i]` is the outcome of path index `i`
/// (`None` = excluded: errored or infeasible path).
pub fn hacking_intervals(
    spec: &StudySpec,
    values: &[Option<f64>],
    fixed_count: usize,
) -> Result<KIntervals, MetricsError> {
    let j = spec.layer_count();
    if fixed_count == 0 || fixed_count >= j {
        return Err(MetricsError::KOutOfRange { k: fixed_count, max: j - 1 });
    }
    let total = spec.path_count();
    if values.len() as u64 != total {
        return Err(MetricsError::ValueCount { expected: total, got: values.len() });
    }
    let sizes = spec.layer_sizes();
    let mut intervals = Vec::new();
    let mut nominal_cells = 0u64;
    let mut empty_cells = 0usize;

    // all C(J, K) combinations of fixed layers
    let mut combo: Vec<usize> = (0..fixed_count).collect();
    loop {
        nominal_cells += combo.iter().map(|&l| sizes[l] as u64).product::<u64>();
        // one sweep over all paths, bucketing by the fixed-option signature
        let mut cells: HashMap<u64, (f64, f64)> = HashMap::new();
        let mut choices = vec![0usize; j];
        for index in 0..total {
            if let Some(v) = values[index as usize] {
                let mut key = 0u64;
                for &l in &combo {
                    key = key * sizes[l] as u64 + choices[l] as u64;
                }
                cells
                    .entry(key)
                    .and_modify(|(lo, hi)| {
                        *lo = lo.min(v);
                        *hi = hi.max(v);
                    })
                    .or_insert((v, v));
            }
            for l in (0..j).rev() {
                choices[l] += 1;
                if choices[l] < sizes[l] {
                    break;
                }
                choices[l] = 0;
            }
        }
        let combo_cells = combo.iter().map(|&l| sizes[l] as u64).product::<u64>();
        empty_cells += (combo_cells as usize).saturating_sub(cells.len());
        // deterministic order
        let mut keyed: Vec<(u64, (f64, f64))> = cells.into_iter().collect();
        keyed.sort_by_key(|(k, _)| *k);
        intervals.extend(keyed.into_iter().map(|(_, (lo, hi))| hi - lo));

        // next combination
        let mut i = fixed_count;
        loop {
            if i == 0 {
                // done
                let ari = stats::mean(&intervals);
                return Ok(KIntervals {
                    fixed_count,
                    free_count: j - fixed_count,
                    intervals,
                    nominal_cells,
                    empty_cells,
                    ari,
                });
            }
            i -= 1;
            if combo[i] != i + j - fixed_count {
                combo[i] += 1;
                for x in i + 1..fixed_count {
                    combo[x] = combo[x - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Build the slices for every `K` in `1..=J-1`, the growth rates over free
/// counts, and the power-law fit of ARI against the free count.
pub fn hacking_interval_report(
    spec: &StudySpec,
    values: &[Option<f64>],
) -> Result<HackingIntervalReport, MetricsError> {
    let j = spec.layer_count();
    let mut slices = Vec::new();
    for k in 1..j {
        slices.push(hacking_intervals(spec, values, k)?);
    }
    // order by free count ascending
    slices.sort_by_key(|s| s.free_count);
    let mut growth_rates = Vec::new();
    for w in slices.windows(2) {
        if w[0].ari > 0.0 {
            growth_rates.push((w[1].free_count, w[1].ari / w[0].ari - 1.0));
        }
    }
    let points: Vec<(f64, f64)> = slices
        .iter()
        .map(|s| (s.free_count as f64, s.ari))
        .collect();
    let power_law = fit_power_law(&points).ok();
    let excluded_paths = values.iter().filter(|v| v.is_none()).count();
    Ok(HackingIntervalReport { slices, growth_rates, power_law, excluded_paths })
}

/// Least-squares fit of `log y = log a + x log b` on `(x, y)` points with
/// `y > 0`; returns `(a, b)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<(f64, f64), MetricsError> {
    if points.len() < 2 {
        return Err(MetricsError::FitUnderdetermined);
    }
    if let Some((x, _)) = points.iter().find(|(_, y)| *y <= 0.0) {
        return Err(MetricsError::NonPositiveAri(*x as usize));
    }
    let xs: Vec<f64> = points.iter().map(|(x, _)| *x).collect();
    let logy: Vec<f64> = points.iter().map(|(_, y)| y.ln()).collect();
    let mx = stats::mean(&xs);
    let my = stats::mean(&logy);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(MetricsError::FitUnderdetermined);
    }
    let sxy: f64 = xs
        .iter()
        .zip(&logy)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    Ok((intercept.exp(), slope.exp()))
}

// ---------------------------------------------------------------------------
// ease to confirm
// ---------------------------------------------------------------------------

/// Distribution fitted to the path outcomes for the confirmation score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "nu")]
pub enum DistFit {
    Empirical,
    Gaussian,
    /// Moment-matched location-scale Student law with `nu` degrees of
    /// freedom (scale = sd * sqrt((nu-2)/nu)).
    Student(f64),
}

/// Confirmation score of a reference value against the outcome cloud.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EtCReport {
    pub reference: f64,
    pub fit: DistFit,
    pub quantile_level: f64,
    /// Fitted quantile at `quantile_level`.
    pub theta: f64,
    /// Fitted cdf at the reference value.
    pub cdf_at_reference: f64,
    /// Odds of favorable outcome: the right-truncated tail probability,
    /// zero when the reference sits at or below `theta`.
    pub ofo: f64,
    /// Ease to confirm: `1 - ofo`.
    pub etc: f64,
}

/// Pure arithmetic of the score given the fitted cdf value:
/// `OFO = (phi - q) / (1 - q)` when the reference exceeds the `q`-quantile,
/// else 0; `EtC = 1 - OFO`.
pub fn etc_from_probability(cdf_at_reference: f64, q: f64, above_threshold: bool) -> (f64, f64) {
    let ofo = if above_threshold {
        ((cdf_at_reference - q) / (1.0 - q)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (ofo, 1.0 - ofo)
}

/// Score how easily `reference` could be reproduced by the spanned outcomes,
/// with effects pre-signed so that larger is more favorable.
///
/// Parametric fits require at least 30 outcomes; the Gaussian uses the
/// sample mean and standard deviation, the Student law is moment-matched at
/// the same mean and sd.
pub fn etc_score(
    outcomes: &[f64],
    reference: f64,
    q: f64,
    fit: DistFit,
) -> Result<EtCReport, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::Empty);
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(MetricsError::BadQuantile(q));
    }
    if !matches!(fit, DistFit::Empirical) && outcomes.len() < 30 {
        return Err(MetricsError::TooFewOutcomes { need: 30, got: outcomes.len() });
    }
    let (theta, cdf_at_reference) = match fit {
        DistFit::Empirical => (stats::quantile(outcomes, q), stats::ecdf(outcomes, reference)),
        DistFit::Gaussian => {
            let m = stats::mean(outcomes);
            let sd = stats::sd_sample(outcomes);
            if sd == 0.0 {
                return Err(MetricsError::DegenerateSpread);
            }
            let dist = Normal::new(m, sd).expect("positive sd");
            (dist.inverse_cdf(q), dist.cdf(reference))
        }
        DistFit::Student(nu) => {
            let m = stats::mean(outcomes);
            let sd = stats::sd_sample(outcomes);
            if sd == 0.0 {
                return Err(MetricsError::DegenerateSpread);
            }
            let scale = sd * ((nu - 2.0) / nu).max(0.0).sqrt();
            if scale == 0.0 {
                return Err(MetricsError::DegenerateSpread);
            }
            let dist = StudentsT::new(m, scale, nu).expect("valid student parameters");
            (dist.inverse_cdf(q), dist.cdf(reference))
        }
    };
    let (ofo, etc) = etc_from_probability(cdf_at_reference, q, reference > theta);
    Ok(EtCReport {
        reference,
        fit,
        quantile_level: q,
        theta,
        cdf_at_reference,
        ofo,
        etc,
    })
}

// ---------------------------------------------------------------------------
// p-curve triage
// ---------------------------------------------------------------------------

/// Verdict of the discounted decay score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HackClass {
    /// `kappa < 0.25`.
    Unnecessary,
    /// `0.25 <= kappa <= 0.4` (the boundary falls here).
    Possible,
    /// `kappa > 0.4`.
    Problematic,
}

pub fn classify_kappa(kappa: f64) -> HackClass {
    if kappa < 0.25 {
        HackClass::Unnecessary
    } else if kappa <= 0.4 {
        HackClass::Possible
    } else {
        HackClass::Problematic
    }
}

/// Histogram diagnostics of a p-value cloud.
///
/// `counts` are over `bins` equal-width intervals of [0, 1]. First-order
/// violations collect the indices `i` (1-based) in `1..=floor((I-1)/2)` with
/// `n_i <= n_{i+1}`; second-order violations the `i` with
/// `n_i/n_{i+1} <= n_{i+1}/n_{i+2}` where both ratios are defined. The decay
/// score is `kappa = sum_{i=1}^{I/2} (n_{i+1}/n_i) / i` over defined terms;
/// `kappa_complete` reports whether every term was defined.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PCurveReport {
    pub bins: usize,
    pub counts: Vec<u64>,
    pub first_order_violations: Vec<usize>,
    pub second_order_violations: Vec<usize>,
    pub undefined_ratios: usize,
    pub kappa: f64,
    pub kappa_complete: bool,
    pub class: HackClass,
}

pub fn pcurve_report(p_values: &[f64], bins: usize) -> Result<PCurveReport, MetricsError> {
    if p_values.is_empty() {
        return Err(MetricsError::Empty);
    }
    if bins == 0 || !bins.is_multiple_of(2) {
        return Err(MetricsError::OddBins(bins));
    }
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(MetricsError::BadPValue(*p));
    }
    let mut counts = vec![0u64; bins];
    for &p in p_values {
        let i = ((p * bins as f64) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let half = (bins - 1) / 2;
    let mut first = Vec::new();
    for i in 1..=half {
        if counts[i - 1] <= counts[i] {
            first.push(i);
        }
    }
    let mut second = Vec::new();
    let mut undefined = 0usize;
    for i in 1..half {
        let (a, b, c) = (counts[i - 1], counts[i], counts[i + 1]);
        if b == 0 || c == 0 {
            undefined += 1;
            continue;
        }
        let r1 = a as f64 / b as f64;
        let r2 = b as f64 / c as f64;
        if r1 <= r2 {
            second.push(i);
        }
    }
    let mut kappa = 0.0;
    let mut complete = true;
    for i in 1..=bins / 2 {
        if counts[i - 1] == 0 {
            complete = false;
            undefined += 1;
            continue;
        }
        kappa += counts[i] as f64 / counts[i - 1] as f64 / i as f64;
    }
    Ok(PCurveReport {
        bins,
        counts,
        first_order_violations: first,
        second_order_violations: second,
        undefined_ratios: undefined,
        kappa,
        kappa_complete: complete,
        class: classify_kappa(kappa),
    })
}
