//! Two-pass cross-sectional risk-premium estimation and its seven-layer
//! study executor.
//!
//! First pass: time-series regression of each asset on all factors,
//! `r_{t,n} = a_n + sum_f b_n^f f_t + e`, either on the full sample or on
//! rolling windows attached to each date with no look-ahead (the window ends
//! strictly before the date). Second pass: per-date cross-sectional
//! regression of returns on the estimated loadings,
//! `r_{t,n} = g_{t,0} + sum_f g_t^f b_n^f + eps`, giving one premium series
//! per factor.
//!
//! The study grid: asset set & weighting (9 = 4 portfolio sets x EW/VW +
//! individual stocks) x first-pass frequency (2) x pre-pass winsorization
//! (3) x regression type (3: full, short or long rolling) x post-pass
//! winsorization of loadings (3), i.e. 486 paths per factor. Rolling windows
//! are 24/60 months or 120/300 days. Pre-pass winsorization tames each
//! asset's first-pass return series; post-pass winsorization acts
//! cross-sectionally on each factor's loading column, date by date. Daily
//! loadings are snapshot at month boundaries for the monthly second pass.

use crate::datapanel::{winsorize_fraction, DataPanel, PanelError};
use crate::outcome::{OutcomeSet, PathOutcome, PathStatus, StatusTally};
use crate::pathgrid::{enumerate_paths, GridError, LayerSpec, OptionSpec, StudySpec};
use crate::regression::ols;
use crate::stats;
use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FmbError {
    #[error("asset set `{0}` not present in the data bundle")]
    UnknownAssetSet(String),
    #[error("no daily data for asset set `{0}`")]
    NoDailyData(String),
    #[error("factor `{0}` missing from the factor panel")]
    MissingFactor(String),
    #[error("returns and factors must share their date index")]
    MisalignedDates,
    #[error("window length {window} not larger than factor count {factors}")]
    WindowTooSmall { window: usize, factors: usize },
    #[error("study layer `{0}` missing or malformed")]
    BadLayer(String),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// How the first pass samples its estimation window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstPassMode {
    Full,
    Rolling { window: usize },
}

/// Per-snapshot, per-asset coefficient vectors `[intercept, b^1, ..., b^F]`.
///
/// `by_snapshot[s][n]` is `None` when the window before snapshot `s` is too
/// short or the fit failed for asset `n`.
#[derive(Debug, Clone)]
pub struct FirstPassLoadings {
    pub asset_names: Vec<String>,
    pub factor_names: Vec<String>,
    pub by_snapshot: Vec<Vec<Option<Vec<f64>>>>,
}

/// Time-series OLS of every asset on the factors, evaluated at each
/// requested snapshot row (window = rows strictly before it; `Full` uses the
/// whole sample everywhere). Exact prefix cross-products make each window
/// O(F^2) regardless of its length.
pub fn first_pass(
    returns: &DataPanel,
    factors: &DataPanel,
    factor_names: &[String],
    mode: FirstPassMode,
    snapshots: &[usize],
) -> Result<FirstPassLoadings, FmbError> {
    if returns.len() != factors.len() || returns.dates() != factors.dates() {
        return Err(FmbError::MisalignedDates);
    }
    let f_cols: Vec<Vec<f64>> = factor_names
        .iter()
        .map(|f| {
            factors
                .dense_column(f)
                .map_err(|_| FmbError::MissingFactor(f.clone()))
        })
        .collect::<Result<_, _>>()?;
    let t_len = returns.len();
    let k = factor_names.len() + 1; // intercept + factors
    if let FirstPassMode::Rolling { window } = mode {
        if window <= factor_names.len() + 1 {
            return Err(FmbError::WindowTooSmall {
                window,
                factors: factor_names.len(),
            });
        }
    }

    // prefix sums of x x' and per asset x r
    let design_row = |t: usize| -> Vec<f64> {
        let mut x = Vec::with_capacity(k);
        x.push(1.0);
        for f in &f_cols {
            x.push(f[t]);
        }
        x
    };
    let mut xtx_prefix = vec![vec![0.0; k * k]; t_len + 1];
    for t in 0..t_len {
        let x = design_row(t);
        let prev = xtx_prefix[t].clone();
        let cur = &mut xtx_prefix[t + 1];
        for i in 0..k {
            for j in 0..k {
                cur[i * k + j] = prev[i * k + j] + x[i] * x[j];
            }
        }
    }
    let asset_names: Vec<String> = returns.column_names().to_vec();
    let asset_cols: Vec<&[Option<f64>]> = asset_names
        .iter()
        .map(|n| returns.column(n).expect("own column"))
        .collect();

    let solve_window = |a: usize, b: usize, q_prefix: &[Vec<f64>], missing: &[u32]| -> Option<Vec<f64>> {
        if b <= a || b - a <= k {
            return None;
        }
        if missing[b] > missing[a] {
            return None; // absent cells inside the window
        }
        let mut xtx = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                xtx[(i, j)] = xtx_prefix[b][i * k + j] - xtx_prefix[a][i * k + j];
            }
        }
        let xty = DVector::from_fn(k, |i, _| q_prefix[b][i] - q_prefix[a][i]);
        xtx.cholesky().map(|c| c.solve(&xty).iter().copied().collect())
    };

    let per_asset: Vec<Vec<Option<Vec<f64>>>> = asset_cols
        .par_iter()
        .map(|col| {
            // per-asset prefixes of x*r and a missing-count prefix
            let mut q_prefix = vec![vec![0.0; k]; t_len + 1];
            let mut missing = vec![0u32; t_len + 1];
            for t in 0..t_len {
                let x = design_row(t);
                let r = col[t];
                missing[t + 1] = missing[t] + u32::from(r.is_none());
                let rv = r.unwrap_or(0.0);
                for i in 0..k {
                    q_prefix[t + 1][i] = q_prefix[t][i] + x[i] * rv;
                }
            }
            snapshots
                .iter()
                .map(|&s| match mode {
                    FirstPassMode::Full => solve_window(0, t_len, &q_prefix, &missing),
                    FirstPassMode::Rolling { window } => {
                        if s < window {
                            None
                        } else {
                            solve_window(s - window, s, &q_prefix, &missing)
                        }
                    }
                })
                .collect()
        })
        .collect();

    // transpose to snapshot-major
    let by_snapshot: Vec<Vec<Option<Vec<f64>>>> = (0..snapshots.len())
        .map(|s| per_asset.iter().map(|rows| rows[s].clone()).collect())
        .collect();
    Ok(FirstPassLoadings {
        asset_names,
        factor_names: factor_names.to_vec(),
        by_snapshot,
    })
}

/// One date of the premium series.
#[derive(Debug, Clone)]
pub struct PremiumPoint {
    pub date: NaiveDate,
    /// `[gamma_0, gamma^1, ..., gamma^F]`; NaN-filled when skipped.
    pub gammas: Vec<f64>,
    pub n_assets: usize,
    pub rss: f64,
    pub yvar: f64,
    pub aic: f64,
    /// `None` = estimated; `Some(reason)` = skipped.
    pub status: Option<String>,
}

/// Per-date cross-sectional regressions of returns on loadings.
///
/// `loadings_by_date[t][n]` is the `[a_n, b_n^1..b_n^F]` vector attached to
/// date `t` for asset `n`; only the factor part enters the design. Dates
/// with fewer than `F + 2` usable assets, or with a rank-deficient
/// cross-section, are skipped with a status.
pub fn second_pass(
    returns: &DataPanel,
    loadings_by_date: &[Vec<Option<Vec<f64>>>],
) -> Result<Vec<PremiumPoint>, FmbError> {
    let asset_names: Vec<String> = returns.column_names().to_vec();
    let cols: Vec<&[Option<f64>]> = asset_names
        .iter()
        .map(|n| returns.column(n).expect("own column"))
        .collect();
    let t_len = returns.len();
    debug_assert_eq!(loadings_by_date.len(), t_len);
    let mut out = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut rows: Vec<(&Vec<f64>, f64)> = Vec::new();
        for (n, col) in cols.iter().enumerate() {
            if let (Some(b), Some(r)) = (&loadings_by_date[t][n], col[t]) {
                rows.push((b, r));
            }
        }
        let n_factors = rows.first().map(|(b, _)| b.len() - 1).unwrap_or(0);
        let date = returns.dates()[t];
        if rows.len() < n_factors + 2 || rows.is_empty() {
            out.push(PremiumPoint {
                date,
                gammas: vec![f64::NAN; n_factors + 1],
                n_assets: rows.len(),
                rss: f64::NAN,
                yvar: f64::NAN,
                aic: f64::NAN,
                status: Some(format!("{} assets available", rows.len())),
            });
            continue;
        }
        let design = DMatrix::from_fn(rows.len(), n_factors + 1, |i, j| {
            if j == 0 {
                1.0
            } else {
                rows[i].0[j]
            }
        });
        let y = DVector::from_fn(rows.len(), |i, _| rows[i].1);
        match ols(&design, &y) {
            Ok(fit) => out.push(PremiumPoint {
                date,
                gammas: fit.coefficients.clone(),
                n_assets: rows.len(),
                rss: fit.rss,
                yvar: fit.yvar,
                aic: fit.aic,
                status: None,
            }),
            Err(e) => out.push(PremiumPoint {
                date,
                gammas: vec![f64::NAN; n_factors + 1],
                n_assets: rows.len(),
                rss: f64::NAN,
                yvar: f64::NAN,
                aic: f64::NAN,
                status: Some(e.to_string()),
            }),
        }
    }
    Ok(out)
}

/// One base-asset universe: monthly returns always, daily optionally.
#[derive(Debug, Clone)]
pub struct FmbAssetSet {
    pub id: String,
    pub monthly: DataPanel,
    pub daily: Option<DataPanel>,
}

/// The study inputs: factor panels per frequency plus the asset universes.
#[derive(Debug, Clone)]
pub struct FmbData {
    pub factor_names: Vec<String>,
    pub factors_monthly: DataPanel,
    pub factors_daily: Option<DataPanel>,
    pub asset_sets: Vec<FmbAssetSet>,
}

impl FmbData {
    fn set(&self, id: &str) -> Result<&FmbAssetSet, FmbError> {
        self.asset_sets
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| FmbError::UnknownAssetSet(id.to_string()))
    }
}

/// The canonical grid: 486 paths (9 x 2 x 3 x 3 x 3).
pub fn fmb_study_spec(asset_options: &[&str]) -> StudySpec {
    use serde_json::json;
    let winsor = |prefix: &str| LayerSpec {
        name: prefix.to_string(),
        options: vec![
            OptionSpec::with_payload("w0", json!({"alpha": 0.0})),
            OptionSpec::with_payload("w1", json!({"alpha": 0.01})),
            OptionSpec::with_payload("w2", json!({"alpha": 0.02})),
        ],
    };
    StudySpec::new(vec![
        LayerSpec::new("assets", asset_options),
        LayerSpec::new("frequency", &["monthly", "daily"]),
        winsor("prewinsor"),
        LayerSpec {
            name: "regtype".into(),
            options: vec![
                OptionSpec::with_payload("roll_short", json!({"mode": "short"})),
                OptionSpec::with_payload("roll_long", json!({"mode": "long"})),
                OptionSpec::with_payload("full", json!({"mode": "full"})),
            ],
        },
        winsor("postwinsor"),
    ])
}

/// Default asset-layer options of the canonical grid.
pub fn canonical_asset_options() -> Vec<&'static str> {
    vec![
        "bm25_ew", "bm25_vw", "bm100_ew", "bm100_vw", "ind12_ew", "ind12_vw", "ind49_ew",
        "ind49_vw", "stocks",
    ]
}

/// Rolling window lengths per frequency.
pub fn rolling_window(frequency_daily: bool, long: bool) -> usize {
    match (frequency_daily, long) {
        (false, false) => 24,
        (false, true) => 60,
        (true, false) => 120,
        (true, true) => 300,
    }
}

#[derive(Debug)]
pub struct FmbStudyReport {
    pub spec: StudySpec,
    pub factor_names: Vec<String>,
    /// One outcome set per factor, aligned with `factor_names`.
    pub outcomes: Vec<OutcomeSet>,
    /// Second-pass months.
    pub months: Vec<NaiveDate>,
    /// `premium_series[path][factor][month]`, NaN where the date was
    /// skipped; empty for failed paths.
    pub premium_series: Vec<Vec<Vec<f64>>>,
    pub tally: StatusTally,
    /// Paths actually executed (not served from the resume map).
    pub executed: usize,
}

/// One path's full result, as carried by the resume map: the per-factor
/// outcomes and the premium series behind them.
#[derive(Debug, Clone)]
pub struct FmbPathResult {
    pub outcomes: Vec<PathOutcome>,
    pub series: Vec<Vec<f64>>,
}

/// (asset set, daily flag, prewinsor bits, rolling-long flag) shared by all
/// paths that reuse one first pass.
type FirstPassKey = (String, bool, u64, Option<bool>);

struct PathPlan {
    set_id: String,
    daily: bool,
    prewinsor: f64,
    mode_long: Option<bool>, // None = full
    postwinsor: f64,
}

fn plan_path(spec: &StudySpec, path: &crate::pathgrid::PathAssignment) -> Result<PathPlan, FmbError> {
    let id = |layer: &str| -> Result<&str, FmbError> {
        let li = spec
            .layer_index(layer)
            .ok_or_else(|| FmbError::BadLayer(layer.to_string()))?;
        Ok(spec.layers[li].options[path.choices[li]].id.as_str())
    };
    let alpha = |layer: &str| -> Result<f64, FmbError> {
        spec.payload(path, layer)
            .get("alpha")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| FmbError::BadLayer(layer.to_string()))
    };
    Ok(PathPlan {
        set_id: id("assets")?.to_string(),
        daily: id("frequency")? == "daily",
        prewinsor: alpha("prewinsor")?,
        mode_long: match spec
            .payload(path, "regtype")
            .get("mode")
            .and_then(|v| v.as_str())
        {
            Some("full") => None,
            Some("short") => Some(false),
            Some("long") => Some(true),
            _ => return Err(FmbError::BadLayer("regtype".into())),
        },
        postwinsor: alpha("postwinsor")?,
    })
}

fn winsorize_panel_columns(panel: &DataPanel, alpha: f64) -> Result<DataPanel, FmbError> {
    if alpha == 0.0 {
        return Ok(panel.clone());
    }
    let mut out = panel.clone();
    for name in panel.column_names().to_vec() {
        let col = panel.column(&name)?;
        let dense: Vec<f64> = col.iter().filter_map(|c| *c).collect();
        if dense.len() < 3 {
            continue;
        }
        let wins = winsorize_fraction(&dense, alpha)?;
        let mut it = wins.into_iter();
        let new_col: Vec<Option<f64>> = col
            .iter()
            .map(|c| c.map(|_| it.next().expect("length preserved")))
            .collect();
        out = out.with_column(&name, new_col)?;
    }
    Ok(out)
}

/// Snapshot rows into the first-pass panel for each second-pass month:
/// the first first-pass row of that month (so windows end strictly before
/// the month). For monthly data this is the month's own row index.
fn month_snapshots(first_pass_dates: &[NaiveDate], months: &[NaiveDate]) -> Vec<usize> {
    months
        .iter()
        .map(|m| {
            let first_of_month = NaiveDate::from_ymd_opt(m.year(), m.month(), 1).unwrap();
            first_pass_dates.partition_point(|d| *d < first_of_month)
        })
        .collect()
}

fn winsorize_loadings_cross_section(
    by_snapshot: &mut [Vec<Option<Vec<f64>>>],
    n_factors: usize,
    alpha: f64,
) {
    if alpha == 0.0 {
        return;
    }
    for snapshot in by_snapshot.iter_mut() {
        for f in 1..=n_factors {
            let mut present: Vec<usize> = Vec::new();
            let mut vals: Vec<f64> = Vec::new();
            for (n, b) in snapshot.iter().enumerate() {
                if let Some(b) = b {
                    present.push(n);
                    vals.push(b[f]);
                }
            }
            if vals.len() < 3 {
                continue;
            }
            if let Ok(wins) = winsorize_fraction(&vals, alpha) {
                for (&n, w) in present.iter().zip(&wins) {
                    snapshot[n].as_mut().unwrap()[f] = *w;
                }
            }
        }
    }
}

/// Execute the full grid. First passes are shared across the paths that
/// agree on (assets, frequency, prewinsor, regtype); outcomes merge by path
/// index, independent of scheduling. Paths present in `resume` are taken
/// as-is and not executed.
pub fn run_fmb_study(
    spec: &StudySpec,
    data: &FmbData,
    resume: &std::collections::HashMap<u64, FmbPathResult>,
) -> Result<FmbStudyReport, FmbError> {
    spec.validate()?;
    let paths = enumerate_paths(spec)?;
    let months = data
        .set(&canonical_or_first(spec))?
        .monthly
        .dates()
        .to_vec();
    let n_factors = data.factor_names.len();

    // distinct first-pass jobs
    let mut jobs: Vec<FirstPassKey> = Vec::new();
    for path in &paths {
        if !path.feasible || resume.contains_key(&path.index) {
            continue;
        }
        let plan = plan_path(spec, path)?;
        let key = (plan.set_id.clone(), plan.daily, plan.prewinsor.to_bits(), plan.mode_long);
        if !jobs.contains(&key) {
            jobs.push(key);
        }
    }
    let job_results: HashMap<FirstPassKey, Result<FirstPassLoadings, String>> =
        jobs.par_iter()
            .map(|key| {
                let (set_id, daily, alpha_bits, mode_long) = key;
                let result = (|| -> Result<FirstPassLoadings, FmbError> {
                    let set = data.set(set_id)?;
                    let (panel, factors) = if *daily {
                        let p = set
                            .daily
                            .as_ref()
                            .ok_or_else(|| FmbError::NoDailyData(set_id.clone()))?;
                        let f = data
                            .factors_daily
                            .as_ref()
                            .ok_or_else(|| FmbError::NoDailyData("factors".into()))?;
                        (p, f)
                    } else {
                        (&set.monthly, &data.factors_monthly)
                    };
                    let winsorized = winsorize_panel_columns(panel, f64::from_bits(*alpha_bits))?;
                    let mode = match mode_long {
                        None => FirstPassMode::Full,
                        Some(long) => FirstPassMode::Rolling {
                            window: rolling_window(*daily, *long),
                        },
                    };
                    let snapshots = month_snapshots(panel.dates(), &months);
                    first_pass(&winsorized, factors, &data.factor_names, mode, &snapshots)
                })();
                (key.clone(), result.map_err(|e| e.to_string()))
            })
            .collect();

    let executed = std::sync::atomic::AtomicUsize::new(0);
    let per_path: Vec<(Vec<PathOutcome>, Vec<Vec<f64>>)> = paths
        .par_iter()
        .map(|path| {
            if let Some(cached) = resume.get(&path.index) {
                return (cached.outcomes.clone(), cached.series.clone());
            }
            if !path.feasible {
                return (
                    (0..n_factors)
                        .map(|_| PathOutcome::empty(path.index, PathStatus::Infeasible))
                        .collect(),
                    Vec::new(),
                );
            }
            executed.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            let run = || -> Result<(Vec<PathOutcome>, Vec<Vec<f64>>), String> {
                let plan = plan_path(spec, path).map_err(|e| e.to_string())?;
                let key = (plan.set_id.clone(), plan.daily, plan.prewinsor.to_bits(), plan.mode_long);
                let loadings = job_results[&key].as_ref().map_err(|e| e.clone())?;
                let mut by_month = loadings.by_snapshot.clone();
                winsorize_loadings_cross_section(&mut by_month, n_factors, plan.postwinsor);
                let set = data.set(&plan.set_id).map_err(|e| e.to_string())?;
                let points = second_pass(&set.monthly, &by_month).map_err(|e| e.to_string())?;
                let mut series = vec![vec![f64::NAN; months.len()]; n_factors];
                for (t, p) in points.iter().enumerate() {
                    if p.status.is_none() {
                        for (f, row) in series.iter_mut().enumerate() {
                            row[t] = p.gammas[f + 1];
                        }
                    }
                }
                let outcomes = (0..n_factors)
                    .map(|f| premium_outcome(path.index, &series[f]))
                    .collect();
                Ok((outcomes, series))
            };
            match run() {
                Ok(v) => v,
                Err(e) => (
                    (0..n_factors)
                        .map(|_| PathOutcome::empty(path.index, PathStatus::Failed(e.clone())))
                        .collect(),
                    Vec::new(),
                ),
            }
        })
        .collect();

    let mut outcome_columns: Vec<Vec<PathOutcome>> = vec![Vec::new(); n_factors];
    let mut premium_series = Vec::with_capacity(per_path.len());
    for (outcomes, series) in per_path {
        for (f, o) in outcomes.into_iter().enumerate() {
            outcome_columns[f].push(o);
        }
        premium_series.push(series);
    }
    let tally = StatusTally::count(&outcome_columns[0]);
    Ok(FmbStudyReport {
        spec: spec.clone(),
        factor_names: data.factor_names.clone(),
        outcomes: outcome_columns
            .into_iter()
            .map(|c| OutcomeSet::new(spec.clone(), c))
            .collect(),
        months,
        premium_series,
        tally,
        executed: executed.into_inner(),
    })
}

fn canonical_or_first(spec: &StudySpec) -> String {
    let li = spec.layer_index("assets").unwrap_or(0);
    spec.layers[li].options[0].id.clone()
}

/// Path outcome from one factor's premium series: the average premium, its
/// standard error, and the intercept-only fit diagnostics that feed the
/// weighting formulas.
fn premium_outcome(index: u64, series: &[f64]) -> PathOutcome {
    let vals: Vec<f64> = series.iter().copied().filter(|v| v.is_finite()).collect();
    let t_len = vals.len();
    if t_len < 12 {
        return PathOutcome::empty(
            index,
            PathStatus::Discarded(format!("{t_len} usable months")),
        );
    }
    let mean = stats::mean(&vals);
    let sd = stats::sd_sample(&vals);
    if sd <= mean.abs() * 1e-13 {
        return PathOutcome::empty(index, PathStatus::Failed("zero dispersion".into()));
    }
    let se = sd / (t_len as f64).sqrt();
    let rss: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum();
    PathOutcome {
        path_index: index,
        effect: mean,
        se,
        t_stat: mean / se,
        aic: t_len as f64 * (rss / t_len as f64).max(f64::MIN_POSITIVE).ln() + 4.0,
        n: t_len,
        rss,
        yvar: stats::variance_pop(&vals),
        se_iid: Some(se),
        se_hac: None,
        status: PathStatus::Ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datapanel::Frequency;
    use crate::synth;
    use approx::assert_relative_eq;

    fn monthly_factors(n: usize, seed: u64) -> DataPanel {
        synth::factor_panel(synth::monthly_dates(n), Frequency::Monthly, 0.02, seed)
    }

    #[test]
    fn first_pass_exact_on_noiseless_assets() {
        let factors = monthly_factors(120, 1);
        let (assets, planted) = synth::asset_panel_from_factors(&factors, 8, 0.0, 2);
        let names: Vec<String> = ["MKT", "SMB", "HML", "RMW", "CMA"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let fp = first_pass(&assets, &factors, &names, FirstPassMode::Full, &[120]).unwrap();
        for (n, b) in fp.by_snapshot[0].iter().enumerate() {
            let b = b.as_ref().unwrap();
            assert_relative_eq!(b[0], 0.0, epsilon = 1e-8);
            for (f, planted_b) in planted[n].iter().enumerate() {
                assert_relative_eq!(b[f + 1], planted_b, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn first_pass_recovers_planted_loadings_in_noise() {
        let factors = monthly_factors(600, 3);
        let (assets, planted) = synth::asset_panel_from_factors(&factors, 5, 0.01, 4);
        let names: Vec<String> = ["MKT", "SMB", "HML", "RMW", "CMA"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let fp = first_pass(&assets, &factors, &names, FirstPassMode::Full, &[600]).unwrap();
        // se of a loading is roughly noise_sd / (sd_f sqrt(T))
        let se = 0.01 / (0.02 * (600f64).sqrt());
        for (n, b) in fp.by_snapshot[0].iter().enumerate() {
            let b = b.as_ref().unwrap();
            for (f, planted_b) in planted[n].iter().enumerate() {
                assert!(
                    (b[f + 1] - planted_b).abs() < 4.0 * se,
                    "asset {n} factor {f}: {} vs {planted_b}",
                    b[f + 1]
                );
            }
        }
    }

    #[test]
    fn rolling_windows_have_no_lookahead() {
        let factors = monthly_factors(200, 5);
        let (assets, _) = synth::asset_panel_from_factors(&factors, 3, 0.02, 6);
        let names: Vec<String> = ["MKT", "SMB", "HML", "RMW", "CMA"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let snapshots: Vec<usize> = (0..200).collect();
        let mode = FirstPassMode::Rolling { window: 24 };
        let base = first_pass(&assets, &factors, &names, mode, &snapshots).unwrap();
        // perturb all returns from row 100 onward
        let mut cols = Vec::new();
        for name in assets.column_names() {
            let mut col = assets.column(name).unwrap().to_vec();
            for cell in col.iter_mut().skip(100) {
                *cell = cell.map(|v| v + 10.0);
            }
            cols.push((name.clone(), col));
        }
        let perturbed_panel =
            DataPanel::new(assets.dates().to_vec(), Frequency::Monthly, cols).unwrap();
        let perturbed = first_pass(&perturbed_panel, &factors, &names, mode, &snapshots).unwrap();
        // snapshots at or before row 100 use only rows < 100: unchanged
        for s in 0..=100 {
            assert_eq!(base.by_snapshot[s], perturbed.by_snapshot[s], "snapshot {s}");
        }
        assert_ne!(base.by_snapshot[130], perturbed.by_snapshot[130]);
        // early snapshots have no window
        assert!(base.by_snapshot[10].iter().all(|b| b.is_none()));
    }

    #[test]
    fn second_pass_recovers_planted_premium() {
        // zero-noise economy: exact recovery date by date
        let n_assets = 12;
        let dates = synth::monthly_dates(60);
        let loadings: Vec<Vec<f64>> = (0..n_assets)
            .map(|n| vec![0.0, 0.5 + 0.1 * n as f64])
            .collect();
        let gamma0 = 0.001;
        let gamma1 = 0.5;
        let cols: Vec<(String, Vec<Option<f64>>)> = (0..n_assets)
            .map(|n| {
                let col = (0..60)
                    .map(|_| Some(gamma0 + gamma1 * loadings[n][1]))
                    .collect();
                (format!("A{n}"), col)
            })
            .collect();
        let returns = DataPanel::new(dates, Frequency::Monthly, cols).unwrap();
        let by_date: Vec<Vec<Option<Vec<f64>>>> =
            (0..60).map(|_| loadings.iter().cloned().map(Some).collect()).collect();
        let points = second_pass(&returns, &by_date).unwrap();
        for p in &points {
            assert!(p.status.is_none());
            assert_relative_eq!(p.gammas[0], gamma0, epsilon = 1e-10);
            assert_relative_eq!(p.gammas[1], gamma1, epsilon = 1e-10);
        }
    }

    #[test]
    fn second_pass_flags_collinear_loadings() {
        let dates = synth::monthly_dates(5);
        let cols: Vec<(String, Vec<Option<f64>>)> = (0..6)
            .map(|n| (format!("A{n}"), vec![Some(0.01 * n as f64); 5]))
            .collect();
        let returns = DataPanel::new(dates, Frequency::Monthly, cols).unwrap();
        // all assets share one loading: collinear with the intercept
        let by_date: Vec<Vec<Option<Vec<f64>>>> =
            (0..5).map(|_| (0..6).map(|_| Some(vec![0.0, 1.0])).collect()).collect();
        let points = second_pass(&returns, &by_date).unwrap();
        for p in &points {
            assert!(p.status.is_some());
        }
    }

    fn small_bundle(n_months: usize, seed: u64) -> FmbData {
        let factors_monthly = monthly_factors(n_months, seed);
        let n_days = n_months * 21;
        let factors_daily = synth::factor_panel(
            synth::daily_dates(n_days),
            Frequency::Daily,
            0.008,
            seed + 1,
        );
        let mk_set = |id: &str, n_assets: usize, s: u64| {
            let (monthly, _) = synth::asset_panel_from_factors(&factors_monthly, n_assets, 0.01, s);
            let (daily, _) = synth::asset_panel_from_factors(&factors_daily, n_assets, 0.004, s + 7);
            FmbAssetSet { id: id.into(), monthly, daily: Some(daily) }
        };
        let asset_sets = vec![
            mk_set("bm25_ew", 25, seed + 10),
            mk_set("bm25_vw", 25, seed + 20),
            mk_set("ind12_ew", 12, seed + 30),
            mk_set("stocks", 40, seed + 40),
        ];
        FmbData {
            factor_names: ["MKT", "SMB", "HML", "RMW", "CMA"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            factors_monthly,
            factors_daily: Some(factors_daily),
            asset_sets,
        }
    }

    #[test]
    fn study_grid_counts() {
        let spec = fmb_study_spec(&canonical_asset_options());
        let paths = enumerate_paths(&spec).unwrap();
        assert_eq!(paths.len(), 486);
    }

    #[test]
    fn study_runs_on_synthetic_bundle() {
        let data = small_bundle(150, 11);
        let spec = fmb_study_spec(&["bm25_ew", "bm25_vw", "ind12_ew", "stocks"]);
        let report = run_fmb_study(&spec, &data).unwrap();
        assert_eq!(report.outcomes.len(), 5);
        let total = 4 * 2 * 3 * 3 * 3;
        assert_eq!(report.outcomes[0].outcomes.len(), total);
        assert!(
            report.tally.ok as f64 > 0.9 * total as f64,
            "ok: {:?}",
            report.tally
        );
        // post-pass winsorization at 0% on small cross-sections is identity:
        // same first pass, so premium series of w0 paths with k=floor(alpha N)=0
        // match their w1 twins on the 25-asset sets (floor(0.01*25) = 0)
        let spec_ref = &report.spec;
        let li = spec_ref.layer_index("postwinsor").unwrap();
        let ai = spec_ref.layer_index("assets").unwrap();
        let mut compared = 0;
        for (p, series) in report.premium_series.iter().enumerate() {
            let choices = spec_ref.decode_index(p as u64).unwrap();
            let set_id = &spec_ref.layers[ai].options[choices[ai]].id;
            if choices[li] == 0 && set_id.starts_with("bm25") {
                let mut twin = choices.clone();
                twin[li] = 1; // w1: floor(0.01 * 25) = 0 -> identity
                let twin_idx = spec_ref.encode_choices(&twin) as usize;
                if !series.is_empty() && !report.premium_series[twin_idx].is_empty() {
                    for (a, b) in series.iter().flatten().zip(
                        report.premium_series[twin_idx].iter().flatten(),
                    ) {
                        assert!(
                            (a.is_nan() && b.is_nan()) || a == b,
                            "series diverge: {a} vs {b}"
                        );
                    }
                    compared += 1;
                }
            }
        }
        assert!(compared > 0);
    }
}
