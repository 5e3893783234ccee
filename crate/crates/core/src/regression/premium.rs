//! Ten-layer equity-premium study executor.
//!
//! Layer stack (names fixed, option payloads from the study config):
//!
//! 1.  `frequency`  - payload `{"months": 1 | 3 | 12}`; monthly input is
//!     aggregated by summing the log premium within the period and sampling
//!     the predictor at the period's last month.
//! 2.  `missing`    - `drop` removes rows with an absent predictor or
//!     premium; `impute` forward-fills the predictor (rows before its first
//!     value are dropped).
//! 3.  `winsorize`  - payload `{"alpha": f}`; the predictor series is
//!     winsorized at `k = floor(alpha N)` per tail.
//! 4.  `form`       - `level` or `diff` (first differences of the predictor).
//! 5.  `predictor`  - option id names the predictor column.
//! 6.  `horizon`    - payload `{"periods": h}`; the dependent variable is the
//!     `h`-period forward sum of the (per-period) log premium, divided by
//!     `sqrt(h * months_per_period)` so the baseline scale stays monthly.
//! 7.  `start`      - `first` or `middle` (row `floor(N/2)` of the aligned
//!     sample), half-open window.
//! 8.  `end`        - `last` or `middle`; `start = middle` with
//!     `end = middle` is the infeasible combination.
//! 9.  `estimator`  - payload `{"model": "ols"|"augmented", "se": "iid"|"hac"}`
//!     with an optional `"bias_correction": true` for the augmented AR(1)
//!     coefficient. iid and HAC variants share point estimates.
//! 10. `post`       - `none`, or `adjusted`, an extension hook that currently
//!     leaves outcomes untouched.
//!
//! The predictor is scaled by its standard deviation on the estimation
//! window before the fit, so coefficients are comparable across predictors.
//! Paths with fewer than 30 usable observations are discarded.

use super::{augmented_predictive, default_hac_lag, design_with_intercept, ols_with_hac};
use crate::datapanel::{winsorize_fraction, DataPanel, PanelError};
use crate::outcome::{OutcomeSet, PathOutcome, PathStatus, StatusTally};
use crate::pathgrid::{enumerate_paths, Constraint, GridError, LayerSpec, OptionSpec, StudySpec};
use crate::stats;
use chrono::{Datelike, NaiveDate};
use nalgebra::DVector;
use rayon::prelude::*;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PremiumError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error("study config is missing required column `{0}`")]
    MissingColumn(String),
    #[error("study config layer `{0}` is missing or malformed")]
    BadLayer(String),
}

/// Monthly inputs of the study: the log equity premium and the predictor
/// columns, on one shared monthly date index.
#[derive(Debug, Clone)]
pub struct PremiumData {
    pub dates: Vec<NaiveDate>,
    pub premium: Vec<Option<f64>>,
    pub predictors: Vec<(String, Vec<Option<f64>>)>,
}

impl PremiumData {
    pub fn predictor(&self, name: &str) -> Option<&[Option<f64>]> {
        self.predictors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_slice())
    }

    /// Derive the study inputs from a macro predictor panel.
    ///
    /// Derived columns: `payout = ln D12 - ln E12`, `dfy = BAA - AAA`,
    /// `dfr = corpr - ltr`; `bm` (accepted as `b/m` or `bm`), `ntis`, `svar`
    /// pass through. The monthly log premium is
    /// `ln(1 + CRSP_SPvw) - ln(1 + Rfree)` when a `CRSP_SPvw` column exists,
    /// else `ln((Index_t + D12_t/12) / Index_{t-1}) - ln(1 + Rfree_t)`.
    pub fn from_macro_panel(panel: &DataPanel) -> Result<Self, PremiumError> {
        let col = |name: &str| -> Result<&[Option<f64>], PremiumError> {
            panel
                .column(name)
                .map_err(|_| PremiumError::MissingColumn(name.to_string()))
        };
        let n = panel.len();
        let d12 = col("D12")?;
        let e12 = col("E12")?;
        let aaa = col("AAA")?;
        let baa = col("BAA")?;
        let ltr = col("ltr")?;
        let corpr = col("corpr")?;
        let rfree = col("Rfree")?;
        let bm = panel.column("bm").or_else(|_| panel.column("b/m"));
        let bm = bm.map_err(|_| PremiumError::MissingColumn("b/m".into()))?;
        let ntis = col("ntis")?;
        let svar = col("svar")?;

        let zip2 = |a: &[Option<f64>], b: &[Option<f64>], f: fn(f64, f64) -> f64| {
            a.iter()
                .zip(b)
                .map(|(x, y)| match (x, y) {
                    (Some(x), Some(y)) => Some(f(*x, *y)),
                    _ => None,
                })
                .collect::<Vec<_>>()
        };
        let payout = zip2(d12, e12, |d, e| d.ln() - e.ln());
        let dfy = zip2(baa, aaa, |b, a| b - a);
        let dfr = zip2(corpr, ltr, |c, l| c - l);

        let premium: Vec<Option<f64>> = if let Ok(spvw) = panel.column("CRSP_SPvw") {
            spvw.iter()
                .zip(rfree)
                .map(|(r, rf)| match (r, rf) {
                    (Some(r), Some(rf)) => Some((1.0 + r).ln() - (1.0 + rf).ln()),
                    _ => None,
                })
                .collect()
        } else {
            let index = col("Index")?;
            (0..n)
                .map(|t| {
                    if t == 0 {
                        return None;
                    }
                    match (index[t], index[t - 1], d12[t], rfree[t]) {
                        (Some(p1), Some(p0), Some(d), Some(rf)) => {
                            Some(((p1 + d / 12.0) / p0).ln() - (1.0 + rf).ln())
                        }
                        _ => None,
                    }
                })
                .collect()
        };

        Ok(PremiumData {
            dates: panel.dates().to_vec(),
            premium,
            predictors: vec![
                ("payout".into(), payout),
                ("bm".into(), bm.to_vec()),
                ("svar".into(), svar.to_vec()),
                ("dfr".into(), dfr.to_vec()),
                ("dfy".into(), dfy.to_vec()),
                ("ntis".into(), ntis.to_vec()),
            ],
        })
    }
}

/// The canonical ten-layer grid (27,648 paths nominal, 20,736 feasible under
/// the start/end constraint).
pub fn premium_study_spec() -> StudySpec {
    use serde_json::json;
    let layers = vec![
        LayerSpec {
            name: "frequency".into(),
            options: vec![
                OptionSpec::with_payload("monthly", json!({"months": 1})),
                OptionSpec::with_payload("quarterly", json!({"months": 3})),
                OptionSpec::with_payload("annual", json!({"months": 12})),
            ],
        },
        LayerSpec::new("missing", &["drop", "impute"]),
        LayerSpec {
            name: "winsorize".into(),
            options: vec![
                OptionSpec::with_payload("w0", json!({"alpha": 0.0})),
                OptionSpec::with_payload("w1", json!({"alpha": 0.01})),
                OptionSpec::with_payload("w2", json!({"alpha": 0.02})),
                OptionSpec::with_payload("w3", json!({"alpha": 0.03})),
            ],
        },
        LayerSpec::new("form", &["level", "diff"]),
        LayerSpec::new("predictor", &["payout", "bm", "svar", "dfr", "dfy", "ntis"]),
        LayerSpec {
            name: "horizon".into(),
            options: vec![
                OptionSpec::with_payload("h1", json!({"periods": 1})),
                OptionSpec::with_payload("h3", json!({"periods": 3})),
                OptionSpec::with_payload("h12", json!({"periods": 12})),
            ],
        },
        LayerSpec::new("start", &["first", "middle"]),
        LayerSpec::new("end", &["last", "middle"]),
        LayerSpec {
            name: "estimator".into(),
            options: vec![
                OptionSpec::with_payload("ols_iid", json!({"model": "ols", "se": "iid"})),
                OptionSpec::with_payload("ols_hac", json!({"model": "ols", "se": "hac"})),
                OptionSpec::with_payload("aug_iid", json!({"model": "augmented", "se": "iid"})),
                OptionSpec::with_payload("aug_hac", json!({"model": "augmented", "se": "hac"})),
            ],
        },
        LayerSpec::new("post", &["none", "adjusted"]),
    ];
    StudySpec {
        layers,
        constraints: vec![Constraint {
            name: "degenerate-window".into(),
            all_of: vec![("start".into(), "middle".into()), ("end".into(), "middle".into())],
        }],
        layer_weights: None,
    }
}

/// Executor knobs. `min_observations` implements the discard rule;
/// `adjusted_hook` is the post-treatment extension point applied by the
/// `adjusted` option of the `post` layer; paths present in `resume` are
/// taken as-is and not executed.
#[derive(Clone)]
pub struct PremiumOptions {
    pub min_observations: usize,
    pub hac_lag: Option<usize>,
    pub adjusted_hook: Option<fn(&mut PathOutcome)>,
    pub resume: HashMap<u64, PathOutcome>,
}

impl Default for PremiumOptions {
    fn default() -> Self {
        PremiumOptions {
            min_observations: 30,
            hac_lag: None,
            adjusted_hook: None,
            resume: HashMap::new(),
        }
    }
}

#[derive(Debug)]
pub struct PremiumStudyReport {
    pub outcomes: OutcomeSet,
    pub tally: StatusTally,
    /// Paths actually executed (not served from `resume`).
    pub executed: usize,
}

/// A prepared (predictor, premium-per-period) series after the frequency,
/// missing-data, winsorization, and form layers; shared by every path that
/// agrees on those four layers plus the predictor.
struct PreparedSeries {
    x: Vec<f64>,
    y: Vec<f64>,
}

type OptionalSeries = Vec<Option<f64>>;

fn aggregate(
    data: &PremiumData,
    months: u32,
    predictor: &str,
) -> Result<(OptionalSeries, OptionalSeries), PremiumError> {
    let xcol = data
        .predictor(predictor)
        .ok_or_else(|| PremiumError::MissingColumn(predictor.to_string()))?;
    if months == 1 {
        return Ok((xcol.to_vec(), data.premium.clone()));
    }
    // group calendar months into periods; keep only complete groups
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut i = 0usize;
    while i < data.dates.len() {
        let d = data.dates[i];
        let group = period_key(d, months);
        let mut j = i;
        while j < data.dates.len() && period_key(data.dates[j], months) == group {
            j += 1;
        }
        if (j - i) as u32 == months {
            let mut ysum = Some(0.0);
            for t in i..j {
                ysum = match (ysum, data.premium[t]) {
                    (Some(acc), Some(v)) => Some(acc + v),
                    _ => None,
                };
            }
            ys.push(ysum);
            xs.push(xcol[j - 1]); // period-end sample
        }
        i = j;
    }
    Ok((xs, ys))
}

fn period_key(d: NaiveDate, months: u32) -> (i32, u32) {
    (d.year(), (d.month0()) / months)
}

fn prepare(
    data: &PremiumData,
    months: u32,
    impute: bool,
    alpha: f64,
    diff: bool,
    predictor: &str,
) -> Result<PreparedSeries, PremiumError> {
    let (mut x, y) = aggregate(data, months, predictor)?;
    if impute {
        // forward-fill after the first present value
        let mut last = None;
        for cell in x.iter_mut() {
            match cell {
                Some(v) => last = Some(*v),
                None => *cell = last,
            }
        }
    }
    // drop rows where either side is absent (after imputation this trims the
    // leading segment)
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (xv, yv) in x.iter().zip(&y) {
        if let (Some(xv), Some(yv)) = (xv, yv) {
            xs.push(*xv);
            ys.push(*yv);
        }
    }
    let mut xs = winsorize_fraction(&xs, alpha)?;
    if diff {
        if xs.len() < 2 {
            return Ok(PreparedSeries { x: Vec::new(), y: Vec::new() });
        }
        xs = xs.windows(2).map(|w| w[1] - w[0]).collect();
        ys.remove(0);
    }
    Ok(PreparedSeries { x: xs, y: ys })
}

struct PathPlan {
    months: u32,
    impute: bool,
    alpha: f64,
    diff: bool,
    predictor: String,
    horizon: u32,
    start_middle: bool,
    end_middle: bool,
    augmented: bool,
    use_hac_se: bool,
    bias_correction: bool,
    adjusted: bool,
}

fn payload_u64(spec: &StudySpec, path: &crate::pathgrid::PathAssignment, layer: &str, key: &str) -> Option<u64> {
    spec.payload(path, layer).get(key)?.as_u64()
}

fn payload_f64(spec: &StudySpec, path: &crate::pathgrid::PathAssignment, layer: &str, key: &str) -> Option<f64> {
    spec.payload(path, layer).get(key)?.as_f64()
}

fn plan_path(
    spec: &StudySpec,
    path: &crate::pathgrid::PathAssignment,
) -> Result<PathPlan, PremiumError> {
    let id = |layer: &str| -> Result<&str, PremiumError> {
        let li = spec
            .layer_index(layer)
            .ok_or_else(|| PremiumError::BadLayer(layer.to_string()))?;
        Ok(spec.layers[li].options[path.choices[li]].id.as_str())
    };
    let est = spec.payload(path, "estimator");
    Ok(PathPlan {
        months: payload_u64(spec, path, "frequency", "months")
            .ok_or_else(|| PremiumError::BadLayer("frequency".into()))? as u32,
        impute: id("missing")? == "impute",
        alpha: payload_f64(spec, path, "winsorize", "alpha")
            .ok_or_else(|| PremiumError::BadLayer("winsorize".into()))?,
        diff: id("form")? == "diff",
        predictor: id("predictor")?.to_string(),
        horizon: payload_u64(spec, path, "horizon", "periods")
            .ok_or_else(|| PremiumError::BadLayer("horizon".into()))? as u32,
        start_middle: id("start")? == "middle",
        end_middle: id("end")? == "middle",
        augmented: est.get("model").and_then(|v| v.as_str()) == Some("augmented"),
        use_hac_se: est.get("se").and_then(|v| v.as_str()) == Some("hac"),
        bias_correction: est
            .get("bias_correction")
            .and_then(|v| v.as_bool())
            .unwrap_or(false),
        adjusted: id("post")? == "adjusted",
    })
}

/// Run every feasible path of the grid over the prepared data; infeasible
/// paths are flagged, not executed. Deterministic: outcomes are merged by
/// path index regardless of scheduling.
pub fn run_premium_study(
    spec: &StudySpec,
    data: &PremiumData,
    opts: &PremiumOptions,
) -> Result<PremiumStudyReport, PremiumError> {
    spec.validate()?;
    let paths = enumerate_paths(spec)?;

    // Prepare each (frequency, missing, winsorize, form, predictor) combo once.
    let mut prepared: HashMap<(u32, bool, u64, bool, String), PreparedSeries> = HashMap::new();
    for path in &paths {
        if !path.feasible || opts.resume.contains_key(&path.index) {
            continue;
        }
        let plan = plan_path(spec, path)?;
        let key = (
            plan.months,
            plan.impute,
            plan.alpha.to_bits(),
            plan.diff,
            plan.predictor.clone(),
        );
        if let std::collections::hash_map::Entry::Vacant(slot) = prepared.entry(key) {
            slot.insert(prepare(
                data,
                plan.months,
                plan.impute,
                plan.alpha,
                plan.diff,
                &plan.predictor,
            )?);
        }
    }

    let executed = std::sync::atomic::AtomicUsize::new(0);
    let outcomes: Vec<PathOutcome> = paths
        .par_iter()
        .map(|path| {
            if let Some(cached) = opts.resume.get(&path.index) {
                return cached.clone();
            }
            if !path.feasible {
                return PathOutcome::empty(path.index, PathStatus::Infeasible);
            }
            executed.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            let plan = match plan_path(spec, path) {
                Ok(p) => p,
                Err(e) => return PathOutcome::empty(path.index, PathStatus::Failed(e.to_string())),
            };
            let key = (
                plan.months,
                plan.impute,
                plan.alpha.to_bits(),
                plan.diff,
                plan.predictor.clone(),
            );
            let series = &prepared[&key];
            let mut outcome = execute_path(series, &plan, opts, path.index);
            if plan.adjusted {
                if let Some(hook) = opts.adjusted_hook {
                    hook(&mut outcome);
                }
            }
            outcome
        })
        .collect();

    let tally = StatusTally::count(&outcomes);
    Ok(PremiumStudyReport {
        outcomes: OutcomeSet::new(spec.clone(), outcomes),
        tally,
        executed: executed.into_inner(),
    })
}

fn execute_path(
    series: &PreparedSeries,
    plan: &PathPlan,
    opts: &PremiumOptions,
    index: u64,
) -> PathOutcome {
    let h = plan.horizon as usize;
    let n_total = series.y.len();
    if n_total <= h + 1 {
        return PathOutcome::empty(index, PathStatus::Discarded("sample shorter than horizon".into()));
    }
    let n_pairs = n_total - h;
    let scale = (plan.horizon as f64 * plan.months as f64).sqrt();
    // forward h-period premium aligned with x_t
    let mut cum = vec![0.0; n_total + 1];
    for (t, v) in series.y.iter().enumerate() {
        cum[t + 1] = cum[t] + v;
    }
    let forward: Vec<f64> = (0..n_pairs)
        .map(|t| (cum[t + 1 + h] - cum[t + 1]) / scale)
        .collect();

    let middle = n_pairs / 2;
    let w_start = if plan.start_middle { middle } else { 0 };
    let w_end = if plan.end_middle { middle } else { n_pairs };
    if w_start >= w_end {
        return PathOutcome::empty(index, PathStatus::Infeasible);
    }
    let n = w_end - w_start;
    if n < opts.min_observations {
        return PathOutcome::empty(
            index,
            PathStatus::Discarded(format!("n={n}<{}", opts.min_observations)),
        );
    }
    let ys: Vec<f64> = forward[w_start..w_end].to_vec();
    // predictor scaled by its standard deviation on the estimation window
    let x_win = &series.x[w_start..w_end];
    let sd = stats::sd_sample(x_win);
    if sd == 0.0 {
        return PathOutcome::empty(index, PathStatus::Failed("degenerate predictor".into()));
    }
    let result = if plan.augmented {
        // one predictor point past the window end feeds the last innovation
        let ext_end = (w_end + 1).min(series.x.len());
        let xs_ext: Vec<f64> = series.x[w_start..ext_end].iter().map(|v| v / sd).collect();
        let usable = ys.len().min(xs_ext.len() - 1);
        augmented_predictive(&xs_ext, &ys[..usable], plan.bias_correction, opts.hac_lag, true)
            .map(|f| f.result)
    } else {
        let xs: Vec<f64> = x_win.iter().map(|v| v / sd).collect();
        ols_with_hac(
            &design_with_intercept(&xs),
            &DVector::from_vec(ys),
            opts.hac_lag.or(Some(default_hac_lag(n))),
        )
    };
    match result {
        Ok(fit) => {
            let b = fit.coefficients[1];
            let se_iid = fit.se_iid[1];
            let se_hac = fit.se_hac.as_ref().map(|s| s[1]);
            let se = if plan.use_hac_se {
                se_hac.unwrap_or(se_iid)
            } else {
                se_iid
            };
            PathOutcome {
                path_index: index,
                effect: b,
                se,
                t_stat: if se > 0.0 { b / se } else { 0.0 },
                aic: fit.aic,
                n: fit.n,
                rss: fit.rss,
                yvar: fit.yvar,
                se_iid: Some(se_iid),
                se_hac,
                status: PathStatus::Ok,
            }
        }
        Err(e) => PathOutcome::empty(index, PathStatus::Failed(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn canonical_grid_counts() {
        let spec = premium_study_spec();
        let paths = enumerate_paths(&spec).unwrap();
        assert_eq!(paths.len(), 27_648);
        assert_eq!(paths.iter().filter(|p| p.feasible).count(), 20_736);
    }

    #[test]
    fn estimator_layer_shares_coefficients() {
        let data = synth::premium_data(600, 0.3, 99);
        let spec = premium_study_spec();
        let report = run_premium_study(&spec, &data, &PremiumOptions::default()).unwrap();
        let set = &report.outcomes;
        // iid and hac options differ only in se/t, never in the coefficient
        let iid = set.through("estimator", "ols_iid").unwrap();
        let hac = set.through("estimator", "ols_hac").unwrap();
        assert_eq!(iid.len(), hac.len());
        let mut checked = 0;
        for (a, b) in iid.iter().zip(&hac) {
            if a.status.is_ok() && b.status.is_ok() {
                assert_eq!(a.effect, b.effect, "paths {} vs {}", a.path_index, b.path_index);
                assert_eq!(a.n, b.n);
                checked += 1;
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn discards_short_samples() {
        let data = synth::premium_data(90, 0.0, 7);
        let spec = premium_study_spec();
        let report = run_premium_study(&spec, &data, &PremiumOptions::default()).unwrap();
        // annual aggregation of 90 months leaves 7 periods: far below 30
        assert!(report.tally.discarded > 0);
        assert_eq!(report.tally.infeasible, 6_912);
    }
}
