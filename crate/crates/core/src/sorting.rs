//! Characteristic-sorted long-short portfolios and the seven-layer anomalies
//! study executor.
//!
//! Stocks are ranked by a characteristic each formation month; the long leg
//! takes the upper `1-q` quantile, the short leg the lower `q`, and the
//! monthly output is the long-minus-short return. Four weighting schemes:
//! equal (EW), value (VW, proportional to `mvel1`), inverse volatility (IVW,
//! proportional to `1/retvol`), and characteristic (CW, proportional to the
//! centered rank over the whole cross-section, no threshold). Each leg's
//! weights sum to one at every formation date.
//!
//! The study grid per characteristic: cleaning (2) x holding (3) x
//! window (6 feasible start/end pairs) x threshold (4) x weighting (4)
//! = 576 paths. The default path is imputation, one-month holding, the full
//! window, `q = 0.2`, equal weights; its 14 single-deviation neighbors form
//! the robustness-check set.

use crate::datapanel::CharacteristicsPanel;
use crate::outcome::{OutcomeSet, PathOutcome, PathStatus, StatusTally};
use crate::pathgrid::{enumerate_paths, GridError, LayerSpec, OptionSpec, StudySpec};
use crate::stats;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SortError {
    #[error("unknown characteristic `{0}`")]
    UnknownCharacteristic(String),
    #[error("quantile threshold {0} outside (0, 0.5)")]
    BadThreshold(f64),
    #[error("fewer than {min} eligible stocks at formation date index {date}: {got}")]
    ThinCrossSection { date: usize, min: usize, got: usize },
    #[error("empty {0} leg")]
    EmptyLeg(&'static str),
    #[error("no valid returns for the {0} leg in holding month {1}")]
    DeadLeg(&'static str, usize),
    #[error("window provides {got} monthly returns, need at least {need}")]
    WindowTooShort { got: usize, need: usize },
    #[error("return series has zero dispersion")]
    ZeroDispersion,
    #[error("study layer `{0}` missing or malformed")]
    BadLayer(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Ew,
    Vw,
    Ivw,
    Cw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cleaning {
    Impute,
    Remove,
}

/// One sort configuration (a path of the anomalies grid, resolved).
#[derive(Debug, Clone)]
pub struct SortConfig {
    pub characteristic: String,
    pub quantile: f64,
    pub holding_months: usize,
    pub weighting: Weighting,
    pub cleaning: Cleaning,
    /// Half-open month-index window into the panel.
    pub window: (usize, usize),
    /// Minimum eligible stocks per formation date.
    pub min_stocks: usize,
}

/// Long and short weight vectors at one formation date.
#[derive(Debug, Clone)]
pub struct PortfolioWeights {
    /// `(stock index, weight)`, weights summing to one.
    pub long: Vec<(usize, f64)>,
    pub short: Vec<(usize, f64)>,
}

/// Monthly long-minus-short series with per-leg constituent counts.
#[derive(Debug, Clone)]
pub struct LongShortSeries {
    pub returns: Vec<f64>,
    pub leg_counts: Vec<(usize, usize)>,
}

/// Stocks eligible at a formation date, ascending by (value, stock index).
fn eligible_ranked(
    panel: &CharacteristicsPanel,
    char_idx: usize,
    weighting: Weighting,
    date_idx: usize,
) -> Vec<usize> {
    let need = match weighting {
        Weighting::Vw => panel.characteristic_index("mvel1"),
        Weighting::Ivw => panel.characteristic_index("retvol"),
        _ => None,
    };
    let mut idx: Vec<usize> = (0..panel.n_stocks())
        .filter(|&s| {
            let v = panel.value(char_idx, date_idx, s);
            if v.is_nan() {
                return false;
            }
            match need {
                Some(w) => {
                    let wv = panel.value(w, date_idx, s);
                    wv.is_finite() && wv > 0.0
                }
                None => true,
            }
        })
        .collect();
    idx.sort_by(|&a, &b| {
        panel
            .value(char_idx, date_idx, a)
            .partial_cmp(&panel.value(char_idx, date_idx, b))
            .unwrap()
            .then(a.cmp(&b))
    });
    idx
}

fn normalize(leg: &mut [(usize, f64)]) -> Result<(), SortError> {
    let total: f64 = leg.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(SortError::EmptyLeg("weightless"));
    }
    for (_, w) in leg.iter_mut() {
        *w /= total;
    }
    Ok(())
}

/// Form the long/short weight vectors at one formation date.
///
/// Ranks are 1-based over the eligible stocks (ties broken by stock order);
/// a stock is long iff `rank/N > 1-q` and short iff `rank/N <= q`. CW
/// ignores the threshold: every eligible stock joins the leg matching the
/// sign of its centered rank with weight proportional to its magnitude.
pub fn form_portfolio(
    panel: &CharacteristicsPanel,
    char_idx: usize,
    config: &SortConfig,
    date_idx: usize,
) -> Result<PortfolioWeights, SortError> {
    if !(config.quantile > 0.0 && config.quantile < 0.5) {
        return Err(SortError::BadThreshold(config.quantile));
    }
    let ranked = eligible_ranked(panel, char_idx, config.weighting, date_idx);
    let n = ranked.len();
    if n < config.min_stocks {
        return Err(SortError::ThinCrossSection {
            date: date_idx,
            min: config.min_stocks,
            got: n,
        });
    }
    let mut long: Vec<(usize, f64)> = Vec::new();
    let mut short: Vec<(usize, f64)> = Vec::new();
    match config.weighting {
        Weighting::Cw => {
            let center = (n as f64 + 1.0) / 2.0;
            for (pos, &s) in ranked.iter().enumerate() {
                let z = (pos + 1) as f64 - center;
                if z > 0.0 {
                    long.push((s, z));
                } else if z < 0.0 {
                    short.push((s, -z));
                }
            }
        }
        _ => {
            // tail size floor(Nq): "short iff rank/N <= q", with the long leg
            // its mirror image so negating the characteristic swaps the legs
            // exactly (the two rules agree whenever Nq is an integer)
            let tail = (n as f64 * config.quantile).floor() as usize;
            if tail == 0 {
                return Err(SortError::EmptyLeg("short"));
            }
            for (pos, &s) in ranked.iter().enumerate() {
                let rank = pos + 1;
                let leg = if rank > n - tail {
                    &mut long
                } else if rank <= tail {
                    &mut short
                } else {
                    continue;
                };
                let w = match config.weighting {
                    Weighting::Ew => 1.0,
                    Weighting::Vw => {
                        let m = panel.characteristic_index("mvel1").unwrap();
                        panel.value(m, date_idx, s)
                    }
                    Weighting::Ivw => {
                        let r = panel.characteristic_index("retvol").unwrap();
                        1.0 / panel.value(r, date_idx, s)
                    }
                    Weighting::Cw => unreachable!(),
                };
                leg.push((s, w));
            }
        }
    }
    if long.is_empty() {
        return Err(SortError::EmptyLeg("long"));
    }
    if short.is_empty() {
        return Err(SortError::EmptyLeg("short"));
    }
    normalize(&mut long)?;
    normalize(&mut short)?;
    Ok(PortfolioWeights { long, short })
}

fn leg_return(
    panel: &CharacteristicsPanel,
    leg: &[(usize, f64)],
    month: usize,
    name: &'static str,
) -> Result<f64, SortError> {
    let mut total_w = 0.0;
    let mut acc = 0.0;
    for &(s, w) in leg {
        let r = panel.ret(month, s);
        if r.is_finite() {
            acc += w * r;
            total_w += w;
        }
    }
    if total_w <= 0.0 {
        return Err(SortError::DeadLeg(name, month));
    }
    Ok(acc / total_w)
}

/// Monthly long-short returns over the window: portfolios re-form every
/// `holding_months` (a single cohort held to expiry, weights fixed at
/// formation), and each holding month contributes
/// `long return - short return`. Stocks with a missing return in a holding
/// month drop out of their leg for that month with the leg re-normalized.
pub fn longshort_returns(
    panel: &CharacteristicsPanel,
    config: &SortConfig,
) -> Result<LongShortSeries, SortError> {
    let char_idx = panel
        .characteristic_index(&config.characteristic)
        .ok_or_else(|| SortError::UnknownCharacteristic(config.characteristic.clone()))?;
    let (start, end) = config.window;
    let mut returns = Vec::new();
    let mut leg_counts = Vec::new();
    let mut t = start;
    while t + 1 < end {
        let weights = form_portfolio(panel, char_idx, config, t)?;
        let expiry = (t + config.holding_months).min(end - 1);
        for m in t + 1..=expiry {
            let long = leg_return(panel, &weights.long, m, "long")?;
            let short = leg_return(panel, &weights.short, m, "short")?;
            returns.push(long - short);
            leg_counts.push((weights.long.len(), weights.short.len()));
        }
        t += config.holding_months;
    }
    if returns.len() < 24 {
        return Err(SortError::WindowTooShort { got: returns.len(), need: 24 });
    }
    Ok(LongShortSeries { returns, leg_counts })
}

/// `sqrt(T) * mean / sd` with the sample (divide-by-(T-1)) deviation; the
/// scaled Sharpe ratio of the series.
pub fn sharpe_tstat(returns: &[f64]) -> Result<f64, SortError> {
    if returns.len() < 24 {
        return Err(SortError::WindowTooShort { got: returns.len(), need: 24 });
    }
    let mean = stats::mean(returns);
    let sd = stats::sd_sample(returns);
    // rounding residue on a constant series is not dispersion
    if sd <= mean.abs() * 1e-13 {
        return Err(SortError::ZeroDispersion);
    }
    Ok((returns.len() as f64).sqrt() * mean / sd)
}

/// The five-layer grid behind each characteristic: 576 paths.
pub fn anomalies_study_spec() -> StudySpec {
    use serde_json::json;
    let window = |id: &str, a: f64, b: f64| {
        OptionSpec::with_payload(id, json!({"start_frac": a, "end_frac": b}))
    };
    StudySpec::new(vec![
        LayerSpec::new("cleaning", &["impute", "remove"]),
        LayerSpec {
            name: "holding".into(),
            options: vec![
                OptionSpec::with_payload("h1", json!({"months": 1})),
                OptionSpec::with_payload("h2", json!({"months": 2})),
                OptionSpec::with_payload("h3", json!({"months": 3})),
            ],
        },
        LayerSpec {
            name: "window".into(),
            options: vec![
                window("min_max", 0.0, 1.0),
                window("min_t1", 0.0, 1.0 / 3.0),
                window("min_t2", 0.0, 2.0 / 3.0),
                window("t1_t2", 1.0 / 3.0, 2.0 / 3.0),
                window("t1_max", 1.0 / 3.0, 1.0),
                window("t2_max", 2.0 / 3.0, 1.0),
            ],
        },
        LayerSpec {
            name: "threshold".into(),
            options: vec![
                OptionSpec::with_payload("q20", json!({"q": 0.2})),
                OptionSpec::with_payload("q10", json!({"q": 0.1})),
                OptionSpec::with_payload("q25", json!({"q": 0.25})),
                OptionSpec::with_payload("q30", json!({"q": 0.3})),
            ],
        },
        LayerSpec::new("weighting", &["ew", "vw", "ivw", "cw"]),
    ])
}

/// Path index of the default path (first option of every layer: imputation,
/// one-month holding, full window, `q = 0.2`, equal weights).
pub fn default_path_index(spec: &StudySpec) -> u64 {
    spec.encode_choices(&vec![0; spec.layer_count()])
}

/// Indices of the robustness-check paths: exactly one deviation from the
/// default path (14 for the canonical grid).
pub fn robustness_path_indices(spec: &StudySpec) -> Vec<u64> {
    let base = vec![0usize; spec.layer_count()];
    let mut out = Vec::new();
    for (j, layer) in spec.layers.iter().enumerate() {
        for o in 1..layer.size() {
            let mut choices = base.clone();
            choices[j] = o;
            out.push(spec.encode_choices(&choices));
        }
    }
    out.sort_unstable();
    out
}

/// Everything one characteristic's 576 paths produce.
#[derive(Debug)]
pub struct AnomalyOutcome {
    pub characteristic: String,
    pub outcomes: OutcomeSet,
    /// Long-short return series of the default path (kept for the bootstrap
    /// side of multiple testing), when that path succeeded.
    pub default_returns: Option<Vec<f64>>,
    pub tally: StatusTally,
}

/// Study-level summary row per characteristic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnomalySummary {
    pub characteristic: String,
    pub median_t: f64,
    pub default_t: Option<f64>,
    /// min/max of the t-statistic over the robustness-check paths.
    pub robustness_interval: Option<(f64, f64)>,
    /// min/max of the t-statistic over all ok paths.
    pub full_interval: Option<(f64, f64)>,
    /// +1 / -1 flip making the median t positive.
    pub sign: f64,
    pub ok_paths: usize,
}

fn resolve_config(
    spec: &StudySpec,
    path: &crate::pathgrid::PathAssignment,
    characteristic: &str,
    n_dates: usize,
    min_stocks: usize,
) -> Result<SortConfig, SortError> {
    let id = |layer: &str| -> Result<&str, SortError> {
        let li = spec
            .layer_index(layer)
            .ok_or_else(|| SortError::BadLayer(layer.to_string()))?;
        Ok(spec.layers[li].options[path.choices[li]].id.as_str())
    };
    let payload_f64 = |layer: &str, key: &str| -> Result<f64, SortError> {
        spec.payload(path, layer)
            .get(key)
            .and_then(|v| v.as_f64())
            .ok_or_else(|| SortError::BadLayer(layer.to_string()))
    };
    let start_frac = payload_f64("window", "start_frac")?;
    let end_frac = payload_f64("window", "end_frac")?;
    let start = (start_frac * n_dates as f64).floor() as usize;
    let end = (end_frac * n_dates as f64).floor() as usize;
    Ok(SortConfig {
        characteristic: characteristic.to_string(),
        quantile: payload_f64("threshold", "q")?,
        holding_months: payload_f64("holding", "months")? as usize,
        weighting: match id("weighting")? {
            "ew" => Weighting::Ew,
            "vw" => Weighting::Vw,
            "ivw" => Weighting::Ivw,
            "cw" => Weighting::Cw,
            other => return Err(SortError::BadLayer(format!("weighting option {other}"))),
        },
        cleaning: match id("cleaning")? {
            "impute" => Cleaning::Impute,
            "remove" => Cleaning::Remove,
            other => return Err(SortError::BadLayer(format!("cleaning option {other}"))),
        },
        window: (start, end),
        min_stocks,
    })
}

/// Run the 576 paths of one characteristic. Per-path failures are recorded
/// as statuses; the run always completes.
pub fn run_anomaly_paths(
    spec: &StudySpec,
    panel: &CharacteristicsPanel,
    characteristic: &str,
    min_stocks: usize,
) -> Result<AnomalyOutcome, SortError> {
    spec.validate()?;
    let char_idx = panel
        .characteristic_index(characteristic)
        .ok_or_else(|| SortError::UnknownCharacteristic(characteristic.to_string()))?;
    let imputed = panel.impute_characteristic_forward(char_idx);
    let paths = enumerate_paths(spec)?;
    let n_dates = panel.n_dates();
    let outcomes: Vec<PathOutcome> = paths
        .par_iter()
        .map(|path| {
            if !path.feasible {
                return PathOutcome::empty(path.index, PathStatus::Infeasible);
            }
            let config =
                match resolve_config(spec, path, characteristic, n_dates, min_stocks) {
                    Ok(c) => c,
                    Err(e) => {
                        return PathOutcome::empty(path.index, PathStatus::Failed(e.to_string()))
                    }
                };
            let source = match config.cleaning {
                Cleaning::Impute => &imputed,
                Cleaning::Remove => panel,
            };
            match longshort_returns(source, &config) {
                Ok(series) => outcome_from_series(path.index, &series.returns),
                Err(e) => PathOutcome::empty(path.index, PathStatus::Failed(e.to_string())),
            }
        })
        .collect();
    let tally = StatusTally::count(&outcomes);
    let default_idx = default_path_index(spec);
    let default_returns = {
        let path = spec.assignment(default_idx)?;
        let config = resolve_config(spec, &path, characteristic, n_dates, min_stocks)?;
        longshort_returns(&imputed, &config).ok().map(|s| s.returns)
    };
    Ok(AnomalyOutcome {
        characteristic: characteristic.to_string(),
        outcomes: OutcomeSet::new(spec.clone(), outcomes),
        default_returns,
        tally,
    })
}

fn outcome_from_series(index: u64, returns: &[f64]) -> PathOutcome {
    let t_len = returns.len();
    let mean = stats::mean(returns);
    let sd = stats::sd_sample(returns);
    if sd <= mean.abs() * 1e-13 {
        return PathOutcome::empty(index, PathStatus::Failed("zero dispersion".into()));
    }
    let se = sd / (t_len as f64).sqrt();
    let rss: f64 = returns.iter().map(|r| (r - mean) * (r - mean)).sum();
    PathOutcome {
        path_index: index,
        effect: mean,
        se,
        t_stat: mean / se,
        aic: t_len as f64 * (rss / t_len as f64).max(f64::MIN_POSITIVE).ln() + 4.0,
        n: t_len,
        rss,
        yvar: stats::variance_pop(returns),
        se_iid: Some(se),
        se_hac: None,
        status: PathStatus::Ok,
    }
}

/// Summarize one characteristic's outcome cloud (medians, default path,
/// robustness and full intervals, sign flip).
pub fn summarize_anomaly(result: &AnomalyOutcome) -> AnomalySummary {
    let spec = &result.outcomes.spec;
    let ok: Vec<&PathOutcome> = result.outcomes.ok_outcomes().collect();
    let ts: Vec<f64> = ok.iter().map(|o| o.t_stat).collect();
    let median_t = if ts.is_empty() {
        f64::NAN
    } else {
        stats::quantile(&ts, 0.5)
    };
    let default_idx = default_path_index(spec);
    let default_t = ok
        .iter()
        .find(|o| o.path_index == default_idx)
        .map(|o| o.t_stat);
    let robustness = robustness_path_indices(spec);
    let robust_ts: Vec<f64> = ok
        .iter()
        .filter(|o| robustness.binary_search(&o.path_index).is_ok())
        .map(|o| o.t_stat)
        .collect();
    let interval = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some((
                v.iter().copied().fold(f64::INFINITY, f64::min),
                v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            ))
        }
    };
    AnomalySummary {
        characteristic: result.characteristic.clone(),
        median_t,
        default_t,
        robustness_interval: interval(&robust_ts),
        full_interval: interval(&ts),
        sign: if median_t < 0.0 { -1.0 } else { 1.0 },
        ok_paths: ok.len(),
    }
}

/// Run every characteristic of the panel through the grid.
pub fn run_anomalies_study(
    spec: &StudySpec,
    panel: &CharacteristicsPanel,
    characteristics: &[String],
    min_stocks: usize,
) -> Result<Vec<AnomalyOutcome>, SortError> {
    characteristics
        .iter()
        .map(|c| run_anomaly_paths(spec, panel, c, min_stocks))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use approx::assert_relative_eq;

    fn ten_stock_panel() -> CharacteristicsPanel {
        synth::characteristics_panel(60, 10, &[("alpha", 0.02)], 0.01, 5)
    }

    fn base_config(characteristic: &str, weighting: Weighting) -> SortConfig {
        SortConfig {
            characteristic: characteristic.to_string(),
            quantile: 0.2,
            holding_months: 1,
            weighting,
            cleaning: Cleaning::Impute,
            window: (0, 60),
            min_stocks: 10,
        }
    }

    #[test]
    fn quintile_split_on_ten_stocks() {
        let panel = ten_stock_panel();
        let ci = panel.characteristic_index("alpha").unwrap();
        let config = base_config("alpha", Weighting::Ew);
        let w = form_portfolio(&panel, ci, &config, 0).unwrap();
        assert_eq!(w.long.len(), 2);
        assert_eq!(w.short.len(), 2);
        for (_, wi) in w.long.iter().chain(&w.short) {
            assert_relative_eq!(*wi, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn legs_sum_to_one_all_schemes() {
        let panel = ten_stock_panel();
        let ci = panel.characteristic_index("alpha").unwrap();
        for weighting in [Weighting::Ew, Weighting::Vw, Weighting::Ivw, Weighting::Cw] {
            for date in [0usize, 10, 30] {
                let config = base_config("alpha", weighting);
                let w = form_portfolio(&panel, ci, &config, date).unwrap();
                let sum_l: f64 = w.long.iter().map(|(_, x)| x).sum();
                let sum_s: f64 = w.short.iter().map(|(_, x)| x).sum();
                assert_relative_eq!(sum_l, 1.0, epsilon = 1e-12);
                assert_relative_eq!(sum_s, 1.0, epsilon = 1e-12);
                assert!(w.long.iter().chain(&w.short).all(|(_, x)| *x >= 0.0));
            }
        }
    }

    #[test]
    fn vw_weight_tracks_size_share() {
        let panel = ten_stock_panel();
        let ci = panel.characteristic_index("alpha").unwrap();
        let mi = panel.characteristic_index("mvel1").unwrap();
        let config = base_config("alpha", Weighting::Vw);
        let w = form_portfolio(&panel, ci, &config, 5).unwrap();
        let cap: f64 = w.long.iter().map(|(s, _)| panel.value(mi, 5, *s)).sum();
        for (s, weight) in &w.long {
            assert_relative_eq!(*weight, panel.value(mi, 5, *s) / cap, epsilon = 1e-12);
        }
    }

    #[test]
    fn monotone_fixture_profits_every_month() {
        // characteristic with a strong signal and almost no noise: the sort
        // orders next-month returns, so long-short is positive throughout
        let panel = synth::characteristics_panel(40, 20, &[("alpha", 0.05)], 0.0001, 9);
        let config = SortConfig { window: (0, 40), ..base_config("alpha", Weighting::Ew) };
        let series = longshort_returns(&panel, &config).unwrap();
        assert!(series.returns.iter().skip(1).all(|&r| r > 0.0));
    }

    #[test]
    fn noise_characteristic_centers_on_zero() {
        let panel = synth::characteristics_panel(240, 30, &[("alpha", 0.0)], 0.02, 11);
        let config = SortConfig { window: (0, 240), ..base_config("alpha", Weighting::Ew) };
        let series = longshort_returns(&panel, &config).unwrap();
        let t = sharpe_tstat(&series.returns).unwrap();
        assert!(t.abs() < 3.0, "pure-noise sort produced t = {t}");
    }

    #[test]
    fn sharpe_tstat_fixture() {
        // T = 100, mean 0.01, sd 0.05 -> 2.0
        let mut returns = Vec::new();
        for i in 0..100 {
            returns.push(0.01 + if i % 2 == 0 { 0.05 } else { -0.05 });
        }
        // adjust: build exactly mean 0.01, sample sd 0.05
        let m = stats::mean(&returns);
        let sd = stats::sd_sample(&returns);
        let fixed: Vec<f64> = returns.iter().map(|r| 0.01 + (r - m) * 0.05 / sd).collect();
        assert_relative_eq!(sharpe_tstat(&fixed).unwrap(), 2.0, epsilon = 1e-10);
        assert!(sharpe_tstat(&vec![0.01; 100]).is_err());
        assert!(sharpe_tstat(&fixed[..10]).is_err());
        let centered: Vec<f64> = fixed.iter().map(|r| r - 0.01).collect();
        assert_relative_eq!(sharpe_tstat(&centered).unwrap(), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn sign_antisymmetry() {
        let panel = synth::characteristics_panel(80, 16, &[("alpha", 0.03)], 0.01, 13);
        // negated characteristic: build a twin panel with -alpha
        let ci = panel.characteristic_index("alpha").unwrap();
        let mut rows = Vec::new();
        for (d, date) in panel.dates.iter().enumerate() {
            for (s, permno) in panel.permnos.iter().enumerate() {
                let vals: Vec<f64> = (0..panel.characteristics.len())
                    .map(|c| {
                        let v = panel.value(c, d, s);
                        if c == ci {
                            -v
                        } else {
                            v
                        }
                    })
                    .collect();
                rows.push((*permno, *date, panel.ret(d, s), vals));
            }
        }
        let negated = CharacteristicsPanel::from_rows(panel.characteristics.clone(), &rows);
        for weighting in [Weighting::Ew, Weighting::Vw, Weighting::Ivw, Weighting::Cw] {
            let config = SortConfig { window: (0, 80), ..base_config("alpha", weighting) };
            let a = longshort_returns(&panel, &config).unwrap();
            let b = longshort_returns(&negated, &config).unwrap();
            for (x, y) in a.returns.iter().zip(&b.returns) {
                assert_relative_eq!(*x, -y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn ew_invariant_under_monotone_transform() {
        let panel = synth::characteristics_panel(80, 16, &[("alpha", 0.03)], 0.01, 17);
        let ci = panel.characteristic_index("alpha").unwrap();
        let mut rows = Vec::new();
        for (d, date) in panel.dates.iter().enumerate() {
            for (s, permno) in panel.permnos.iter().enumerate() {
                let vals: Vec<f64> = (0..panel.characteristics.len())
                    .map(|c| {
                        let v = panel.value(c, d, s);
                        if c == ci {
                            (v * 0.7).exp() + 3.0
                        } else {
                            v
                        }
                    })
                    .collect();
                rows.push((*permno, *date, panel.ret(d, s), vals));
            }
        }
        let warped = CharacteristicsPanel::from_rows(panel.characteristics.clone(), &rows);
        let config = SortConfig { window: (0, 80), ..base_config("alpha", Weighting::Ew) };
        let a = longshort_returns(&panel, &config).unwrap();
        let b = longshort_returns(&warped, &config).unwrap();
        for (x, y) in a.returns.iter().zip(&b.returns) {
            assert_relative_eq!(*x, *y, epsilon = 1e-12);
        }
    }

    #[test]
    fn holding_one_equals_monthly_reforming() {
        let panel = ten_stock_panel();
        let config = base_config("alpha", Weighting::Ew);
        let series = longshort_returns(&panel, &config).unwrap();
        assert_eq!(series.returns.len(), 59);
    }

    #[test]
    fn grid_counts_default_and_robustness() {
        let spec = anomalies_study_spec();
        let paths = enumerate_paths(&spec).unwrap();
        assert_eq!(paths.len(), 576);
        assert!(paths.iter().all(|p| p.feasible));
        assert_eq!(default_path_index(&spec), 0);
        let robustness = robustness_path_indices(&spec);
        assert_eq!(robustness.len(), 14);
        // every robustness path is distance 1 from the default
        let default = spec.assignment(0).unwrap();
        for idx in &robustness {
            let p = spec.assignment(*idx).unwrap();
            assert_eq!(crate::pathgrid::path_distance(&default, &p).unwrap(), 1);
        }
    }

    #[test]
    fn study_runs_and_summarizes() {
        let panel = synth::characteristics_panel(140, 24, &[("alpha", 0.04), ("beta", 0.0)], 0.01, 19);
        let spec = anomalies_study_spec();
        let results =
            run_anomalies_study(&spec, &panel, &["alpha".into(), "beta".into()], 10).unwrap();
        assert_eq!(results.len(), 2);
        for r in &results {
            assert_eq!(r.outcomes.outcomes.len(), 576);
            assert!(r.tally.ok > 400, "ok paths: {}", r.tally.ok);
            assert!(r.default_returns.is_some());
        }
        let strong = summarize_anomaly(&results[0]);
        let weak = summarize_anomaly(&results[1]);
        assert!(strong.median_t > weak.median_t.abs());
        // robustness interval nests inside the full interval
        for s in [&strong, &weak] {
            let (rl, rh) = s.robustness_interval.unwrap();
            let (fl, fh) = s.full_interval.unwrap();
            assert!(fl <= rl && rh <= fh);
        }
    }
}
