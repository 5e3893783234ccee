//! Synthetic dataset generators in the supported file formats.
//!
//! The studies were designed for licensed market data; these generators
//! produce structurally faithful substitutes (same columns, same layouts,
//! controllable planted effects) for tests, demos, and benchmarks. All
//! generators are deterministic under a fixed seed.

use crate::datapanel::{CharacteristicsPanel, DataPanel, Frequency};
use crate::regression::PremiumData;
use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Monthly date index starting January 1950.
pub fn monthly_dates(n: usize) -> Vec<NaiveDate> {
    (0..n)
        .map(|i| NaiveDate::from_ymd_opt(1950 + (i / 12) as i32, (i % 12) as u32 + 1, 1).unwrap())
        .collect()
}

/// Business-day-ish daily index (21 days per month) on the same calendar as
/// [`monthly_dates`].
pub fn daily_dates(n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut i = 0usize;
    'outer: for month in 0i32.. {
        let y = 1950 + month / 12;
        let m = (month % 12) as u32 + 1;
        for d in 1..=21u32 {
            out.push(NaiveDate::from_ymd_opt(y, m, d).unwrap());
            i += 1;
            if i == n {
                break 'outer;
            }
        }
    }
    out
}

fn ar1_series(rng: &mut impl Rng, n: usize, phi: f64, sd: f64) -> Vec<f64> {
    let gauss = Normal::new(0.0, sd).unwrap();
    let mut out = Vec::with_capacity(n);
    let mut x = gauss.sample(rng) / (1.0 - phi * phi).sqrt();
    for _ in 0..n {
        x = phi * x + gauss.sample(rng);
        out.push(x);
    }
    out
}

/// Equity-premium study inputs with a planted predictive coefficient.
///
/// The first predictor (`payout`) drives the premium:
/// `y_{t+1} = b * z_t + e`, with `z` the standardized predictor, so the
/// monthly level paths on `payout` estimate a slope near `b`. Two predictors
/// start with missing stretches to exercise the missing-data layer.
pub fn premium_data(n_months: usize, b: f64, seed: u64) -> PremiumData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, 1.0).unwrap();
    let names = ["payout", "bm", "svar", "dfr", "dfy", "ntis"];
    let phis = [0.95, 0.97, 0.6, 0.3, 0.9, 0.85];
    let raw: Vec<Vec<f64>> = phis
        .iter()
        .map(|&phi| ar1_series(&mut rng, n_months, phi, 1.0))
        .collect();
    let z0 = {
        let m = crate::stats::mean(&raw[0]);
        let s = crate::stats::sd_pop(&raw[0]);
        raw[0].iter().map(|v| (v - m) / s).collect::<Vec<_>>()
    };
    let noise_sd = 0.04;
    let premium: Vec<Option<f64>> = (0..n_months)
        .map(|t| {
            let signal = if t == 0 { 0.0 } else { b * z0[t - 1] };
            Some(signal + noise_sd * gauss.sample(&mut rng))
        })
        .collect();
    let predictors = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let mut col: Vec<Option<f64>> = raw[j].iter().map(|&v| Some(v)).collect();
            // leading gaps on two predictors (shorter history)
            if j == 3 {
                for cell in col.iter_mut().take(n_months / 5) {
                    *cell = None;
                }
            }
            if j == 5 {
                for cell in col.iter_mut().take(n_months / 8) {
                    *cell = None;
                }
            }
            (name.to_string(), col)
        })
        .collect();
    PremiumData { dates: monthly_dates(n_months), premium, predictors }
}

/// Macro predictor panel in the raw file layout (the loader derives payout,
/// dfy, dfr and the log premium from these columns).
pub fn macro_panel(n_months: usize, seed: u64) -> DataPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, 1.0).unwrap();
    let n = n_months;
    let mut index = Vec::with_capacity(n);
    let mut level = 100.0;
    let spvw: Vec<Option<f64>> = (0..n)
        .map(|_| {
            let r = 0.005 + 0.04 * gauss.sample(&mut rng);
            level *= 1.0 + r;
            index.push(Some(level));
            Some(r)
        })
        .collect();
    let d12: Vec<Option<f64>> = ar1_series(&mut rng, n, 0.99, 0.01)
        .iter()
        .map(|v| Some(3.0 * (1.0 + 0.1 * v.tanh())))
        .collect();
    let e12: Vec<Option<f64>> = ar1_series(&mut rng, n, 0.98, 0.02)
        .iter()
        .map(|v| Some(5.0 * (1.0 + 0.2 * v.tanh())))
        .collect();
    let aaa: Vec<Option<f64>> = ar1_series(&mut rng, n, 0.99, 0.001)
        .iter()
        .map(|v| Some(0.04 + v.abs()))
        .collect();
    let baa: Vec<Option<f64>> = aaa
        .iter()
        .map(|v| v.map(|x| x + 0.01 + 0.002 * rng.random::<f64>()))
        .collect();
    let ltr: Vec<Option<f64>> = (0..n).map(|_| Some(0.003 + 0.02 * gauss.sample(&mut rng))).collect();
    let corpr: Vec<Option<f64>> = ltr
        .iter()
        .map(|v| v.map(|x| x + 0.001 + 0.005 * gauss.sample(&mut rng)))
        .collect();
    let mut ntis: Vec<Option<f64>> = ar1_series(&mut rng, n, 0.9, 0.005)
        .iter()
        .map(|v| Some(0.01 + *v))
        .collect();
    let bm: Vec<Option<f64>> = ar1_series(&mut rng, n, 0.97, 0.02)
        .iter()
        .map(|v| Some(0.5 * (1.0 + 0.5 * v.tanh())))
        .collect();
    let svar: Vec<Option<f64>> = (0..n)
        .map(|_| Some(0.002 + 0.002 * rng.random::<f64>()))
        .collect();
    let rfree: Vec<Option<f64>> = (0..n).map(|_| Some(0.003)).collect();
    // a predictor with a shorter history
    for cell in ntis.iter_mut().take(n / 6) {
        *cell = None;
    }
    DataPanel::new(
        monthly_dates(n),
        Frequency::Monthly,
        vec![
            ("Index".into(), index),
            ("D12".into(), d12),
            ("E12".into(), e12),
            ("AAA".into(), aaa),
            ("BAA".into(), baa),
            ("ltr".into(), ltr),
            ("corpr".into(), corpr),
            ("ntis".into(), ntis),
            ("b/m".into(), bm),
            ("svar".into(), svar),
            ("Rfree".into(), rfree),
            ("CRSP_SPvw".into(), spvw),
        ],
    )
    .unwrap()
}

/// Long-format characteristics panel where each listed characteristic
/// predicts the next month's return with its own strength: stock `i`'s
/// return at `t+1` adds `strength_c * rank-z(value_{c,i,t})` per
/// characteristic. `mvel1` and `retvol` are always present (weights for the
/// VW / IVW schemes) and kept strictly positive.
pub fn characteristics_panel(
    n_months: usize,
    n_stocks: usize,
    characteristics: &[(&str, f64)],
    noise_sd: f64,
    seed: u64,
) -> CharacteristicsPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, 1.0).unwrap();
    let dates = monthly_dates(n_months);
    let mut names: Vec<String> = characteristics.iter().map(|(n, _)| n.to_string()).collect();
    for required in ["mvel1", "retvol"] {
        if !names.iter().any(|n| n == required) {
            names.push(required.to_string());
        }
    }
    let n_chars = names.len();
    let mut values = vec![vec![0.0; n_months * n_stocks]; n_chars];
    for (c, name) in names.iter().enumerate() {
        for s in 0..n_stocks {
            let series = ar1_series(&mut rng, n_months, 0.9, 1.0);
            for (t, v) in series.iter().enumerate() {
                let v = if name == "mvel1" || name == "retvol" {
                    (0.3 * v).exp()
                } else {
                    *v
                };
                values[c][t * n_stocks + s] = v;
            }
        }
    }
    let mut rows = Vec::with_capacity(n_months * n_stocks);
    let mut prev_signal = vec![0.0; n_stocks];
    for (t, date) in dates.iter().enumerate() {
        let mut signal = vec![0.0; n_stocks];
        for (ci, (_, strength)) in characteristics.iter().enumerate() {
            if *strength == 0.0 {
                continue;
            }
            let mut order: Vec<usize> = (0..n_stocks).collect();
            order.sort_by(|&a, &b| {
                values[ci][t * n_stocks + a]
                    .partial_cmp(&values[ci][t * n_stocks + b])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            for (rank, &s) in order.iter().enumerate() {
                let z = (rank as f64 + 0.5) / n_stocks as f64 - 0.5;
                signal[s] += strength * 2.0 * z;
            }
        }
        for s in 0..n_stocks {
            let ret = prev_signal[s] + noise_sd * gauss.sample(&mut rng);
            let vals: Vec<f64> = (0..n_chars).map(|c| values[c][t * n_stocks + s]).collect();
            rows.push((s as u64 + 10_000, *date, ret, vals));
        }
        prev_signal = signal;
    }
    CharacteristicsPanel::from_rows(names, &rows)
}

/// Factor returns panel (`MKT`, `SMB`, `HML`, `RMW`, `CMA`, `RF`).
pub fn factor_panel(dates: Vec<NaiveDate>, frequency: Frequency, sd: f64, seed: u64) -> DataPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, sd).unwrap();
    let n = dates.len();
    let names = ["MKT", "SMB", "HML", "RMW", "CMA"];
    let mut cols: Vec<(String, Vec<Option<f64>>)> = names
        .iter()
        .map(|name| {
            let col = (0..n)
                .map(|_| Some(0.002 + gauss.sample(&mut rng)))
                .collect();
            (name.to_string(), col)
        })
        .collect();
    cols.push(("RF".into(), vec![Some(0.0002); n]));
    DataPanel::new(dates, frequency, cols).unwrap()
}

/// Asset returns generated from factor loadings: `r_n = B_n f + e_n`.
/// Returns the panel and the planted loading matrix (assets x factors).
pub fn asset_panel_from_factors(
    factors: &DataPanel,
    n_assets: usize,
    noise_sd: f64,
    seed: u64,
) -> (DataPanel, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, 1.0).unwrap();
    let factor_names = ["MKT", "SMB", "HML", "RMW", "CMA"];
    let f: Vec<Vec<f64>> = factor_names
        .iter()
        .map(|n| {
            factors
                .dense_column(n)
                .expect("factor panel has all factor columns")
        })
        .collect();
    let t_len = factors.len();
    let mut loadings = Vec::with_capacity(n_assets);
    let mut cols = Vec::with_capacity(n_assets);
    for a in 0..n_assets {
        let b: Vec<f64> = (0..factor_names.len())
            .map(|j| {
                if j == 0 {
                    0.5 + rng.random::<f64>()
                } else {
                    gauss.sample(&mut rng) * 0.5
                }
            })
            .collect();
        let col: Vec<Option<f64>> = (0..t_len)
            .map(|t| {
                let sys: f64 = b.iter().zip(&f).map(|(bj, fj)| bj * fj[t]).sum();
                Some(sys + noise_sd * gauss.sample(&mut rng))
            })
            .collect();
        loadings.push(b);
        cols.push((format!("A{a:03}"), col));
    }
    (
        DataPanel::new(factors.dates().to_vec(), factors.frequency(), cols).unwrap(),
        loadings,
    )
}

/// Write a date-indexed panel as CSV (`date` column first, `yyyy-mm-dd`).
pub fn panel_to_csv(panel: &DataPanel) -> String {
    let mut out = String::from("date");
    for name in panel.column_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let columns: Vec<&[Option<f64>]> = panel
        .column_names()
        .iter()
        .map(|n| panel.column(n).unwrap())
        .collect();
    for (i, d) in panel.dates().iter().enumerate() {
        out.push_str(&d.format("%Y-%m-%d").to_string());
        for col in &columns {
            out.push(',');
            if let Some(v) = col[i] {
                out.push_str(&format!("{v}"));
            }
        }
        out.push('\n');
    }
    out
}

/// Write a characteristics panel in the long CSV layout.
pub fn characteristics_to_csv(panel: &CharacteristicsPanel) -> String {
    let mut out = String::from("permno,date,ret");
    for c in &panel.characteristics {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (d_idx, date) in panel.dates.iter().enumerate() {
        for (s_idx, permno) in panel.permnos.iter().enumerate() {
            out.push_str(&format!("{permno},{}", date.format("%Y-%m-%d")));
            let r = panel.ret(d_idx, s_idx);
            out.push(',');
            if !r.is_nan() {
                out.push_str(&format!("{r}"));
            }
            for c in 0..panel.characteristics.len() {
                let v = panel.value(c, d_idx, s_idx);
                out.push(',');
                if !v.is_nan() {
                    out.push_str(&format!("{v}"));
                }
            }
            out.push('\n');
        }
    }
    out
}
