//! CSV ingestion for the supported file layouts.
//!
//! All files are comma-separated with a header row. Dates accept ISO
//! `yyyy-mm-dd`, `yyyymm`, or `yyyymmdd`; absent cells are empty or `NA`.
//!
//! Supported layouts:
//!
//! - **Macro predictor file** (one row per month): `yyyymm` plus the raw
//!   columns `Index`, `D12`, `E12`, `AAA`, `BAA`, `ltr`, `corpr`, `b/m`
//!   (or `bm`), `ntis`, `svar`, `Rfree`, and optionally `CRSP_SPvw`. The
//!   equity-premium study derives `payout = ln D12 - ln E12`,
//!   `dfy = BAA - AAA`, `dfr = corpr - ltr`, and the log premium from
//!   `CRSP_SPvw` when present, else from `Index` and `D12`.
//! - **Factor returns file**: `date` plus factor columns (e.g. `MKT`, `SMB`,
//!   `HML`, `RMW`, `CMA`, `RF`).
//! - **Portfolio returns files**: `date` plus one column per portfolio;
//!   equal- and value-weighted variants are separate files.
//! - **Long-format characteristics panel**: `permno`, `date`, `ret`, then one
//!   column per characteristic. The sorting studies expect `mvel1` (size) and
//!   `retvol` (return volatility) among them for the value- and
//!   inverse-volatility weighting schemes.

use super::{parse_cell, parse_date, DataPanel, Frequency, PanelError};
use chrono::NaiveDate;
use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

/// Conventional factor-file column names.
pub struct FactorColumns;

impl FactorColumns {
    pub const MARKET: &'static str = "MKT";
    pub const SIZE: &'static str = "SMB";
    pub const VALUE: &'static str = "HML";
    pub const PROFITABILITY: &'static str = "RMW";
    pub const INVESTMENT: &'static str = "CMA";
    pub const RISK_FREE: &'static str = "RF";
}

/// Load a date-indexed CSV of named numeric series (macro file, factor file,
/// portfolio files). The first column named `date` or `yyyymm` (else the
/// first column) is the index.
pub fn load_named_series_csv<R: Read>(
    reader: R,
    frequency: Frequency,
) -> Result<DataPanel, PanelError> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let date_col = headers
        .iter()
        .position(|h| {
            let h = h.trim().to_ascii_lowercase();
            h == "date" || h == "yyyymm"
        })
        .unwrap_or(0);
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != date_col)
        .map(|(_, h)| h.trim().to_string())
        .collect();
    let mut dates = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        dates.push(parse_date(&rec[date_col])?);
        let mut k = 0;
        for (i, cell) in rec.iter().enumerate() {
            if i == date_col {
                continue;
            }
            let v = parse_cell(cell).map_err(|_| PanelError::BadNumber {
                column: names[k].clone(),
                row,
                value: cell.to_string(),
            })?;
            columns[k].push(v);
            k += 1;
        }
    }
    DataPanel::new(dates, frequency, names.into_iter().zip(columns).collect())
}

/// Convenience wrapper over [`load_named_series_csv`] for a file path.
pub fn load_named_series_path(
    path: &Path,
    frequency: Frequency,
) -> Result<DataPanel, PanelError> {
    let f = std::fs::File::open(path)?;
    load_named_series_csv(std::io::BufReader::new(f), frequency)
}

/// Long-format stock-month panel: per (permno, month) one return and one
/// value per characteristic. Stored dense with NaN as the missing marker.
#[derive(Debug, Clone)]
pub struct CharacteristicsPanel {
    pub dates: Vec<NaiveDate>,
    pub permnos: Vec<u64>,
    pub characteristics: Vec<String>,
    /// `values[c][date_idx * n_stocks + stock_idx]`, NaN = absent.
    values: Vec<Vec<f64>>,
    /// `returns[date_idx * n_stocks + stock_idx]`, NaN = absent.
    returns: Vec<f64>,
}

impl CharacteristicsPanel {
    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_stocks(&self) -> usize {
        self.permnos.len()
    }

    pub fn characteristic_index(&self, name: &str) -> Option<usize> {
        self.characteristics.iter().position(|c| c == name)
    }

    #[inline]
    fn cell(&self, date_idx: usize, stock_idx: usize) -> usize {
        date_idx * self.permnos.len() + stock_idx
    }

    /// Characteristic value, or NaN when absent.
    #[inline]
    pub fn value(&self, char_idx: usize, date_idx: usize, stock_idx: usize) -> f64 {
        self.values[char_idx][self.cell(date_idx, stock_idx)]
    }

    /// Month return, or NaN when absent.
    #[inline]
    pub fn ret(&self, date_idx: usize, stock_idx: usize) -> f64 {
        self.returns[self.cell(date_idx, stock_idx)]
    }

    /// Forward-fill a characteristic per stock along its month index,
    /// returning a new panel. Leading gaps stay absent.
    pub fn impute_characteristic_forward(&self, char_idx: usize) -> Self {
        let mut out = self.clone();
        let n_stocks = self.permnos.len();
        for s in 0..n_stocks {
            let mut last = f64::NAN;
            for d in 0..self.dates.len() {
                let cell = self.cell(d, s);
                let v = out.values[char_idx][cell];
                if v.is_nan() {
                    out.values[char_idx][cell] = last;
                } else {
                    last = v;
                }
            }
        }
        out
    }

    /// Build from in-memory rows `(permno, date, ret, values)` where `values`
    /// aligns with `characteristics`.
    pub fn from_rows(
        characteristics: Vec<String>,
        rows: &[(u64, NaiveDate, f64, Vec<f64>)],
    ) -> Self {
        let dates: Vec<NaiveDate> = rows
            .iter()
            .map(|r| r.1)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let permnos: Vec<u64> = rows
            .iter()
            .map(|r| r.0)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let n = dates.len() * permnos.len();
        let mut values = vec![vec![f64::NAN; n]; characteristics.len()];
        let mut returns = vec![f64::NAN; n];
        for (permno, date, ret, vals) in rows {
            let d = dates.binary_search(date).expect("date present");
            let s = permnos.binary_search(permno).expect("permno present");
            let cell = d * permnos.len() + s;
            returns[cell] = *ret;
            for (c, v) in vals.iter().enumerate() {
                values[c][cell] = *v;
            }
        }
        CharacteristicsPanel { dates, permnos, characteristics, values, returns }
    }
}

/// Load the long-format characteristics CSV.
pub fn load_characteristics_csv<R: Read>(reader: R) -> Result<CharacteristicsPanel, PanelError> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| PanelError::UnknownColumn(name.to_string()))
    };
    let permno_col = find("permno")?;
    let date_col = find("date")?;
    let ret_col = find("ret")?;
    let char_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != permno_col && *i != date_col && *i != ret_col)
        .map(|(i, h)| (i, h.trim().to_string()))
        .collect();
    let characteristics: Vec<String> = char_cols.iter().map(|(_, n)| n.clone()).collect();
    let mut rows = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let permno: u64 = rec[permno_col].trim().parse().map_err(|_| PanelError::BadNumber {
            column: "permno".into(),
            row,
            value: rec[permno_col].to_string(),
        })?;
        let date = parse_date(&rec[date_col])?;
        let ret = parse_cell(&rec[ret_col])
            .map_err(|_| PanelError::BadNumber {
                column: "ret".into(),
                row,
                value: rec[ret_col].to_string(),
            })?
            .unwrap_or(f64::NAN);
        let vals = char_cols
            .iter()
            .map(|(i, name)| {
                parse_cell(&rec[*i])
                    .map(|v| v.unwrap_or(f64::NAN))
                    .map_err(|_| PanelError::BadNumber {
                        column: name.clone(),
                        row,
                        value: rec[*i].to_string(),
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push((permno, date, ret, vals));
    }
    Ok(CharacteristicsPanel::from_rows(characteristics, &rows))
}

/// Convenience wrapper over [`load_characteristics_csv`] for a file path.
pub fn load_characteristics_path(path: &Path) -> Result<CharacteristicsPanel, PanelError> {
    let f = std::fs::File::open(path)?;
    load_characteristics_csv(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_series_csv_parses_dates_and_missing() {
        let csv = "yyyymm,a,b\n200001,1.5,\n200002,NA,2.5\n";
        let p = load_named_series_csv(csv.as_bytes(), Frequency::Monthly).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.column("a").unwrap(), &[Some(1.5), None]);
        assert_eq!(p.column("b").unwrap(), &[None, Some(2.5)]);
    }

    #[test]
    fn characteristics_csv_round_trip() {
        let csv = "permno,date,ret,size,mom\n\
                   10,200001,0.01,1.0,0.2\n\
                   11,200001,0.02,,0.3\n\
                   10,200002,-0.01,1.1,0.25\n";
        let p = load_characteristics_csv(csv.as_bytes()).unwrap();
        assert_eq!(p.n_dates(), 2);
        assert_eq!(p.n_stocks(), 2);
        let size = p.characteristic_index("size").unwrap();
        assert_eq!(p.value(size, 0, 0), 1.0);
        assert!(p.value(size, 0, 1).is_nan());
        assert!(p.ret(1, 1).is_nan()); // permno 11 absent in month 2
        let imputed = p.impute_characteristic_forward(size);
        assert_eq!(imputed.value(size, 1, 0), 1.1);
        assert!(imputed.value(size, 1, 1).is_nan()); // nothing to fill from
    }
}
