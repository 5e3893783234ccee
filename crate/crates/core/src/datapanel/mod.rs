//! Time-indexed data tables, CSV ingestion, and the data-preparation
//! transforms with their Lipschitz-bound verification harness.
//!
//! A [`DataPanel`] is a rectangular table: a strictly increasing date index
//! with a granularity tag, plus named numeric columns of equal length with
//! explicit per-cell missingness. Panels are immutable; every transform
//! returns a new panel together with a [`TransformReport`].

mod formats;
mod lipschitz;
mod transforms;

pub use formats::{
    load_characteristics_csv, load_characteristics_path, load_named_series_csv,
    load_named_series_path, CharacteristicsPanel, FactorColumns,
};
pub use lipschitz::{lipschitz_bound, lipschitz_ratio, NormOrder, Transform};
pub use transforms::{
    cumulative_sum, difference, scale_dependent, standardize, winsorize, winsorize_fraction,
};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{column}` starts with a missing value; cannot impute forward")]
    LeadingMissing { column: String },
    #[error("dates not strictly increasing at row {0}")]
    UnorderedDates(usize),
    #[error("column `{column}` has length {got}, index has length {expected}")]
    LengthMismatch { column: String, expected: usize, got: usize },
    #[error("winsorization count {k} too large for length {n} (need 2k < n)")]
    WinsorTooLarge { k: usize, n: usize },
    #[error("vector too short: need at least {need} values, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("zero variance; cannot standardize")]
    ZeroVariance,
    #[error("non-positive scale horizon: h*m = {0}")]
    BadScale(f64),
    #[error("cannot parse date `{0}` (expected ISO yyyy-mm-dd, yyyymm, or yyyymmdd)")]
    BadDate(String),
    #[error("cannot parse number `{value}` in column `{column}` row {row}")]
    BadNumber { column: String, row: usize, value: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
}

/// Sampling granularity of a panel's date index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Daily,
    Monthly,
    Quarterly,
    Annual,
}

impl Frequency {
    /// Months per period; the unit used by the dependent-variable scaling.
    /// Daily data has no monthly multiple and returns `None`.
    pub fn months_per_period(self) -> Option<u32> {
        match self {
            Frequency::Daily => None,
            Frequency::Monthly => Some(1),
            Frequency::Quarterly => Some(3),
            Frequency::Annual => Some(12),
        }
    }
}

/// What a transform did to a panel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformReport {
    pub transform: String,
    pub cells_modified: usize,
    pub parameters: String,
}

/// A time-indexed rectangular table of named numeric series with explicit
/// missingness.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPanel {
    dates: Vec<NaiveDate>,
    frequency: Frequency,
    names: Vec<String>,
    columns: Vec<Vec<Option<f64>>>,
}

impl DataPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        frequency: Frequency,
        columns: Vec<(String, Vec<Option<f64>>)>,
    ) -> Result<Self, PanelError> {
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                let pos = dates.iter().position(|d| *d == w[1]).unwrap_or(0);
                return Err(PanelError::UnorderedDates(pos));
            }
        }
        let mut names = Vec::with_capacity(columns.len());
        let mut cols = Vec::with_capacity(columns.len());
        for (name, col) in columns {
            if names.contains(&name) {
                return Err(PanelError::DuplicateColumn(name));
            }
            if col.len() != dates.len() {
                return Err(PanelError::LengthMismatch {
                    column: name,
                    expected: dates.len(),
                    got: col.len(),
                });
            }
            names.push(name);
            cols.push(col);
        }
        Ok(DataPanel { dates, frequency, names, columns: cols })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn frequency(&self) -> Frequency {
        self.frequency
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&[Option<f64>], PanelError> {
        let i = self.column_pos(name)?;
        Ok(&self.columns[i])
    }

    /// The column's present values, in order; errors if any cell is missing.
    pub fn dense_column(&self, name: &str) -> Result<Vec<f64>, PanelError> {
        let col = self.column(name)?;
        col.iter()
            .map(|c| c.ok_or_else(|| PanelError::LeadingMissing { column: name.to_string() }))
            .collect()
    }

    fn column_pos(&self, name: &str) -> Result<usize, PanelError> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| PanelError::UnknownColumn(name.to_string()))
    }

    /// Add (or replace) a column, returning a new panel.
    pub fn with_column(&self, name: &str, col: Vec<Option<f64>>) -> Result<Self, PanelError> {
        if col.len() != self.len() {
            return Err(PanelError::LengthMismatch {
                column: name.to_string(),
                expected: self.len(),
                got: col.len(),
            });
        }
        let mut out = self.clone();
        match out.names.iter().position(|n| n == name) {
            Some(i) => out.columns[i] = col,
            None => {
                out.names.push(name.to_string());
                out.columns.push(col);
            }
        }
        Ok(out)
    }

    /// Replace every absent cell of `column` with the nearest preceding
    /// present value. The first value must be present. Consecutive gaps fill
    /// sequentially.
    pub fn impute_forward(&self, column: &str) -> Result<(Self, TransformReport), PanelError> {
        let i = self.column_pos(column)?;
        let mut out = self.clone();
        let col = &mut out.columns[i];
        if col.first().map(|c| c.is_none()).unwrap_or(false) {
            return Err(PanelError::LeadingMissing { column: column.to_string() });
        }
        let mut modified = 0;
        let mut last = None;
        for cell in col.iter_mut() {
            match cell {
                Some(v) => last = Some(*v),
                None => {
                    *cell = last;
                    modified += 1;
                }
            }
        }
        Ok((
            out,
            TransformReport {
                transform: "impute_forward".into(),
                cells_modified: modified,
                parameters: format!("column={column}"),
            },
        ))
    }

    /// Remove rows with any absent cell among the named columns, preserving
    /// order.
    pub fn drop_missing_rows(&self, columns: &[&str]) -> Result<Self, PanelError> {
        let idx: Vec<usize> = columns
            .iter()
            .map(|c| self.column_pos(c))
            .collect::<Result<_, _>>()?;
        let keep: Vec<bool> = (0..self.len())
            .map(|row| idx.iter().all(|&i| self.columns[i][row].is_some()))
            .collect();
        let dates = self
            .dates
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(d, _)| *d)
            .collect();
        let cols = self
            .names
            .iter()
            .cloned()
            .zip(self.columns.iter().map(|col| {
                col.iter()
                    .zip(&keep)
                    .filter(|(_, &k)| k)
                    .map(|(c, _)| *c)
                    .collect::<Vec<_>>()
            }))
            .collect();
        DataPanel::new(dates, self.frequency, cols)
    }

    /// Restrict to rows with dates in `[start, end)`; `None` bounds are open.
    pub fn window(&self, start: Option<NaiveDate>, end: Option<NaiveDate>) -> Self {
        let keep: Vec<bool> = self
            .dates
            .iter()
            .map(|d| start.map(|s| *d >= s).unwrap_or(true) && end.map(|e| *d < e).unwrap_or(true))
            .collect();
        let dates = self
            .dates
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(d, _)| *d)
            .collect();
        let columns = self
            .columns
            .iter()
            .map(|col| {
                col.iter()
                    .zip(&keep)
                    .filter(|(_, &k)| k)
                    .map(|(c, _)| *c)
                    .collect()
            })
            .collect();
        DataPanel {
            dates,
            frequency: self.frequency,
            names: self.names.clone(),
            columns,
        }
    }
}

/// Parse a date cell: ISO `yyyy-mm-dd`, `yyyymm` (normalized to the first of
/// the month), or `yyyymmdd`.
pub fn parse_date(s: &str) -> Result<NaiveDate, PanelError> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d);
    }
    if s.len() == 6 && s.chars().all(|c| c.is_ascii_digit()) {
        let y: i32 = s[..4].parse().map_err(|_| PanelError::BadDate(s.to_string()))?;
        let m: u32 = s[4..].parse().map_err(|_| PanelError::BadDate(s.to_string()))?;
        return NaiveDate::from_ymd_opt(y, m, 1).ok_or_else(|| PanelError::BadDate(s.to_string()));
    }
    if s.len() == 8 && s.chars().all(|c| c.is_ascii_digit()) {
        let y: i32 = s[..4].parse().map_err(|_| PanelError::BadDate(s.to_string()))?;
        let m: u32 = s[4..6].parse().map_err(|_| PanelError::BadDate(s.to_string()))?;
        let d: u32 = s[6..].parse().map_err(|_| PanelError::BadDate(s.to_string()))?;
        return NaiveDate::from_ymd_opt(y, m, d).ok_or_else(|| PanelError::BadDate(s.to_string()));
    }
    Err(PanelError::BadDate(s.to_string()))
}

/// Parse a numeric cell; empty string and "NA" are absent.
pub fn parse_cell(s: &str) -> Result<Option<f64>, std::num::ParseFloatError> {
    let s = s.trim();
    if s.is_empty() || s == "NA" || s == "NaN" || s == "nan" {
        return Ok(None);
    }
    s.parse::<f64>().map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, 1).unwrap()
    }

    fn panel(cells: Vec<Option<f64>>) -> DataPanel {
        let dates = (0..cells.len())
            .map(|i| date(2000 + (i / 12) as i32, (i % 12) as u32 + 1))
            .collect();
        DataPanel::new(dates, Frequency::Monthly, vec![("x".into(), cells)]).unwrap()
    }

    #[test]
    fn impute_fills_forward() {
        let p = panel(vec![Some(1.0), None, Some(3.0)]);
        let (q, report) = p.impute_forward("x").unwrap();
        assert_eq!(q.column("x").unwrap(), &[Some(1.0), Some(1.0), Some(3.0)]);
        assert_eq!(report.cells_modified, 1);
    }

    #[test]
    fn impute_no_missing_is_identity() {
        let p = panel(vec![Some(1.0), Some(2.0)]);
        let (q, report) = p.impute_forward("x").unwrap();
        assert_eq!(q, p);
        assert_eq!(report.cells_modified, 0);
    }

    #[test]
    fn impute_fills_consecutive_gaps() {
        let p = panel(vec![Some(2.0), None, None, Some(5.0)]);
        let (q, _) = p.impute_forward("x").unwrap();
        assert_eq!(
            q.column("x").unwrap(),
            &[Some(2.0), Some(2.0), Some(2.0), Some(5.0)]
        );
    }

    #[test]
    fn impute_rejects_leading_missing() {
        let p = panel(vec![None, Some(1.0)]);
        let err = p.impute_forward("x").unwrap_err();
        assert!(matches!(err, PanelError::LeadingMissing { .. }));
    }

    #[test]
    fn drop_rows_by_named_columns() {
        let dates = vec![date(2000, 1), date(2000, 2), date(2000, 3)];
        let p = DataPanel::new(
            dates,
            Frequency::Monthly,
            vec![
                ("a".into(), vec![Some(1.0), None, Some(3.0)]),
                ("b".into(), vec![Some(1.0), Some(2.0), None]),
            ],
        )
        .unwrap();
        let q = p.drop_missing_rows(&["a"]).unwrap();
        assert_eq!(q.len(), 2);
        // missing only in un-named columns: identity
        let r = p.drop_missing_rows(&["a", "b"]).unwrap();
        assert_eq!(r.len(), 1);
        let s = p.drop_missing_rows(&[]).unwrap();
        assert_eq!(s.len(), 3);
        assert!(p.drop_missing_rows(&["zz"]).is_err());
    }

    #[test]
    fn dates_must_increase() {
        let err = DataPanel::new(
            vec![date(2000, 2), date(2000, 1)],
            Frequency::Monthly,
            vec![("x".into(), vec![Some(1.0), Some(2.0)])],
        )
        .unwrap_err();
        assert!(matches!(err, PanelError::UnorderedDates(_)));
    }

    #[test]
    fn parse_dates() {
        assert_eq!(parse_date("2001-03-15").unwrap(), NaiveDate::from_ymd_opt(2001, 3, 15).unwrap());
        assert_eq!(parse_date("200103").unwrap(), date(2001, 3));
        assert_eq!(parse_date("20010315").unwrap(), NaiveDate::from_ymd_opt(2001, 3, 15).unwrap());
        assert!(parse_date("03/2001").is_err());
    }
}
