//! Path outcomes and the queryable outcome collection shared by every study
//! executor and by the analytics modules.

use crate::pathgrid::{GridError, StudySpec};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutcomeError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing column `{0}` in outcome file")]
    MissingColumn(String),
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("unknown option `{option}` in layer `{layer}`")]
    UnknownOption { layer: String, option: String },
    #[error("bad field `{field}` in row {row}: {value}")]
    BadField { field: String, row: usize, value: String },
}

/// Terminal state of one executed path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathStatus {
    /// Executed and produced finite outputs.
    Ok,
    /// Flagged infeasible by the grid constraints; never executed.
    Infeasible,
    /// Executed but rejected by a sample-size or degeneracy rule.
    Discarded(String),
    /// Execution failed.
    Failed(String),
}

impl PathStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, PathStatus::Ok)
    }
}

impl fmt::Display for PathStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathStatus::Ok => write!(f, "ok"),
            PathStatus::Infeasible => write!(f, "infeasible"),
            PathStatus::Discarded(msg) => write!(f, "discarded:{msg}"),
            PathStatus::Failed(msg) => write!(f, "error:{msg}"),
        }
    }
}

impl PathStatus {
    pub fn parse(s: &str) -> PathStatus {
        match s {
            "ok" => PathStatus::Ok,
            "infeasible" => PathStatus::Infeasible,
            _ => {
                if let Some(msg) = s.strip_prefix("discarded:") {
                    PathStatus::Discarded(msg.to_string())
                } else if let Some(msg) = s.strip_prefix("error:") {
                    PathStatus::Failed(msg.to_string())
                } else {
                    PathStatus::Failed(s.to_string())
                }
            }
        }
    }
}

/// The scalar outputs one path produces.
///
/// `effect` is the focal estimate, `se` its standard error under the path's
/// chosen variance estimator, and `t_stat = effect / se` whenever `se > 0`.
/// `n`, `rss` and `yvar` summarize the fitted model for the weighting
/// formulas: number of observations, residual sum of squares, and the biased
/// sample variance of the dependent variable. `se_iid` / `se_hac` carry both
/// variance-estimator variants when the executor computes them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathOutcome {
    pub path_index: u64,
    pub effect: f64,
    pub se: f64,
    pub t_stat: f64,
    pub aic: f64,
    pub n: usize,
    pub rss: f64,
    pub yvar: f64,
    #[serde(default)]
    pub se_iid: Option<f64>,
    #[serde(default)]
    pub se_hac: Option<f64>,
    pub status: PathStatus,
}

impl PathOutcome {
    /// A placeholder outcome for a path that produced no numbers.
    pub fn empty(path_index: u64, status: PathStatus) -> Self {
        PathOutcome {
            path_index,
            effect: f64::NAN,
            se: f64::NAN,
            t_stat: f64::NAN,
            aic: f64::NAN,
            n: 0,
            rss: f64::NAN,
            yvar: f64::NAN,
            se_iid: None,
            se_hac: None,
            status,
        }
    }
}

/// Per-status path counts of one run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StatusTally {
    pub ok: usize,
    pub infeasible: usize,
    pub discarded: usize,
    pub failed: usize,
}

impl StatusTally {
    pub fn count(outcomes: &[PathOutcome]) -> Self {
        let mut t = StatusTally::default();
        for o in outcomes {
            match o.status {
                PathStatus::Ok => t.ok += 1,
                PathStatus::Infeasible => t.infeasible += 1,
                PathStatus::Discarded(_) => t.discarded += 1,
                PathStatus::Failed(_) => t.failed += 1,
            }
        }
        t
    }

    pub fn total(&self) -> usize {
        self.ok + self.infeasible + self.discarded + self.failed
    }
}

/// All outcomes of one study, queryable by layer option.
#[derive(Debug, Clone)]
pub struct OutcomeSet {
    pub spec: StudySpec,
    /// One outcome per enumerated path, in path-index order.
    pub outcomes: Vec<PathOutcome>,
}

impl OutcomeSet {
    pub fn new(spec: StudySpec, mut outcomes: Vec<PathOutcome>) -> Self {
        outcomes.sort_by_key(|o| o.path_index);
        OutcomeSet { spec, outcomes }
    }

    /// Outcomes with `Ok` status.
    pub fn ok_outcomes(&self) -> impl Iterator<Item = &PathOutcome> {
        self.outcomes.iter().filter(|o| o.status.is_ok())
    }

    pub fn ok_count(&self) -> usize {
        self.ok_outcomes().count()
    }

    /// Outcomes whose path passes through `option` of `layer`.
    pub fn through(
        &self,
        layer: &str,
        option: &str,
    ) -> Result<Vec<&PathOutcome>, OutcomeError> {
        let li = self
            .spec
            .layer_index(layer)
            .ok_or_else(|| OutcomeError::UnknownLayer(layer.to_string()))?;
        let oi = self.spec.layers[li]
            .option_index(option)
            .ok_or_else(|| OutcomeError::UnknownOption {
                layer: layer.to_string(),
                option: option.to_string(),
            })?;
        let mut out = Vec::new();
        for o in &self.outcomes {
            let choices = self.spec.decode_index(o.path_index)?;
            if choices[li] == oi {
                out.push(o);
            }
        }
        Ok(out)
    }

    /// Write the long-format outcome CSV: `path_index`, one column per layer
    /// choice, then the numeric fields and the status token.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), OutcomeError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["path_index".to_string()];
        header.extend(self.spec.layers.iter().map(|l| l.name.clone()));
        header.extend(
            ["b", "se_iid", "se_hac", "t", "aic", "n", "rss", "yvar", "status"]
                .iter()
                .map(|s| s.to_string()),
        );
        w.write_record(&header)?;
        for o in &self.outcomes {
            let choices = self.spec.decode_index(o.path_index)?;
            let mut rec = vec![o.path_index.to_string()];
            for (j, &c) in choices.iter().enumerate() {
                rec.push(self.spec.layers[j].options[c].id.clone());
            }
            rec.push(fmt_f64(o.effect));
            rec.push(opt_f64(o.se_iid));
            rec.push(opt_f64(o.se_hac));
            rec.push(fmt_f64(o.t_stat));
            rec.push(fmt_f64(o.aic));
            rec.push(o.n.to_string());
            rec.push(fmt_f64(o.rss));
            rec.push(fmt_f64(o.yvar));
            rec.push(o.status.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read an outcome CSV written by [`OutcomeSet::write_csv`], pairing it
    /// with its study spec. The chosen standard error is recovered from the
    /// `t` and `b` columns (`se = b / t`) when finite, else from `se_iid`.
    pub fn read_csv<R: std::io::Read>(spec: StudySpec, reader: R) -> Result<Self, OutcomeError> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let col = |name: &str| -> Result<usize, OutcomeError> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| OutcomeError::MissingColumn(name.to_string()))
        };
        let (ci, cb, cs_iid, cs_hac, ct, ca, cn, crss, cy, cst) = (
            col("path_index")?,
            col("b")?,
            col("se_iid")?,
            col("se_hac")?,
            col("t")?,
            col("aic")?,
            col("n")?,
            col("rss")?,
            col("yvar")?,
            col("status")?,
        );
        let mut outcomes = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize, field: &str| -> Result<f64, OutcomeError> {
                let v = &rec[i];
                if v.is_empty() {
                    return Ok(f64::NAN);
                }
                v.parse().map_err(|_| OutcomeError::BadField {
                    field: field.to_string(),
                    row,
                    value: v.to_string(),
                })
            };
            let effect = parse(cb, "b")?;
            let t_stat = parse(ct, "t")?;
            let se_iid = optional(parse(cs_iid, "se_iid")?);
            let se_hac = optional(parse(cs_hac, "se_hac")?);
            let se = if t_stat.is_finite() && t_stat != 0.0 && effect.is_finite() {
                effect / t_stat
            } else {
                se_iid.unwrap_or(f64::NAN)
            };
            outcomes.push(PathOutcome {
                path_index: rec[ci].parse().map_err(|_| OutcomeError::BadField {
                    field: "path_index".into(),
                    row,
                    value: rec[ci].to_string(),
                })?,
                effect,
                se,
                t_stat,
                aic: parse(ca, "aic")?,
                n: rec[cn].parse().unwrap_or(0),
                rss: parse(crss, "rss")?,
                yvar: parse(cy, "yvar")?,
                se_iid,
                se_hac,
                status: PathStatus::parse(&rec[cst]),
            });
        }
        Ok(OutcomeSet::new(spec, outcomes))
    }
}

fn optional(v: f64) -> Option<f64> {
    if v.is_nan() {
        None
    } else {
        Some(v)
    }
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Deterministic float formatting shared by all emitted files.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.12e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathgrid::StudySpec;

    fn toy_set() -> OutcomeSet {
        let spec = StudySpec::from_sizes(&[2, 2]);
        let outcomes = (0..4)
            .map(|i| PathOutcome {
                path_index: i,
                effect: i as f64,
                se: 1.0,
                t_stat: i as f64,
                aic: 10.0 + i as f64,
                n: 50,
                rss: 1.0,
                yvar: 2.0,
                se_iid: Some(1.0),
                se_hac: Some(1.5),
                status: PathStatus::Ok,
            })
            .collect();
        OutcomeSet::new(spec.clone(), outcomes)
    }

    #[test]
    fn query_by_layer_option() {
        let set = toy_set();
        let through = set.through("layer1", "o2").unwrap();
        assert_eq!(
            through.iter().map(|o| o.path_index).collect::<Vec<_>>(),
            vec![2, 3]
        );
        assert!(set.through("nope", "o1").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let set = toy_set();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let parsed = OutcomeSet::read_csv(set.spec.clone(), buf.as_slice()).unwrap();
        assert_eq!(parsed.outcomes.len(), 4);
        for (a, b) in set.outcomes.iter().zip(&parsed.outcomes) {
            assert_eq!(a.path_index, b.path_index);
            assert_eq!(a.effect, b.effect);
            assert_eq!(a.n, b.n);
            assert_eq!(a.status, b.status);
        }
    }
}
