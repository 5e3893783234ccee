//! Forking-paths engine for empirical finance protocols.
//!
//! A study is declared as an ordered stack of design layers, each with a
//! discrete set of options (winsorization thresholds, estimators, subsamples,
//! weighting schemes, ...). Every combination of options is one *path*; the
//! engine enumerates all of them, executes the study pipeline along each path,
//! and analyzes the resulting cloud of outcomes.
//!
//! The crate is organized around that life cycle:
//!
//! - [`pathgrid`]: layered option grids, path enumeration and indexing, path
//!   distances, and the combinatorics of the path correlation structure.
//! - [`datapanel`]: time-indexed data tables, CSV ingestion, and the data
//!   preparation transforms together with a Lipschitz-bound harness.
//! - [`regression`]: small dense OLS / HAC / augmented predictive-regression
//!   kernels plus the ten-layer equity-premium study executor.
//! - [`sorting`]: characteristic-sorted long-short portfolios and the
//!   seven-layer anomalies study executor.
//! - [`fmb`]: two-pass cross-sectional risk-premium estimation and its
//!   seven-layer study executor.
//! - [`averaging`]: frequentist (information-criterion) and Bayesian model
//!   averaging over path outcomes, with conditional layer-impact tests.
//! - [`mtesting`]: bootstrap reality check, block bootstrap, and the
//!   path-based (exhaustive) multiple-testing replacement.
//! - [`pathmetrics`]: hacking intervals, ease-to-confirm scoring, and
//!   p-curve based triage.
//! - [`simlab`]: Monte-Carlo validation of the correlated-path theory.
//! - [`synth`]: synthetic dataset generators in the supported file formats.

pub mod averaging;
pub mod datapanel;
pub mod fmb;
pub mod mtesting;
pub mod outcome;
pub mod pathgrid;
pub mod pathmetrics;
pub mod regression;
pub mod simlab;
pub mod sorting;
pub mod stats;
pub mod synth;

pub use outcome::{OutcomeSet, PathOutcome, PathStatus, StatusTally};
pub use pathgrid::{LayerSpec, PathAssignment, StudySpec};
