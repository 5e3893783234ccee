//! Layered option grids: study protocols, path enumeration and indexing,
//! path distances, and the combinatorics of the path correlation structure.
//!
//! A protocol with `J` layers of sizes `r_1, ..., r_J` makes `P = prod r_j`
//! paths. Paths are indexed in mixed radix with the first layer most
//! significant, so index 0 is the path taking the first option everywhere and
//! index `P-1` takes the last option everywhere. Constraints mark assignments
//! as infeasible without removing them from the enumeration, which keeps
//! nominal counts equal to the product while executors skip the flagged
//! paths.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("layer `{0}` needs at least 2 options")]
    TooFewOptions(String),
    #[error("duplicate option `{option}` in layer `{layer}`")]
    DuplicateOption { layer: String, option: String },
    #[error("duplicate layer name `{0}`")]
    DuplicateLayer(String),
    #[error("constraint references unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("constraint references unknown option `{option}` in layer `{layer}`")]
    UnknownOption { layer: String, option: String },
    #[error("paths come from different study grids")]
    MismatchedSpecs,
    #[error("expected {expected} layer weights, got {got}")]
    WeightCountMismatch { expected: usize, got: usize },
    #[error("negative layer weight at layer {0}")]
    NegativeWeight(usize),
    #[error("correlation parameter {0} outside [0, 1]")]
    RhoOutOfRange(f64),
    #[error("path index {index} out of range (P = {total})")]
    IndexOutOfRange { index: u64, total: u64 },
}

/// One protocol stage with its discrete options.
///
/// Option identifiers are unique within the layer; each option may carry a
/// free-form JSON payload that executors interpret (a threshold, a window
/// descriptor, an estimator switch, ...).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub options: Vec<OptionSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OptionSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub payload: serde_json::Value,
}

impl OptionSpec {
    pub fn bare(id: &str) -> Self {
        OptionSpec { id: id.to_string(), payload: serde_json::Value::Null }
    }

    pub fn with_payload(id: &str, payload: serde_json::Value) -> Self {
        OptionSpec { id: id.to_string(), payload }
    }
}

impl LayerSpec {
    pub fn new(name: &str, options: &[&str]) -> Self {
        LayerSpec {
            name: name.to_string(),
            options: options.iter().map(|o| OptionSpec::bare(o)).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.options.len()
    }

    pub fn option_index(&self, id: &str) -> Option<usize> {
        self.options.iter().position(|o| o.id == id)
    }
}

/// A conjunction of `(layer, option)` requirements; an assignment matching
/// every requirement is infeasible.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Constraint {
    #[serde(default)]
    pub name: String,
    /// All of these `(layer, option)` pairs must hold for the constraint to fire.
    pub all_of: Vec<(String, String)>,
}

/// The protocol grid: ordered layers, infeasibility constraints, and optional
/// per-layer weights for the weighted path distance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StudySpec {
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
    /// One non-negative weight per layer; `None` means unit weights.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_weights: Option<Vec<f64>>,
}

/// One concrete choice per layer.
///
/// `index` is the mixed-radix encoding of the per-layer option indices with
/// the first layer most significant; it round-trips exactly with `choices`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PathAssignment {
    pub index: u64,
    /// Option index per layer, in layer order.
    pub choices: Vec<usize>,
    pub feasible: bool,
}

/// Internal compiled form of a constraint: (layer index, option index) pairs.
#[derive(Debug, Clone)]
struct CompiledConstraint {
    requires: Vec<(usize, usize)>,
}

impl StudySpec {
    pub fn new(layers: Vec<LayerSpec>) -> Self {
        StudySpec { layers, constraints: Vec::new(), layer_weights: None }
    }

    /// Build a spec from bare layer sizes (options named `o1`, `o2`, ...).
    pub fn from_sizes(sizes: &[usize]) -> Self {
        let layers = sizes
            .iter()
            .enumerate()
            .map(|(j, &r)| LayerSpec {
                name: format!("layer{}", j + 1),
                options: (1..=r).map(|i| OptionSpec::bare(&format!("o{i}"))).collect(),
            })
            .collect();
        StudySpec::new(layers)
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.size()).collect()
    }

    /// Nominal path count `P = prod r_j`.
    pub fn path_count(&self) -> u64 {
        self.layers.iter().map(|l| l.size() as u64).product()
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Validate layer sizes, identifier uniqueness, constraint references,
    /// and weights.
    pub fn validate(&self) -> Result<(), GridError> {
        let mut seen_layers = HashSet::new();
        for layer in &self.layers {
            if layer.options.len() < 2 {
                return Err(GridError::TooFewOptions(layer.name.clone()));
            }
            if !seen_layers.insert(layer.name.clone()) {
                return Err(GridError::DuplicateLayer(layer.name.clone()));
            }
            let mut seen = HashSet::new();
            for opt in &layer.options {
                if !seen.insert(opt.id.clone()) {
                    return Err(GridError::DuplicateOption {
                        layer: layer.name.clone(),
                        option: opt.id.clone(),
                    });
                }
            }
        }
        for c in &self.constraints {
            for (layer, option) in &c.all_of {
                let Some(li) = self.layer_index(layer) else {
                    return Err(GridError::UnknownLayer(layer.clone()));
                };
                if self.layers[li].option_index(option).is_none() {
                    return Err(GridError::UnknownOption {
                        layer: layer.clone(),
                        option: option.clone(),
                    });
                }
            }
        }
        if let Some(w) = &self.layer_weights {
            if w.len() != self.layers.len() {
                return Err(GridError::WeightCountMismatch {
                    expected: self.layers.len(),
                    got: w.len(),
                });
            }
            if let Some(j) = w.iter().position(|&x| x < 0.0) {
                return Err(GridError::NegativeWeight(j));
            }
        }
        Ok(())
    }

    fn compile_constraints(&self) -> Vec<CompiledConstraint> {
        self.constraints
            .iter()
            .map(|c| CompiledConstraint {
                requires: c
                    .all_of
                    .iter()
                    .map(|(layer, option)| {
                        let li = self.layer_index(layer).expect("validated");
                        let oi = self.layers[li].option_index(option).expect("validated");
                        (li, oi)
                    })
                    .collect(),
            })
            .collect()
    }

    fn feasible_choices(&self, compiled: &[CompiledConstraint], choices: &[usize]) -> bool {
        !compiled
            .iter()
            .any(|c| c.requires.iter().all(|&(li, oi)| choices[li] == oi))
    }

    /// Decode a mixed-radix path index into per-layer option indices.
    pub fn decode_index(&self, index: u64) -> Result<Vec<usize>, GridError> {
        let total = self.path_count();
        if index >= total {
            return Err(GridError::IndexOutOfRange { index, total });
        }
        let sizes = self.layer_sizes();
        let mut rem = index;
        let mut choices = vec![0usize; sizes.len()];
        for j in (0..sizes.len()).rev() {
            let r = sizes[j] as u64;
            choices[j] = (rem % r) as usize;
            rem /= r;
        }
        Ok(choices)
    }

    /// Encode per-layer option indices into the mixed-radix path index.
    pub fn encode_choices(&self, choices: &[usize]) -> u64 {
        debug_assert_eq!(choices.len(), self.layers.len());
        let mut index = 0u64;
        for (j, &c) in choices.iter().enumerate() {
            index = index * self.layers[j].size() as u64 + c as u64;
        }
        index
    }

    /// Build the assignment at `index`, with its feasibility flag.
    pub fn assignment(&self, index: u64) -> Result<PathAssignment, GridError> {
        let choices = self.decode_index(index)?;
        let compiled = self.compile_constraints();
        let feasible = self.feasible_choices(&compiled, &choices);
        Ok(PathAssignment { index, choices, feasible })
    }

    /// Option ids chosen by `path`, in layer order.
    pub fn choice_ids(&self, path: &PathAssignment) -> Vec<&str> {
        path.choices
            .iter()
            .enumerate()
            .map(|(j, &c)| self.layers[j].options[c].id.as_str())
            .collect()
    }

    /// Payload of the option chosen at `layer` by `path`.
    pub fn payload<'a>(&'a self, path: &PathAssignment, layer: &str) -> &'a serde_json::Value {
        let li = self.layer_index(layer).expect("unknown layer");
        &self.layers[li].options[path.choices[li]].payload
    }

    /// Read the spec from its JSON config form.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Enumerate all `prod r_j` assignments in index order, flagging each as
/// feasible or infeasible. Deterministic.
pub fn enumerate_paths(spec: &StudySpec) -> Result<Vec<PathAssignment>, GridError> {
    spec.validate()?;
    let compiled = spec.compile_constraints();
    let total = spec.path_count();
    let sizes = spec.layer_sizes();
    let mut out = Vec::with_capacity(total as usize);
    let mut choices = vec![0usize; sizes.len()];
    for index in 0..total {
        let feasible = spec.feasible_choices(&compiled, &choices);
        out.push(PathAssignment { index, choices: choices.clone(), feasible });
        // odometer increment, last layer fastest
        for j in (0..sizes.len()).rev() {
            choices[j] += 1;
            if choices[j] < sizes[j] {
                break;
            }
            choices[j] = 0;
        }
    }
    Ok(out)
}

/// Number of layers at which two paths choose different options.
pub fn path_distance(p: &PathAssignment, q: &PathAssignment) -> Result<u32, GridError> {
    if p.choices.len() != q.choices.len() {
        return Err(GridError::MismatchedSpecs);
    }
    Ok(p.choices
        .iter()
        .zip(&q.choices)
        .filter(|(a, b)| a != b)
        .count() as u32)
}

/// Weighted mismatch distance `sum_j w_j 1{choices differ at j}`.
pub fn weighted_path_distance(
    p: &PathAssignment,
    q: &PathAssignment,
    weights: &[f64],
) -> Result<f64, GridError> {
    if p.choices.len() != q.choices.len() {
        return Err(GridError::MismatchedSpecs);
    }
    if weights.len() != p.choices.len() {
        return Err(GridError::WeightCountMismatch {
            expected: p.choices.len(),
            got: weights.len(),
        });
    }
    if let Some(j) = weights.iter().position(|&w| w < 0.0) {
        return Err(GridError::NegativeWeight(j));
    }
    Ok(p.choices
        .iter()
        .zip(&q.choices)
        .zip(weights)
        .filter(|((a, b), _)| a != b)
        .map(|(_, &w)| w)
        .sum())
}

/// Coefficients of `prod_j (1 + x_j t)`: entry `d` is the elementary
/// symmetric polynomial `e_d(x_1, ..., x_J)`.
fn elementary_symmetric(xs: &[f64]) -> Vec<f64> {
    let mut coeffs = vec![0.0; xs.len() + 1];
    coeffs[0] = 1.0;
    for (j, &x) in xs.iter().enumerate() {
        for d in (1..=j + 1).rev() {
            coeffs[d] += x * coeffs[d - 1];
        }
    }
    coeffs
}

/// Distance census relative to any fixed reference path: for each distance
/// `d`, the number of paths at that distance. The count is independent of the
/// reference, equals `e_d(r_1 - 1, ..., r_J - 1)` for `d >= 1`, is 1 at
/// `d = 0`, and sums to `prod r_j`.
pub fn distance_census(spec: &StudySpec) -> Result<BTreeMap<u32, u64>, GridError> {
    spec.validate()?;
    let xs: Vec<f64> = spec.layers.iter().map(|l| (l.size() - 1) as f64).collect();
    let coeffs = elementary_symmetric(&xs);
    Ok(coeffs
        .iter()
        .enumerate()
        .map(|(d, &c)| (d as u32, c.round() as u64))
        .collect())
}

/// Mean absolute entry of the path correlation matrix under the model
/// `Cor(p, q) = rho^{d(p,q)}`:
///
/// ```text
/// ||Sigma_P||_1 = prod_j (1 + rho (r_j - 1)) / r_j
/// ```
///
/// Requires `rho` in [0, 1); `rho = 1` is admitted as the exact degenerate
/// case where every entry is 1.
pub fn sigma_norm(spec: &StudySpec, rho: f64) -> Result<f64, GridError> {
    spec.validate()?;
    if rho == 1.0 {
        return Ok(1.0);
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(GridError::RhoOutOfRange(rho));
    }
    Ok(spec
        .layers
        .iter()
        .map(|l| {
            let r = l.size() as f64;
            (1.0 + rho * (r - 1.0)) / r
        })
        .product())
}
