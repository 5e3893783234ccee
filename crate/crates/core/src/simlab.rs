//! Monte-Carlo validation of the correlated-path theory: the contaminated
//! data-generating process, the distance-driven correlation structure, and
//! the empirical-cdf convergence diagnostic.
//!
//! The generating process per path is
//!
//! ```text
//! Y_p = X_p (b_mean + a_p b_draw) + (1 - a_p) eps_p
//! bhat_p = (X_p'X_p)^{-1} X_p'Y_p = b_mean + a_p b_draw + (1 - a_p) e_p
//! ```
//!
//! with one shared effect draw `b_draw ~ N(0, sigma_b^2)` and per-path noise
//! projections `e_p` whose cross-path correlation is solved from the target
//! `Cor(bhat_p, bhat_q) = rho^{d(p,q)}` through
//! `Cor(bhat_p, bhat_q) = a_p a_q + (1-a_p)(1-a_q) Cor(e_p, e_q)`.
//! Infeasible (non-PSD) noise targets are rejected with the offending rho.
//!
//! For the convergence diagnostic the outcomes are standardized Gaussians
//! with correlation exactly `rho^{d(p,q)}`; that matrix is the Kronecker
//! product of per-layer compound-symmetry blocks, so sampling uses the
//! Kronecker factorization of its Cholesky and costs `O(P sum_j r_j)` per
//! world instead of `O(P^2)`.

use crate::pathgrid::{enumerate_paths, path_distance, sigma_norm, GridError, StudySpec};
use crate::stats;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimlabError {
    #[error("shrinkage must lie in [0, 1], got {0}")]
    BadShrinkage(f64),
    #[error("sample lengths must be at least 2, got {0}")]
    ShortSample(usize),
    #[error("{field} needs 1 or {paths} entries, got {got}")]
    BroadcastMismatch { field: &'static str, paths: usize, got: usize },
    #[error("noise correlation target infeasible (non-PSD) for rho = {0}")]
    NonPsdTarget(f64),
    #[error("correlation parameter {0} outside [0, 1)")]
    BadRho(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Configuration of the contaminated generating process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgpConfig {
    /// Mean effect.
    pub mean_effect: f64,
    /// Standard deviation of the shared random effect.
    pub effect_sd: f64,
    /// Per-path shrinkage intensity in [0, 1]; length 1 broadcasts.
    pub shrinkage: Vec<f64>,
    /// Per-path regression sample length; length 1 broadcasts.
    pub sample_lengths: Vec<usize>,
    /// Noise scale of the per-path projections.
    pub noise_sd: f64,
    /// Target correlation decay parameter.
    pub rho: f64,
    pub seed: u64,
}

/// One simulated world: regression samples, per-path estimates, and the
/// latent draws behind them.
#[derive(Debug, Clone)]
pub struct PathWorld {
    pub estimates: Vec<f64>,
    pub shared_effect: f64,
    pub noise: Vec<f64>,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
}

fn broadcast<T: Copy>(values: &[T], paths: usize, field: &'static str) -> Result<Vec<T>, SimlabError> {
    match values.len() {
        1 => Ok(vec![values[0]; paths]),
        n if n == paths => Ok(values.to_vec()),
        got => Err(SimlabError::BroadcastMismatch { field, paths, got }),
    }
}

/// Noise correlation solved so the estimate correlation hits `rho^d`
/// exactly:
///
/// ```text
/// Cor(bhat_p, bhat_q) = [a_p a_q s_b^2 + (1-a_p)(1-a_q) Cov(e_p, e_q)]
///                       / sqrt(V_p V_q),
/// V_p = a_p^2 s_b^2 + (1-a_p)^2 s_e^2
/// ```
///
/// inverted for `Cor(e_p, e_q) = Cov / s_e^2`. At distance zero this yields
/// 1 identically; paths with full shrinkage carry no noise and get 0.
fn noise_correlation(rho_d: f64, a_p: f64, a_q: f64, sigma_b: f64, sigma_e: f64) -> f64 {
    let scale = (1.0 - a_p) * (1.0 - a_q) * sigma_e * sigma_e;
    if scale == 0.0 {
        return 0.0;
    }
    let var = |a: f64| a * a * sigma_b * sigma_b + (1.0 - a) * (1.0 - a) * sigma_e * sigma_e;
    (rho_d * (var(a_p) * var(a_q)).sqrt() - a_p * a_q * sigma_b * sigma_b) / scale
}

/// Simulate one world of the generating process over the spec's paths.
pub fn simulate_paths(config: &DgpConfig, spec: &StudySpec) -> Result<PathWorld, SimlabError> {
    simulate_paths_with_stream(config, spec, 0)
}

/// Same as [`simulate_paths`] with an explicit world index; worlds are
/// independent RNG streams of the same seed.
pub fn simulate_paths_with_stream(
    config: &DgpConfig,
    spec: &StudySpec,
    world: u64,
) -> Result<PathWorld, SimlabError> {
    if !(0.0..1.0).contains(&config.rho) {
        return Err(SimlabError::BadRho(config.rho));
    }
    let paths = enumerate_paths(spec)?;
    let p_count = paths.len();
    let alphas = broadcast(&config.shrinkage, p_count, "shrinkage")?;
    if let Some(&a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(SimlabError::BadShrinkage(a));
    }
    let lengths = broadcast(&config.sample_lengths, p_count, "sample_lengths")?;
    if let Some(&n) = lengths.iter().find(|&&n| n < 2) {
        return Err(SimlabError::ShortSample(n));
    }

    // noise correlation matrix from the pairwise targets
    let mut corr = DMatrix::identity(p_count, p_count);
    for i in 0..p_count {
        for j in i + 1..p_count {
            let d = path_distance(&paths[i], &paths[j]).expect("same spec");
            let c = noise_correlation(
                config.rho.powi(d as i32),
                alphas[i],
                alphas[j],
                config.effect_sd,
                config.noise_sd,
            );
            corr[(i, j)] = c;
            corr[(j, i)] = c;
        }
    }
    let chol = Cholesky::new(corr).ok_or(SimlabError::NonPsdTarget(config.rho))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(world.wrapping_add(1));
    let gauss = Normal::new(0.0, 1.0).unwrap();
    let shared_effect = config.effect_sd * gauss.sample(&mut rng);
    let g = DVector::from_fn(p_count, |_, _| gauss.sample(&mut rng));
    let noise: Vec<f64> = (chol.l() * g).iter().map(|v| v * config.noise_sd).collect();

    let mut xs = Vec::with_capacity(p_count);
    let mut ys = Vec::with_capacity(p_count);
    let mut estimates = Vec::with_capacity(p_count);
    for p in 0..p_count {
        let n = lengths[p];
        let x: Vec<f64> = (0..n).map(|_| gauss.sample(&mut rng)).collect();
        let raw: Vec<f64> = (0..n).map(|_| config.noise_sd * gauss.sample(&mut rng)).collect();
        // project the raw disturbance off x so the slope picks up exactly
        // the targeted e_p, then add it back along x
        let xx: f64 = x.iter().map(|v| v * v).sum();
        let xraw: f64 = x.iter().zip(&raw).map(|(a, b)| a * b).sum();
        let slope_b = config.mean_effect + alphas[p] * shared_effect;
        let y: Vec<f64> = x
            .iter()
            .zip(&raw)
            .map(|(xv, rv)| {
                let orth = rv - xv * (xraw / xx);
                slope_b * xv + (1.0 - alphas[p]) * (xv * noise[p] + orth)
            })
            .collect();
        let xy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        estimates.push(xy / xx);
        xs.push(x);
        ys.push(y);
    }
    Ok(PathWorld { estimates, shared_effect, noise, xs, ys })
}

/// Per-path estimates across many independent worlds (rows = worlds).
pub fn simulate_estimate_worlds(
    config: &DgpConfig,
    spec: &StudySpec,
    worlds: usize,
) -> Result<Vec<Vec<f64>>, SimlabError> {
    (0..worlds as u64)
        .into_par_iter()
        .map(|w| simulate_paths_with_stream(config, spec, w).map(|pw| pw.estimates))
        .collect()
}

// ---------------------------------------------------------------------------
// Kronecker sampler and the convergence diagnostic
// ---------------------------------------------------------------------------

/// Cholesky factors of the per-layer compound-symmetry blocks
/// `(1-rho) I + rho J`, whose Kronecker product is the path correlation
/// matrix under `Cor(p,q) = rho^{d(p,q)}`.
struct KroneckerChol {
    factors: Vec<DMatrix<f64>>,
    sizes: Vec<usize>,
}

impl KroneckerChol {
    fn new(spec: &StudySpec, rho: f64) -> Result<Self, SimlabError> {
        if !(0.0..1.0).contains(&rho) {
            return Err(SimlabError::BadRho(rho));
        }
        let sizes = spec.layer_sizes();
        let factors = sizes
            .iter()
            .map(|&r| {
                let block = DMatrix::from_fn(r, r, |i, j| if i == j { 1.0 } else { rho });
                Cholesky::new(block)
                    .map(|c| c.l())
                    .ok_or(SimlabError::NonPsdTarget(rho))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(KroneckerChol { factors, sizes })
    }

    /// In-place multiply `(L_1 kron ... kron L_J) z` for a flat tensor in
    /// mixed-radix layout (first layer most significant).
    fn apply(&self, z: &mut [f64]) {
        let total = z.len();
        let mut inner = total;
        let mut scratch = vec![0.0f64; self.sizes.iter().copied().max().unwrap_or(1)];
        for (l, layer_size) in self.sizes.iter().enumerate() {
            let r = *layer_size;
            inner /= r;
            let outer = total / (r * inner);
            let fac = &self.factors[l];
            for o in 0..outer {
                let block = o * r * inner;
                for i in 0..inner {
                    for (k, slot) in scratch.iter_mut().take(r).enumerate() {
                        *slot = z[block + k * inner + i];
                    }
                    for row in 0..r {
                        let mut acc = 0.0;
                        for col in 0..=row {
                            acc += fac[(row, col)] * scratch[col];
                        }
                        z[block + row * inner + i] = acc;
                    }
                }
            }
        }
    }
}

/// Result of the empirical-cdf convergence experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub path_count: u64,
    pub worlds: usize,
    pub rho: f64,
    /// `sup_x mean_w (Phi(x) - Fhat_w(x))^2` over the evaluation grid.
    pub sup_mse: f64,
    /// Grid point attaining the supremum.
    pub sup_at: f64,
    /// Monte-Carlo standard error of the mean at that point.
    pub mc_se_at_sup: f64,
    /// `1 / (4P)`.
    pub dkw_term: f64,
    /// Mean absolute correlation of the path outcome matrix (closed form).
    pub sigma_norm: f64,
    /// Reference bound `1/(4P) + sigma_norm` (unknown constant taken as 1).
    pub bound: f64,
}

/// Estimate the uniform mean-squared gap between the standard normal cdf and
/// the empirical cdf of the `P` correlated path outcomes, across `worlds`
/// independent worlds, and report it next to the analytic reference bound.
pub fn convergence_diagnostic(
    spec: &StudySpec,
    rho: f64,
    worlds: usize,
    seed: u64,
) -> Result<ConvergenceReport, SimlabError> {
    spec.validate()?;
    let chol = KroneckerChol::new(spec, rho)?;
    let p_count = spec.path_count() as usize;
    let grid: Vec<f64> = (0..=120).map(|i| -3.0 + i as f64 * 0.05).collect();
    let phi: Vec<f64> = grid.iter().map(|&x| stats::normal_cdf(x)).collect();

    let (sum, sumsq) = (0..worlds as u64)
        .into_par_iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(w.wrapping_add(1));
            let gauss = Normal::new(0.0, 1.0).unwrap();
            let mut z: Vec<f64> = (0..p_count).map(|_| gauss.sample(&mut rng)).collect();
            chol.apply(&mut z);
            z.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut sum = vec![0.0f64; grid.len()];
            let mut sumsq = vec![0.0f64; grid.len()];
            for (i, &x) in grid.iter().enumerate() {
                let count = z.partition_point(|&v| v <= x);
                let gap = phi[i] - count as f64 / p_count as f64;
                sum[i] = gap * gap;
                sumsq[i] = gap * gap * gap * gap;
            }
            (sum, sumsq)
        })
        .reduce(
            || (vec![0.0; grid.len()], vec![0.0; grid.len()]),
            |(mut a, mut b), (x, y)| {
                for i in 0..a.len() {
                    a[i] += x[i];
                    b[i] += y[i];
                }
                (a, b)
            },
        );

    let w = worlds as f64;
    let mut sup_mse = 0.0;
    let mut sup_at = grid[0];
    let mut mc_se = 0.0;
    for (i, &x) in grid.iter().enumerate() {
        let mean = sum[i] / w;
        if mean > sup_mse {
            sup_mse = mean;
            sup_at = x;
            let var = (sumsq[i] / w - mean * mean).max(0.0);
            mc_se = (var / w).sqrt();
        }
    }
    let norm = sigma_norm(spec, rho)?;
    Ok(ConvergenceReport {
        path_count: spec.path_count(),
        worlds,
        rho,
        sup_mse,
        sup_at,
        mc_se_at_sup: mc_se,
        dkw_term: 0.25 / spec.path_count() as f64,
        sigma_norm: norm,
        bound: 0.25 / spec.path_count() as f64 + norm,
    })
}
