//! Gaussian mixture model over vectorised patches.
//!
//! Every component keeps an eigendecomposition `Σ = V diag(λ) Vᵀ` alongside
//! its covariance, so densities under `Σ + s·I` and the Wiener gain
//! `Σ (Σ + s·I)⁻¹` cost one projection onto `V` and a per-eigenvalue shift.
//! Batched routines work on row-major patch matrices (one patch per row) in
//! fixed-size row chunks; each row's result is independent of the chunking and
//! of the thread count, so parallel and sequential runs agree bitwise.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows per work unit in batched E-steps and MMSE estimates.
pub(crate) const CHUNK_ROWS: usize = 2048;

const WEIGHT_SUM_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;
const DEGENERATE_MASS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Stop when the relative change of the training log-likelihood drops
    /// below this value.
    pub tolerance: f64,
    /// Lower bound enforced on every covariance eigenvalue.
    pub variance_floor: f64,
    pub seed: u64,
    /// Pin every component mean at the origin (for DC-removed patches).
    pub zero_mean: bool,
    /// Number of patches used for k-means++ seeding.
    pub init_subsample: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-6,
            variance_floor: 1e-4,
            seed: 0,
            zero_mean: false,
            init_subsample: 20_000,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0
            || !(self.tolerance > 0.0)
            || !(self.variance_floor > 0.0)
            || self.init_subsample == 0
        {
            return Err(Error::InvalidArgument(format!(
                "EM configuration fields must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Component {
    weight: f64,
    mean: Array1<f64>,
    covariance: Array2<f64>,
    eigenvalues: Array1<f64>,
    /// Orthonormal eigenvectors stored as columns.
    eigenvectors: Array2<f64>,
}

impl Component {
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> ArrayView1<'_, f64> {
        self.mean.view()
    }

    pub fn covariance(&self) -> ArrayView2<'_, f64> {
        self.covariance.view()
    }

    pub fn eigenvalues(&self) -> ArrayView1<'_, f64> {
        self.eigenvalues.view()
    }

    pub fn eigenvectors(&self) -> ArrayView2<'_, f64> {
        self.eigenvectors.view()
    }

    /// `(Z − μ) V` for a block of patches.
    fn project(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        let centered = &z - &self.mean.view().insert_axis(Axis(0));
        centered.dot(&self.eigenvectors)
    }

    /// `log w + log N(z; μ, Σ + s·I)` for each row given its projection.
    fn log_weighted_density(&self, projected: &Array2<f64>, noise_variance: f64) -> Array1<f64> {
        let d = self.eigenvalues.len() as f64;
        let inv: Array1<f64> = self.eigenvalues.mapv(|l| 1.0 / (l + noise_variance));
        let log_det: f64 = self.eigenvalues.iter().map(|l| (l + noise_variance).ln()).sum();
        let constant = self.weight.ln() - 0.5 * (d * (2.0 * PI).ln() + log_det);
        projected
            .rows()
            .into_iter()
            .map(|row| {
                let quad: f64 = row.iter().zip(inv.iter()).map(|(p, i)| p * p * i).sum();
                constant - 0.5 * quad
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct GmmModel {
    dim: usize,
    components: Vec<Component>,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn symmetrize(m: &Array2<f64>) -> Array2<f64> {
    (m + &m.t()) * 0.5
}

fn eigh_sorted(sym: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    crate::linalg::sym_eigen(sym)
}

fn reconstruct(eigenvalues: &Array1<f64>, eigenvectors: &Array2<f64>) -> Array2<f64> {
    let scaled = eigenvectors * &eigenvalues.view().insert_axis(Axis(0));
    symmetrize(&scaled.dot(&eigenvectors.t()))
}

fn ensure_finite(z: ArrayView2<'_, f64>, what: &str) -> Result<()> {
    if z.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

impl GmmModel {
    /// Builds and validates a model from raw parameters; eigendecompositions
    /// are computed here.
    pub fn new(weights: Vec<f64>, means: Vec<Array1<f64>>, covariances: Vec<Array2<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvariantViolation("model has no components".into()));
        }
        if means.len() != k || covariances.len() != k {
            return Err(Error::InvariantViolation(format!(
                "{k} weights but {} means and {} covariances",
                means.len(),
                covariances.len()
            )));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::InvariantViolation("zero-dimensional model".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvariantViolation("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvariantViolation(format!("weights sum to {total}, not 1")));
        }
        let mut components = Vec::with_capacity(k);
        for (idx, ((weight, mean), cov)) in weights.into_iter().zip(means).zip(covariances).enumerate() {
            if mean.len() != dim || cov.dim() != (dim, dim) {
                return Err(Error::InvariantViolation(format!("component {idx} has inconsistent dimensions")));
            }
            if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvariantViolation(format!("component {idx} has non-finite parameters")));
            }
            let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            let asym = (&cov - &cov.t()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if asym > SYMMETRY_TOL * scale {
                return Err(Error::InvariantViolation(format!("covariance {idx} is not symmetric")));
            }
            let covariance = symmetrize(&cov);
            let (eigenvalues, eigenvectors) = eigh_sorted(&covariance)?;
            if eigenvalues.iter().any(|&l| !(l > 0.0)) {
                return Err(Error::InvariantViolation(format!(
                    "covariance {idx} is not positive definite"
                )));
            }
            components.push(Component {
                weight,
                mean,
                covariance,
                eigenvalues,
                eigenvectors,
            });
        }
        Ok(Self { dim, components })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    fn check_dim(&self, cols: usize) -> Result<()> {
        if cols != self.dim {
            return Err(Error::shape(format!("patch dimension {}", self.dim), format!("{cols}")));
        }
        Ok(())
    }

    /// `n × K` matrix of `log w_k + log N(z_i; μ_k, Σ_k + s·I)`.
    fn log_weighted_densities(&self, z: ArrayView2<'_, f64>, noise_variance: f64) -> Array2<f64> {
        let mut out = Array2::zeros((z.nrows(), self.components.len()));
        for (k, comp) in self.components.iter().enumerate() {
            let projected = comp.project(z);
            out.column_mut(k).assign(&comp.log_weighted_density(&projected, noise_variance));
        }
        out
    }

    /// Sum over rows of `log Σ_k w_k N(z; μ_k, Σ_k)`.
    pub fn log_likelihood(&self, patches: ArrayView2<'_, f64>) -> Result<f64> {
        self.check_dim(patches.ncols())?;
        let per_chunk: Vec<f64> = patches
            .axis_chunks_iter(Axis(0), CHUNK_ROWS)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|chunk| {
                let logp = self.log_weighted_densities(chunk, 0.0);
                logp.rows()
                    .into_iter()
                    .map(|r| log_sum_exp(r.iter().copied()))
                    .sum::<f64>()
            })
            .collect();
        Ok(per_chunk.iter().sum())
    }

    /// Posterior component probabilities of a single patch observed in white
    /// noise of variance `noise_variance`.
    pub fn noisy_responsibilities(&self, noisy_patch: &[f64], noise_variance: f64) -> Result<Vec<f64>> {
        self.check_dim(noisy_patch.len())?;
        if noisy_patch.iter().any(|v| !v.is_finite()) || !noise_variance.is_finite() || noise_variance < 0.0 {
            return Err(Error::NonFinite("noisy patch or noise variance".into()));
        }
        let z = ArrayView2::from_shape((1, self.dim), noisy_patch).expect("shape checked");
        let logp = self.log_weighted_densities(z, noise_variance);
        Ok(normalize_log_row(logp.row(0)).to_vec())
    }

    /// Closed-form posterior mean of the clean patch for every row of `noisy`.
    pub fn mmse_batch(&self, noisy: ArrayView2<'_, f64>, noise_variance: f64) -> Result<Array2<f64>> {
        self.check_dim(noisy.ncols())?;
        if !noise_variance.is_finite() || noise_variance < 0.0 {
            return Err(Error::InvalidArgument(format!("noise variance {noise_variance}")));
        }
        ensure_finite(noisy, "noisy patches")?;
        let blocks: Vec<Array2<f64>> = noisy
            .axis_chunks_iter(Axis(0), CHUNK_ROWS)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|chunk| self.mmse_chunk(chunk, noise_variance))
            .collect();
        let mut out = Array2::zeros(noisy.raw_dim());
        let mut row = 0;
        for block in blocks {
            let n = block.nrows();
            out.slice_mut(s![row..row + n, ..]).assign(&block);
            row += n;
        }
        Ok(out)
    }

    fn mmse_chunk(&self, z: ArrayView2<'_, f64>, noise_variance: f64) -> Array2<f64> {
        let projections: Vec<Array2<f64>> = self.components.iter().map(|c| c.project(z)).collect();
        let mut logp = Array2::zeros((z.nrows(), self.components.len()));
        for (k, (comp, proj)) in self.components.iter().zip(&projections).enumerate() {
            logp.column_mut(k)
                .assign(&comp.log_weighted_density(proj, noise_variance));
        }
        let beta = normalize_log_rows(&logp);
        let mut out = Array2::zeros(z.raw_dim());
        for (k, (comp, mut proj)) in self.components.iter().zip(projections).enumerate() {
            let gain = comp.eigenvalues.mapv(|l| l / (l + noise_variance));
            proj *= &gain.view().insert_axis(Axis(0));
            proj *= &beta.column(k).insert_axis(Axis(1));
            out += &proj.dot(&comp.eigenvectors.t());
            out += &(&beta.column(k).insert_axis(Axis(1)) * &comp.mean.view().insert_axis(Axis(0)));
        }
        out
    }

    /// Closed-form posterior mean of a single patch.
    pub fn mmse_patch(&self, noisy: &[f64], noise_variance: f64) -> Result<Vec<f64>> {
        self.check_dim(noisy.len())?;
        let z = ArrayView2::from_shape((1, self.dim), noisy).expect("shape checked");
        Ok(self.mmse_batch(z, noise_variance)?.into_raw_vec())
    }
}

fn normalize_log_row(row: ArrayView1<'_, f64>) -> Array1<f64> {
    let lse = log_sum_exp(row.iter().copied());
    row.mapv(|v| (v - lse).exp())
}

fn normalize_log_rows(logp: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(logp.raw_dim());
    for (src, mut dst) in logp.rows().into_iter().zip(out.rows_mut()) {
        dst.assign(&normalize_log_row(src));
    }
    out
}

/// Stacks equal-length patch vectors into an `n × d` matrix.
pub fn patch_matrix(patches: &[Vec<f64>]) -> Result<Array2<f64>> {
    let d = patches.first().map(Vec::len).unwrap_or(0);
    if patches.iter().any(|p| p.len() != d) {
        return Err(Error::shape(format!("patches of length {d}"), "ragged patch list"));
    }
    let flat: Vec<f64> = patches.iter().flatten().copied().collect();
    Array2::from_shape_vec((patches.len(), d), flat).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Result of an EM run together with its convergence trace.
#[derive(Debug, Clone)]
pub struct EmOutcome {
    pub model: GmmModel,
    /// Training log-likelihood of each successive parameter set, the last
    /// entry belonging to the returned model.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
    /// Number of components re-seeded after collapsing.
    pub reseeded: usize,
}

/// Maximum-likelihood fit of a `k`-component full-covariance mixture.
pub fn em_fit(patches: ArrayView2<'_, f64>, k: usize, config: &EmConfig) -> Result<GmmModel> {
    em_fit_traced(patches, k, config).map(|o| o.model)
}

pub fn em_fit_traced(patches: ArrayView2<'_, f64>, k: usize, config: &EmConfig) -> Result<EmOutcome> {
    config.validate()?;
    if k < 1 {
        return Err(Error::InvalidArgument("mixture needs at least one component".into()));
    }
    let (n, d) = patches.dim();
    if d == 0 {
        return Err(Error::InvalidArgument("zero-dimensional patches".into()));
    }
    if n < k * d {
        return Err(Error::TooFewPatches { needed: k * d, got: n });
    }
    ensure_finite(patches, "training patches")?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = initialize(patches, k, config, &mut rng)?;
    let mut log_likelihoods = Vec::new();
    let mut converged = false;
    let mut reseeded = 0;

    for _ in 0..config.max_iterations {
        let (resp, ll, row_ll) = e_step(&model, patches);
        if let Some(&prev) = log_likelihoods.last() {
            log_likelihoods.push(ll);
            if ((ll - prev) / f64::abs(prev)).abs() < config.tolerance {
                converged = true;
                break;
            }
        } else {
            log_likelihoods.push(ll);
        }
        let (next, n_reseeded) = m_step(patches, &resp, &row_ll, config)?;
        reseeded += n_reseeded;
        model = next;
    }
    if !converged {
        log_likelihoods.push(model.log_likelihood(patches)?);
    }
    Ok(EmOutcome {
        model,
        log_likelihoods,
        converged,
        reseeded,
    })
}

/// Responsibilities, total log-likelihood and per-row log-likelihood.
fn e_step(model: &GmmModel, z: ArrayView2<'_, f64>) -> (Array2<f64>, f64, Array1<f64>) {
    let blocks: Vec<(Array2<f64>, Array1<f64>)> = z
        .axis_chunks_iter(Axis(0), CHUNK_ROWS)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|chunk| {
            let logp = model.log_weighted_densities(chunk, 0.0);
            let lse: Array1<f64> = logp.rows().into_iter().map(|r| log_sum_exp(r.iter().copied())).collect();
            let resp = (&logp - &lse.view().insert_axis(Axis(1))).mapv(f64::exp);
            (resp, lse)
        })
        .collect();
    let mut resp = Array2::zeros((z.nrows(), model.num_components()));
    let mut row_ll = Array1::zeros(z.nrows());
    let mut total = 0.0;
    let mut row = 0;
    for (r, l) in blocks {
        let m = r.nrows();
        resp.slice_mut(s![row..row + m, ..]).assign(&r);
        row_ll.slice_mut(s![row..row + m]).assign(&l);
        total += l.sum();
        row += m;
    }
    (resp, total, row_ll)
}

/// Sample mean/second-moment statistics of one component, floored.
fn weighted_gaussian(
    z: ArrayView2<'_, f64>,
    weights: ArrayView1<'_, f64>,
    mass: f64,
    config: &EmConfig,
) -> Result<(Array1<f64>, Array2<f64>, Array1<f64>, Array2<f64>)> {
    let d = z.ncols();
    let mean = if config.zero_mean {
        Array1::zeros(d)
    } else {
        weights.dot(&z) / mass
    };
    let centered = &z - &mean.view().insert_axis(Axis(0));
    let weighted = &centered * &weights.insert_axis(Axis(1));
    let scatter = symmetrize(&(weighted.t().dot(&centered) / mass));
    let (mut eigenvalues, eigenvectors) = eigh_sorted(&scatter)?;
    eigenvalues.mapv_inplace(|l| l.max(config.variance_floor));
    let covariance = reconstruct(&eigenvalues, &eigenvectors);
    Ok((mean, covariance, eigenvalues, eigenvectors))
}

fn m_step(
    z: ArrayView2<'_, f64>,
    resp: &Array2<f64>,
    row_ll: &Array1<f64>,
    config: &EmConfig,
) -> Result<(GmmModel, usize)> {
    let n = z.nrows() as f64;
    let masses: Vec<f64> = resp.columns().into_iter().map(|c| c.sum()).collect();
    let fitted: Vec<Option<(Array1<f64>, Array2<f64>, Array1<f64>, Array2<f64>)>> = masses
        .par_iter()
        .enumerate()
        .map(|(k, &mass)| {
            if mass < DEGENERATE_MASS * n {
                Ok(None)
            } else {
                weighted_gaussian(z, resp.column(k), mass, config).map(Some)
            }
        })
        .collect::<Result<_>>()?;

    let degenerate = fitted.iter().filter(|f| f.is_none()).count();
    let mut weights: Vec<f64> = masses.iter().map(|m| m / n).collect();
    let mut components = Vec::with_capacity(fitted.len());
    let mut fallback: Option<(Array2<f64>, Array1<f64>, Array2<f64>)> = None;
    // lowest-likelihood rows seed collapsed components
    let mut worst: Vec<usize> = (0..z.nrows()).collect();
    if degenerate > 0 {
        worst.sort_by(|&a, &b| row_ll[a].total_cmp(&row_ll[b]));
    }
    let mut next_worst = worst.into_iter();
    for (k, fit) in fitted.into_iter().enumerate() {
        let (mean, covariance, eigenvalues, eigenvectors) = match fit {
            Some(f) => f,
            None => {
                if fallback.is_none() {
                    let ones = Array1::ones(z.nrows());
                    let (_, c, l, v) = weighted_gaussian(z, ones.view(), n, config)?;
                    fallback = Some((c, l, v));
                }
                let (c, l, v) = fallback.clone().expect("just set");
                let row = next_worst.next().expect("n >= K");
                let mean = if config.zero_mean {
                    Array1::zeros(z.ncols())
                } else {
                    z.row(row).to_owned()
                };
                weights[k] = 1.0 / n;
                (mean, c, l, v)
            }
        };
        components.push(Component {
            weight: 0.0,
            mean,
            covariance,
            eigenvalues,
            eigenvectors,
        });
    }
    let total: f64 = weights.iter().sum();
    for (c, w) in components.iter_mut().zip(&weights) {
        c.weight = w / total;
    }
    Ok((
        GmmModel {
            dim: z.ncols(),
            components,
        },
        degenerate,
    ))
}

/// k-means++ seeding on a random subsample, then one hard assignment pass;
/// each cluster contributes its weight fraction and floored sample covariance.
fn initialize(z: ArrayView2<'_, f64>, k: usize, config: &EmConfig, rng: &mut ChaCha8Rng) -> Result<GmmModel> {
    let n = z.nrows();
    let take = config.init_subsample.max(k).min(n);
    let mut rows = sample(rng, n, take).into_vec();
    rows.sort_unstable();
    let sub = z.select(Axis(0), &rows);
    let m = sub.nrows();

    let sq_dist = |a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>| -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let mut centers: Vec<usize> = vec![rng.random_range(0..m)];
    let mut nearest: Vec<f64> = (0..m).map(|i| sq_dist(sub.row(i), sub.row(centers[0]))).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = m - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..m)
        };
        centers.push(pick);
        for (i, slot) in nearest.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(sub.row(i), sub.row(pick)));
        }
    }

    let mut resp = Array2::<f64>::zeros((m, k));
    for i in 0..m {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, &c) in centers.iter().enumerate() {
            let dist = sq_dist(sub.row(i), sub.row(c));
            if dist < best_d {
                best_d = dist;
                best = j;
            }
        }
        resp[[i, best]] = 1.0;
    }

    let ones = Array1::ones(m);
    let (_, global_cov, global_l, global_v) = weighted_gaussian(sub.view(), ones.view(), m as f64, config)?;
    let mut components = Vec::with_capacity(k);
    for j in 0..k {
        let count = resp.column(j).sum();
        let (mean, covariance, eigenvalues, eigenvectors) = if count >= 2.0 {
            let (mean, cov, _, _) = weighted_gaussian(sub.view(), resp.column(j), count, config)?;
            let padded = &cov + &(Array2::<f64>::eye(z.ncols()) * config.variance_floor);
            let (mut l, v) = eigh_sorted(&padded)?;
            l.mapv_inplace(|x| x.max(config.variance_floor));
            (mean, reconstruct(&l, &v), l, v)
        } else {
            let mean = if config.zero_mean {
                Array1::zeros(z.ncols())
            } else {
                sub.row(centers[j]).to_owned()
            };
            (mean, global_cov.clone(), global_l.clone(), global_v.clone())
        };
        components.push(Component {
            weight: count.max(1.0) / m as f64,
            mean,
            covariance,
            eigenvalues,
            eigenvectors,
        });
    }
    let total: f64 = components.iter().map(|c| c.weight).sum();
    for c in &mut components {
        c.weight /= total;
    }
    Ok(GmmModel {
        dim: z.ncols(),
        components,
    })
}

// Model file layout, all integers u32 and reals f64, little-endian:
//   magic  b"PNPGMM\0\0"
//   version (= 1), dim, K
//   weights[K], means[K][dim], covariances[K][dim][dim] (row-major)
const MAGIC: &[u8; 8] = b"PNPGMM\0\0";
pub const MODEL_FORMAT_VERSION: u32 = 1;

pub fn save_model(model: &GmmModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    for v in [MODEL_FORMAT_VERSION, model.dim as u32, model.num_components() as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let reals = model
        .components
        .iter()
        .map(|c| c.weight)
        .chain(model.components.iter().flat_map(|c| c.mean.iter().copied()))
        .chain(model.components.iter().flat_map(|c| c.covariance.iter().copied()));
    for v in reals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GmmModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

fn decode_model(bytes: &[u8]) -> Result<GmmModel> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::CorruptModel("missing header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().expect("4 bytes"));
    let version = word(0);
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::ModelVersion(version));
    }
    let (dim, k) = (word(1) as usize, word(2) as usize);
    let count = k
        .checked_mul(1 + dim + dim * dim)
        .ok_or_else(|| Error::CorruptModel("header sizes overflow".into()))?;
    let body = &bytes[20..];
    if body.len() != count * 8 {
        return Err(Error::CorruptModel(format!(
            "expected {} payload bytes, found {}",
            count * 8,
            body.len()
        )));
    }
    let mut reals = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let weights: Vec<f64> = reals.by_ref().take(k).collect();
    let means: Vec<Array1<f64>> = (0..k).map(|_| reals.by_ref().take(dim).collect()).collect();
    let covariances = (0..k)
        .map(|_| {
            let v: Vec<f64> = reals.by_ref().take(dim * dim).collect();
            Array2::from_shape_vec((dim, dim), v).map_err(|e| Error::CorruptModel(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    GmmModel::new(weights, means, covariances)
}
