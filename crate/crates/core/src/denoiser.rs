//! Whole-image MMSE denoising under a GMM patch prior.
//!
//! Patches are taken on a stride grid with extra border-snapped rows and
//! columns so that every pixel is covered, denoised independently in closed
//! form, and averaged back with uniform per-pixel weights.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{EmConfig, GmmModel};
use crate::image::{Image, Patch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcHandling {
    /// Remove each patch's mean before estimation and restore it afterwards.
    SubtractMean,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserConfig {
    pub patch_side: usize,
    pub stride: usize,
    pub dc_handling: DcHandling,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            patch_side: 6,
            stride: 1,
            dc_handling: DcHandling::SubtractMean,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_side == 0 || self.stride == 0 || self.stride > self.patch_side {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= stride <= patch_side, got stride {} side {}",
                self.stride, self.patch_side
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.patch_side * self.patch_side
    }
}

/// Anything that can stand in for the proximal step of the prior.
pub trait Denoiser {
    fn denoise(&self, img: &Image, noise_variance: f64) -> Result<Image>;
}

impl<F> Denoiser for F
where
    F: Fn(&Image, f64) -> Result<Image>,
{
    fn denoise(&self, img: &Image, noise_variance: f64) -> Result<Image> {
        self(img, noise_variance)
    }
}

/// Origins `0, stride, 2·stride, …` along one axis, plus `len − side` when
/// the grid would otherwise leave the far border uncovered.
pub fn patch_origins(len: usize, side: usize, stride: usize) -> Vec<usize> {
    if side > len {
        return Vec::new();
    }
    let last = len - side;
    let mut origins: Vec<usize> = (0..=last).step_by(stride).collect();
    if origins.last() != Some(&last) {
        origins.push(last);
    }
    origins
}

fn grid(img: &Image, side: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    if img.width() < side || img.height() < side {
        return Err(Error::InvalidArgument(format!(
            "{}x{} image is smaller than one {side}x{side} patch",
            img.width(),
            img.height()
        )));
    }
    let rows = patch_origins(img.height(), side, stride);
    let cols = patch_origins(img.width(), side, stride);
    Ok(rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .collect())
}

fn gather(img: &Image, side: usize, origins: &[(usize, usize)]) -> Array2<f64> {
    let d = side * side;
    let mut out = Array2::zeros((origins.len(), d));
    let w = img.width();
    let px = img.pixels();
    for (mut row, &(r0, c0)) in out.rows_mut().into_iter().zip(origins) {
        for dr in 0..side {
            let start = (r0 + dr) * w + c0;
            for dc in 0..side {
                row[dr * side + dc] = px[start + dc];
            }
        }
    }
    out
}

/// All patches of `img` on the configured grid, in row-major origin order.
pub fn extract_patches(img: &Image, cfg: &DenoiserConfig) -> Result<Vec<Patch>> {
    cfg.validate()?;
    let origins = grid(img, cfg.patch_side, cfg.stride)?;
    let values = gather(img, cfg.patch_side, &origins);
    Ok(origins
        .into_iter()
        .zip(values.rows())
        .map(|(origin, v)| Patch {
            side: cfg.patch_side,
            values: v.to_vec(),
            origin,
        })
        .collect())
}

fn remove_means(patches: &mut Array2<f64>) -> Array1<f64> {
    let means = patches.mean_axis(Axis(1)).expect("patches are non-empty");
    *patches -= &means.view().insert_axis(Axis(1));
    means
}

/// Patch vectors of `img` sampled on a grid with the given stride, DC removed
/// when `cfg` asks for it; the training counterpart of [`denoise_image`].
pub fn training_patches(img: &Image, cfg: &DenoiserConfig, stride: usize) -> Result<Array2<f64>> {
    if stride == 0 {
        return Err(Error::InvalidArgument("training stride must be positive".into()));
    }
    let origins = grid(img, cfg.patch_side, stride)?;
    let mut patches = gather(img, cfg.patch_side, &origins);
    if cfg.dc_handling == DcHandling::SubtractMean {
        remove_means(&mut patches);
    }
    Ok(patches)
}

/// EM settings matching the patch representation: DC-removed patches get
/// zero-mean components.
pub fn training_em_config(cfg: &DenoiserConfig, em: &EmConfig) -> EmConfig {
    EmConfig {
        zero_mean: em.zero_mean || cfg.dc_handling == DcHandling::SubtractMean,
        ..*em
    }
}

/// Posterior mean `Σ_k β_k(z) [μ_k + Σ_k (Σ_k + σ²I)⁻¹ (z − μ_k)]`.
pub fn mmse_denoise_patch(model: &GmmModel, noisy: &[f64], noise_variance: f64) -> Result<Vec<f64>> {
    if noisy.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("noisy patch".into()));
    }
    model.mmse_patch(noisy, noise_variance)
}

/// Per-pixel coverage counts of the patch grid.
pub fn coverage_counts(width: usize, height: usize, cfg: &DenoiserConfig) -> Result<Vec<u32>> {
    let probe = Image::zeros(width, height);
    let origins = grid(&probe, cfg.patch_side, cfg.stride)?;
    let mut counts = vec![0u32; width * height];
    for &(r0, c0) in &origins {
        for dr in 0..cfg.patch_side {
            for dc in 0..cfg.patch_side {
                counts[(r0 + dr) * width + c0 + dc] += 1;
            }
        }
    }
    Ok(counts)
}

pub fn denoise_image(model: &GmmModel, img: &Image, noise_variance: f64, cfg: &DenoiserConfig) -> Result<Image> {
    cfg.validate()?;
    if model.dim() != cfg.dim() {
        return Err(Error::shape(
            format!("model of dimension {}", cfg.dim()),
            format!("dimension {}", model.dim()),
        ));
    }
    if !noise_variance.is_finite() || noise_variance < 0.0 {
        return Err(Error::InvalidArgument(format!("noise variance {noise_variance}")));
    }
    if !img.is_finite() {
        return Err(Error::NonFinite("image to denoise".into()));
    }
    let side = cfg.patch_side;
    let origins = grid(img, side, cfg.stride)?;
    let mut patches = gather(img, side, &origins);
    let means = match cfg.dc_handling {
        DcHandling::SubtractMean => Some(remove_means(&mut patches)),
        DcHandling::None => None,
    };
    let mut estimates = model.mmse_batch(patches.view(), noise_variance)?;
    if let Some(m) = means {
        estimates += &m.view().insert_axis(Axis(1));
    }
    Ok(aggregate(img.width(), img.height(), side, &origins, estimates.view()))
}

fn aggregate(width: usize, height: usize, side: usize, origins: &[(usize, usize)], estimates: ArrayView2<'_, f64>) -> Image {
    let mut sums = vec![0.0; width * height];
    let mut counts = vec![0u32; width * height];
    for (&(r0, c0), est) in origins.iter().zip(estimates.rows()) {
        for dr in 0..side {
            let start = (r0 + dr) * width + c0;
            for dc in 0..side {
                sums[start + dc] += est[dr * side + dc];
                counts[start + dc] += 1;
            }
        }
    }
    debug_assert!(counts.iter().all(|&c| c > 0));
    let pixels = sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| s / f64::from(c))
        .collect();
    Image::from_raw(width, height, pixels)
}

/// GMM-MMSE denoiser bound to a model and patch configuration.
#[derive(Debug, Clone)]
pub struct GmmDenoiser {
    pub model: GmmModel,
    pub config: DenoiserConfig,
}

impl Denoiser for GmmDenoiser {
    fn denoise(&self, img: &Image, noise_variance: f64) -> Result<Image> {
        denoise_image(&self.model, img, noise_variance, &self.config)
    }
}

/// Writes patch vectors as raw little-endian `f64`, one patch after another,
/// preceded by two little-endian `u64`s: patch count and dimension.
pub fn write_patch_dump(patches: ArrayView2<'_, f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(16 + patches.len() * 8);
    buf.extend_from_slice(&(patches.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(patches.ncols() as u64).to_le_bytes());
    for v in patches.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn isotropic(dim: usize, s: f64) -> GmmModel {
        GmmModel::new(vec![1.0], vec![Array1::zeros(dim)], vec![Array2::eye(dim) * s]).unwrap()
    }

    fn cfg(side: usize, stride: usize, dc: DcHandling) -> DenoiserConfig {
        DenoiserConfig {
            patch_side: side,
            stride,
            dc_handling: dc,
        }
    }

    fn textured(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |r, c| 128.0 + 60.0 * ((r as f64) * 0.7).sin() * ((c as f64) * 0.3 + 1.0).cos() + (r * c % 7) as f64)
    }

    #[test]
    fn patch_counts_follow_coverage_rule() {
        let c = cfg(6, 1, DcHandling::None);
        assert_eq!(extract_patches(&Image::zeros(6, 6), &c).unwrap().len(), 1);
        assert_eq!(extract_patches(&Image::zeros(8, 8), &c).unwrap().len(), 9);
        let p = extract_patches(&Image::zeros(9, 9), &cfg(6, 2, DcHandling::None)).unwrap();
        let origins: Vec<_> = p.iter().map(|p| p.origin).collect();
        let expected: Vec<_> = [0, 2, 3]
            .iter()
            .flat_map(|&r| [0, 2, 3].iter().map(move |&c| (r, c)))
            .collect();
        assert_eq!(origins, expected);
        assert!(extract_patches(&Image::zeros(5, 9), &c).is_err());
        assert!(extract_patches(&Image::zeros(9, 9), &cfg(3, 4, DcHandling::None)).is_err());
    }

    #[test]
    fn patch_values_are_row_major_blocks() {
        let img = Image::from_fn(4, 3, |r, c| (10 * r + c) as f64);
        let p = extract_patches(&img, &cfg(2, 1, DcHandling::None)).unwrap();
        assert_eq!(p[4].origin, (1, 1));
        assert_eq!(p[4].values, vec![11.0, 12.0, 21.0, 22.0]);
    }

    #[test]
    fn zero_noise_patch_estimate_is_identity() {
        let model = GmmModel::new(
            vec![0.4, 0.6],
            vec![array![1.0, -2.0], array![0.0, 3.0]],
            vec![array![[2.0, 0.4], [0.4, 1.0]], array![[0.3, 0.0], [0.0, 5.0]]],
        )
        .unwrap();
        let z = [7.5, -1.25];
        let out = mmse_denoise_patch(&model, &z, 0.0).unwrap();
        for (a, b) in out.iter().zip(z) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn isotropic_prior_is_wiener_shrinkage() {
        let model = isotropic(3, 4.0);
        let z = [2.0, -1.0, 0.5];
        let out = mmse_denoise_patch(&model, &z, 1.0).unwrap();
        for (a, b) in out.iter().zip(z) {
            assert!((a - 0.8 * b).abs() < 1e-14);
        }
    }

    /// Posterior mean of a 1-D two-component mixture by trapezoidal quadrature.
    fn quadrature_posterior_mean(z: f64, noise: f64) -> f64 {
        let (w, mu, var) = ([0.5, 0.5], [-2.0, 2.0], [1.0, 1.0]);
        let gauss = |x: f64, m: f64, v: f64| (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let h = 1e-3;
        let (mut num, mut den) = (0.0, 0.0);
        let mut x = -30.0;
        while x <= 30.0 {
            let prior: f64 = (0..2).map(|k| w[k] * gauss(x, mu[k], var[k])).sum();
            let p = prior * gauss(z, x, noise);
            num += x * p;
            den += p;
            x += h;
        }
        num / den
    }

    #[test]
    fn one_dimensional_mixture_matches_quadrature() {
        let model = GmmModel::new(
            vec![0.5, 0.5],
            vec![array![-2.0], array![2.0]],
            vec![array![[1.0]], array![[1.0]]],
        )
        .unwrap();
        let est = mmse_denoise_patch(&model, &[0.5], 1.0).unwrap()[0];
        let oracle = quadrature_posterior_mean(0.5, 1.0);
        assert!((est - oracle).abs() < 1e-6, "{est} vs {oracle}");
    }

    #[test]
    fn zero_noise_denoising_is_identity_for_both_dc_modes() {
        let img = textured(17, 13);
        for dc in [DcHandling::SubtractMean, DcHandling::None] {
            let model = GmmModel::new(
                vec![0.5, 0.5],
                vec![Array1::zeros(9), Array1::from_elem(9, 100.0)],
                vec![Array2::eye(9) * 30.0, Array2::eye(9) * 900.0],
            )
            .unwrap();
            let out = denoise_image(&model, &img, 0.0, &cfg(3, 2, dc)).unwrap();
            for (a, b) in out.pixels().iter().zip(img.pixels()) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn constant_image_stays_constant_under_zero_mean_model() {
        let model = GmmModel::new(
            vec![0.3, 0.7],
            vec![Array1::zeros(4), Array1::zeros(4)],
            vec![Array2::eye(4) * 2.0, array![[3.0, 1.0, 0.0, 0.0], [1.0, 3.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.5], [0.0, 0.0, 0.5, 1.0]]],
        )
        .unwrap();
        let img = Image::filled(9, 7, 87.3);
        let out = denoise_image(&model, &img, 25.0, &cfg(2, 1, DcHandling::SubtractMean)).unwrap();
        assert!(out.variance() < 1e-8);
        assert!((out.mean() - 87.3).abs() < 1e-8);
    }

    #[test]
    fn coverage_is_complete() {
        for (w, h, side, stride) in [(9, 9, 6, 2), (13, 7, 3, 3), (6, 6, 6, 1), (31, 17, 6, 4)] {
            let counts = coverage_counts(w, h, &cfg(side, stride, DcHandling::None)).unwrap();
            assert!(counts.iter().all(|&c| c > 0), "{w}x{h} side {side} stride {stride}");
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let model = isotropic(4, 1.0);
        assert!(denoise_image(&model, &Image::zeros(8, 8), 1.0, &DenoiserConfig::default()).is_err());
    }

    #[test]
    fn patch_dump_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        write_patch_dump(array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]].view(), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 16 + 6 * 8);
        assert_eq!(u64::from_le_bytes(bytes[0..8].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(bytes[16 + 8 * 5..].try_into().unwrap()), 6.0);
    }

    proptest! {
        #[test]
        fn linear_for_zero_mean_single_gaussian(a in -4.0..4.0f64, seed in 0u64..50) {
            let model = GmmModel::new(
                vec![1.0],
                vec![Array1::zeros(4)],
                vec![array![[3.0, 1.0, 0.2, 0.0], [1.0, 2.0, 0.0, 0.1], [0.2, 0.0, 1.5, 0.3], [0.0, 0.1, 0.3, 1.0]]],
            ).unwrap();
            let img = Image::from_fn(7, 6, |r, c| ((r * 31 + c * 17 + seed as usize) % 23) as f64 - 11.0);
            let c = cfg(2, 1, DcHandling::None);
            let lhs = denoise_image(&model, &img.scale(a), 3.0, &c).unwrap();
            let rhs = denoise_image(&model, &img, 3.0, &c).unwrap().scale(a);
            for (x, y) in lhs.pixels().iter().zip(rhs.pixels()) {
                prop_assert!((x - y).abs() < 1e-8);
            }
        }

        #[test]
        fn origins_cover_axis(len in 1usize..60, side in 1usize..10, stride_frac in 0.0..1.0f64) {
            prop_assume!(side <= len);
            let stride = 1 + ((side - 1) as f64 * stride_frac) as usize;
            let o = patch_origins(len, side, stride);
            prop_assert_eq!(o[0], 0);
            prop_assert_eq!(*o.last().unwrap(), len - side);
            for w in o.windows(2) {
                prop_assert!(w[1] > w[0] && w[1] - w[0] <= stride);
            }
        }
    }
}
