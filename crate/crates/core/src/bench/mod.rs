//! Reproducible experiment layer: kernel catalog, seeded degradation,
//! corpus ingestion, experiment specs and reports.

mod catalog;
mod corpus;
mod experiment;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::operators::{ForwardOperator, Observation};

pub use catalog::{catalog_entry, catalog_hash, kernel_catalog, KernelCatalogEntry, NoiseSpec, CATALOG_VERSION};
pub use corpus::{ingest_corpus, Anchor, Crop, ImageRules, Size};
pub use experiment::{
    execute, run_experiment, sweep_csv, sweep_measurements, sweep_measurements_with, train_prior, ExperimentKind, ExperimentRun, ExperimentSpec,
    Metrics, ReportRecord, SweepRow,
};

/// Derives an independent seed for the stream named `label` (FNV-1a of the
/// label mixed into `base` with a SplitMix64 finaliser).
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = base ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `A x` plus i.i.d. zero-mean Gaussian noise of the given variance.
pub fn degrade(x: &Image, op: &dyn ForwardOperator, noise_variance: f64, seed: u64) -> Result<Observation> {
    if !noise_variance.is_finite() || noise_variance < 0.0 {
        return Err(Error::InvalidArgument(format!("noise variance {noise_variance}")));
    }
    let mut y = op.apply(x)?;
    if noise_variance > 0.0 {
        let normal = Normal::new(0.0, noise_variance.sqrt()).expect("positive std");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for v in y.values_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(y)
}

fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

pub(crate) fn variance_for_bsnr_values(values: &[f64], target_bsnr: f64) -> Result<f64> {
    if !target_bsnr.is_finite() {
        return Err(Error::InvalidArgument(format!("target BSNR {target_bsnr}")));
    }
    let var = population_variance(values);
    if !(var > 0.0) {
        return Err(Error::InvalidArgument("BSNR is undefined for a constant signal".into()));
    }
    Ok(var / 10f64.powf(target_bsnr / 10.0))
}

/// Noise variance giving `blurred` the requested BSNR.
pub fn variance_for_bsnr(blurred: &Image, target_bsnr: f64) -> Result<f64> {
    variance_for_bsnr_values(blurred.pixels(), target_bsnr)
}
