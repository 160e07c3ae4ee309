//! The six-experiment deblurring benchmark kernels.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::operators::BlurKernel;

pub const CATALOG_VERSION: &str = "v1";

/// Noise level of an experiment, either absolute or relative to the blurred
/// image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    Variance(f64),
    TargetBsnr(f64),
}

#[derive(Debug, Clone)]
pub struct KernelCatalogEntry {
    pub id: u8,
    pub kernel: BlurKernel,
    pub noise: NoiseSpec,
}

impl KernelCatalogEntry {
    /// Absolute noise variance, when the experiment fixes one.
    pub fn default_noise_variance(&self) -> Option<f64> {
        match self.noise {
            NoiseSpec::Variance(v) => Some(v),
            NoiseSpec::TargetBsnr(_) => None,
        }
    }
}

fn gaussian(side: usize, std: f64) -> Result<BlurKernel> {
    BlurKernel::from_fn(side, |i, j| (-((i * i + j * j) as f64) / (2.0 * std * std)).exp())
}

fn entry(id: u8) -> Result<KernelCatalogEntry> {
    let (kernel, noise) = match id {
        1 => (BlurKernel::from_fn(15, |i, j| 1.0 / (1.0 + (i * i + j * j) as f64))?, NoiseSpec::Variance(2.0)),
        2 => (BlurKernel::from_fn(15, |i, j| 1.0 / (1.0 + (i * i + j * j) as f64))?, NoiseSpec::Variance(8.0)),
        3 => (BlurKernel::uniform(9)?, NoiseSpec::TargetBsnr(40.0)),
        4 => {
            let b = [1.0, 4.0, 6.0, 4.0, 1.0];
            (BlurKernel::from_fn(5, |i, j| b[(i + 2) as usize] * b[(j + 2) as usize] / 256.0)?, NoiseSpec::Variance(49.0))
        }
        5 => (gaussian(25, 1.6)?, NoiseSpec::Variance(4.0)),
        6 => (gaussian(25, 0.4)?, NoiseSpec::Variance(64.0)),
        _ => return Err(Error::InvalidArgument(format!("no catalog kernel with id {id} (expected 1..=6)"))),
    };
    Ok(KernelCatalogEntry { id, kernel, noise })
}

pub fn catalog_entry(id: u8) -> Result<KernelCatalogEntry> {
    entry(id)
}

pub fn kernel_catalog() -> Vec<KernelCatalogEntry> {
    (1..=6).map(|id| entry(id).expect("catalog ids are valid")).collect()
}

/// SHA-256 over the version tag and every entry's kernel text and noise.
pub fn catalog_hash() -> String {
    let mut h = Sha256::new();
    h.update(CATALOG_VERSION.as_bytes());
    for e in kernel_catalog() {
        h.update([e.id]);
        h.update(e.kernel.to_text().as_bytes());
        h.update(format!("{:?}", e.noise).as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
