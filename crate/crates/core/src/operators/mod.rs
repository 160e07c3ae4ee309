//! Observation operators `A` of the model `y = A x + n`.
//!
//! Each operator provides the forward map, its adjoint, and the regularised
//! inverse `(AᵀA + μI)⁻¹`, which is all the ADMM x-update needs.

mod compressive;
mod cyclic;
mod fft;
mod kernel;

pub use compressive::{build_compressive, CompressiveGaussianOperator};
pub use cyclic::{build_cyclic, CyclicConvolutionOperator};
pub use kernel::BlurKernel;

use crate::error::{Error, Result};
use crate::image::{Image, MeasurementVector};

/// Output of a forward operator: an image for blurring, a plain vector for
/// compressive measurements.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Image(Image),
    Measurements(MeasurementVector),
}

impl Observation {
    pub fn values(&self) -> &[f64] {
        match self {
            Observation::Image(img) => img.pixels(),
            Observation::Measurements(m) => m.values(),
        }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        match self {
            Observation::Image(img) => img.pixels_mut(),
            Observation::Measurements(m) => m.values_mut(),
        }
    }

    pub fn len(&self) -> usize {
        self.values().len()
    }

    pub fn is_empty(&self) -> bool {
        self.values().is_empty()
    }

    pub fn as_image(&self) -> Option<&Image> {
        match self {
            Observation::Image(img) => Some(img),
            Observation::Measurements(_) => None,
        }
    }

    pub fn dot(&self, other: &Observation) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::shape(self.len(), other.len()));
        }
        Ok(self.values().iter().zip(other.values()).map(|(a, b)| a * b).sum())
    }
}

pub trait ForwardOperator: Send + Sync {
    /// `(height, width)` of the unknown image.
    fn input_shape(&self) -> (usize, usize);

    /// Number of observed values `M`.
    fn output_len(&self) -> usize;

    fn apply(&self, x: &Image) -> Result<Observation>;

    fn apply_adjoint(&self, y: &Observation) -> Result<Image>;

    /// `(AᵀA + μI)⁻¹ · rhs`.
    fn solve_regularized(&self, rhs: &Image, mu: f64) -> Result<Image>;

    fn check_input(&self, x: &Image) -> Result<()> {
        let (h, w) = self.input_shape();
        if x.shape() != (h, w) {
            return Err(Error::shape(
                format!("{w}x{h} image"),
                format!("{}x{} image", x.width(), x.height()),
            ));
        }
        Ok(())
    }

    fn check_output(&self, y: &Observation) -> Result<()> {
        if y.len() != self.output_len() {
            return Err(Error::shape(
                format!("{} observations", self.output_len()),
                format!("{}", y.len()),
            ));
        }
        Ok(())
    }
}

pub(crate) fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("penalty mu must be positive, got {mu}")))
    }
}
