use std::sync::{Arc, Mutex};

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use super::{check_mu, ForwardOperator, Observation};
use crate::error::{Error, Result};
use crate::image::{Image, MeasurementVector};
use crate::linalg::{gram, matvec, matvec_t, Cholesky};

type Factor = Cholesky;

/// Dense Gaussian sensing matrix with i.i.d. `N(0, 1/M)` entries.
///
/// The regularised inverse uses the matrix inversion lemma
/// `(AᵀA + μI)⁻¹ = (I − Aᵀ(AAᵀ + μI)⁻¹A) / μ`, so only the `M × M` system is
/// factorised. The Cholesky factor is cached for the most recent `μ`;
/// solving with another `μ` rebuilds it.
pub struct CompressiveGaussianOperator {
    matrix: Array2<f64>,
    height: usize,
    width: usize,
    seed: u64,
    cache: Mutex<Option<(f64, Arc<Factor>)>>,
}

impl std::fmt::Debug for CompressiveGaussianOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompressiveGaussianOperator")
            .field("measurements", &self.matrix.nrows())
            .field("shape", &(self.height, self.width))
            .field("seed", &self.seed)
            .finish()
    }
}

/// Draws the sensing matrix for an image of `shape` from `seed` and factors
/// `AAᵀ + μI`.
pub fn build_compressive(
    shape: (usize, usize),
    measurements: usize,
    mu: f64,
    seed: u64,
) -> Result<CompressiveGaussianOperator> {
    let (height, width) = shape;
    let n = height * width;
    if measurements == 0 || measurements >= n {
        return Err(Error::InvalidArgument(format!(
            "need 0 < M < N, got M = {measurements}, N = {n}"
        )));
    }
    check_mu(mu)?;
    let std = (1.0 / measurements as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..measurements * n).map(|_| normal.sample(&mut rng)).collect();
    let matrix = Array2::from_shape_vec((measurements, n), values).expect("exact length");
    CompressiveGaussianOperator::from_matrix(matrix, shape, mu, seed)
}

impl CompressiveGaussianOperator {
    /// Wraps an explicit `M × N` matrix. `seed` is recorded for provenance only.
    pub fn from_matrix(matrix: Array2<f64>, shape: (usize, usize), mu: f64, seed: u64) -> Result<Self> {
        let (height, width) = shape;
        if matrix.ncols() != height * width {
            return Err(Error::shape(height * width, matrix.ncols()));
        }
        if matrix.nrows() >= matrix.ncols() {
            return Err(Error::InvalidArgument("compressive operator needs M < N".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sensing matrix".into()));
        }
        let op = Self {
            matrix,
            height,
            width,
            seed,
            cache: Mutex::new(None),
        };
        op.factor(mu)?;
        Ok(op)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `μ` of the currently cached factorisation.
    pub fn cached_mu(&self) -> Option<f64> {
        self.cache.lock().expect("cache lock").as_ref().map(|(m, _)| *m)
    }

    fn factor(&self, mu: f64) -> Result<Arc<Factor>> {
        check_mu(mu)?;
        let mut guard = self.cache.lock().expect("cache lock");
        if let Some((cached, f)) = guard.as_ref() {
            if *cached == mu {
                return Ok(Arc::clone(f));
            }
        }
        *guard = None;
        let mut system = gram(&self.matrix);
        for i in 0..system.nrows() {
            system[[i, i]] += mu;
        }
        let factor = Cholesky::factor(&system)?;
        let factor = Arc::new(factor);
        *guard = Some((mu, Arc::clone(&factor)));
        Ok(factor)
    }

    fn forward(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        matvec(&self.matrix, x)
    }

    fn backward(&self, y: ArrayView1<'_, f64>) -> Array1<f64> {
        matvec_t(&self.matrix, y)
    }

    fn to_image(&self, v: Array1<f64>) -> Image {
        Image::from_raw(self.width, self.height, v.into_raw_vec())
    }
}

impl ForwardOperator for CompressiveGaussianOperator {
    fn input_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn output_len(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &Image) -> Result<Observation> {
        self.check_input(x)?;
        let y = self.forward(ArrayView1::from(x.pixels()));
        Ok(Observation::Measurements(MeasurementVector::from_raw(y.into_raw_vec())))
    }

    fn apply_adjoint(&self, y: &Observation) -> Result<Image> {
        self.check_output(y)?;
        Ok(self.to_image(self.backward(ArrayView1::from(y.values()))))
    }

    fn solve_regularized(&self, rhs: &Image, mu: f64) -> Result<Image> {
        check_mu(mu)?;
        self.check_input(rhs)?;
        let factor = self.factor(mu)?;
        let b = ArrayView1::from(rhs.pixels());
        let inner = factor.solve(self.forward(b).view());
        let correction = self.backward(inner.view());
        let out = (&b - &correction) / mu;
        Ok(self.to_image(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_matrix_is_reproducible() {
        let a = build_compressive((8, 8), 20, 1.0, 77).unwrap();
        let b = build_compressive((8, 8), 20, 1.0, 77).unwrap();
        let c = build_compressive((8, 8), 20, 1.0, 78).unwrap();
        assert_eq!(a.matrix(), b.matrix());
        assert_ne!(a.matrix(), c.matrix());
    }

    #[test]
    fn explicit_adjoint_is_transpose() {
        let m = Array2::from_shape_fn((4, 9), |(i, j)| ((i * 9 + j) as f64 * 0.37).sin());
        let op = CompressiveGaussianOperator::from_matrix(m.clone(), (3, 3), 1.0, 0).unwrap();
        let y = Observation::Measurements(MeasurementVector::new(vec![1.0, -2.0, 0.5, 3.0]).unwrap());
        let got = op.apply_adjoint(&y).unwrap();
        for j in 0..9 {
            let expect: f64 = (0..4).map(|i| m[[i, j]] * y.values()[i]).sum();
            assert!((got.pixels()[j] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn cache_follows_mu() {
        let op = build_compressive((6, 6), 10, 1.0, 5).unwrap();
        assert_eq!(op.cached_mu(), Some(1.0));
        let rhs = Image::from_fn(6, 6, |r, c| (r + 2 * c) as f64);
        op.solve_regularized(&rhs, 0.25).unwrap();
        assert_eq!(op.cached_mu(), Some(0.25));
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(build_compressive((4, 4), 16, 1.0, 0).is_err());
        assert!(build_compressive((4, 4), 0, 1.0, 0).is_err());
        assert!(build_compressive((4, 4), 8, -1.0, 0).is_err());
        let op = build_compressive((4, 4), 8, 1.0, 0).unwrap();
        assert!(op.apply(&Image::zeros(4, 5)).is_err());
    }
}
