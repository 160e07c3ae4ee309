use rustfft::num_complex::Complex;

use super::fft::Fft2;
use super::{check_mu, BlurKernel, ForwardOperator, Observation};
use crate::error::{Error, Result};
use crate::image::Image;

/// Periodic 2-D convolution, diagonalised by the DFT: `A = Uᴴ D U`.
#[derive(Debug)]
pub struct CyclicConvolutionOperator {
    kernel: BlurKernel,
    height: usize,
    width: usize,
    transfer: Vec<Complex<f64>>,
    fft: Fft2,
}

/// Embeds `kernel` with its centre at index `(0, 0)` (cyclic wrap) and caches
/// its transfer function.
pub fn build_cyclic(kernel: BlurKernel, shape: (usize, usize)) -> Result<CyclicConvolutionOperator> {
    let (height, width) = shape;
    if kernel.side() > height.min(width) {
        return Err(Error::InvalidArgument(format!(
            "{}x{} kernel does not fit a {width}x{height} image",
            kernel.side(),
            kernel.side()
        )));
    }
    let half = (kernel.side() / 2) as isize;
    let mut embedded = vec![0.0; height * width];
    for di in -half..=half {
        for dj in -half..=half {
            let r = di.rem_euclid(height as isize) as usize;
            let c = dj.rem_euclid(width as isize) as usize;
            embedded[r * width + c] += kernel.tap(di, dj);
        }
    }
    let fft = Fft2::new(height, width);
    let transfer = fft.forward_real(&embedded);
    Ok(CyclicConvolutionOperator {
        kernel,
        height,
        width,
        transfer,
        fft,
    })
}

impl CyclicConvolutionOperator {
    pub fn kernel(&self) -> &BlurKernel {
        &self.kernel
    }

    /// Row-major DFT of the embedded kernel.
    pub fn transfer_function(&self) -> &[Complex<f64>] {
        &self.transfer
    }

    fn filter(&self, x: &[f64], gain: impl Fn(Complex<f64>) -> Complex<f64>) -> Image {
        let mut spectrum = self.fft.forward_real(x);
        for (s, &d) in spectrum.iter_mut().zip(&self.transfer) {
            *s *= gain(d);
        }
        Image::from_raw(self.width, self.height, self.fft.inverse_real(spectrum))
    }

    pub fn blur(&self, x: &Image) -> Result<Image> {
        self.check_input(x)?;
        Ok(self.filter(x.pixels(), |d| d))
    }
}

impl ForwardOperator for CyclicConvolutionOperator {
    fn input_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn output_len(&self) -> usize {
        self.height * self.width
    }

    fn apply(&self, x: &Image) -> Result<Observation> {
        self.blur(x).map(Observation::Image)
    }

    fn apply_adjoint(&self, y: &Observation) -> Result<Image> {
        self.check_output(y)?;
        Ok(self.filter(y.values(), |d| d.conj()))
    }

    fn solve_regularized(&self, rhs: &Image, mu: f64) -> Result<Image> {
        check_mu(mu)?;
        self.check_input(rhs)?;
        Ok(self.filter(rhs.pixels(), |d| Complex::new(1.0 / (d.norm_sqr() + mu), 0.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Image {
        Image::from_fn(w, h, |_, _| rng.random_range(-50.0..200.0))
    }

    /// Direct circular convolution, out(r, c) = Σ k(i, j) x(r − i, c − j).
    fn direct_convolution(k: &BlurKernel, x: &Image) -> Image {
        let half = (k.side() / 2) as isize;
        let (h, w) = (x.height() as isize, x.width() as isize);
        Image::from_fn(x.width(), x.height(), |r, c| {
            let mut acc = 0.0;
            for i in -half..=half {
                for j in -half..=half {
                    let rr = (r as isize - i).rem_euclid(h) as usize;
                    let cc = (c as isize - j).rem_euclid(w) as usize;
                    acc += k.tap(i, j) * x.get(rr, cc);
                }
            }
            acc
        })
    }

    #[test]
    fn identity_kernel_has_unit_transfer_and_is_exact() {
        let op = build_cyclic(BlurKernel::identity(), (6, 5)).unwrap();
        assert!(op.transfer_function().iter().all(|d| (d - Complex::new(1.0, 0.0)).norm() < 1e-12));
        let x = Image::from_fn(5, 6, |r, c| (r * 5 + c) as f64);
        let y = op.blur(&x).unwrap();
        for (a, b) in y.pixels().iter().zip(x.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
        let half = op.solve_regularized(&x, 1.0).unwrap();
        for (a, b) in half.pixels().iter().zip(x.pixels()) {
            assert!((a - b / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_blur_preserves_constants() {
        let op = build_cyclic(BlurKernel::uniform(3).unwrap(), (8, 8)).unwrap();
        let y = op.blur(&Image::filled(8, 8, 42.0)).unwrap();
        assert!(y.pixels().iter().all(|v| (v - 42.0).abs() < 1e-10));
    }

    #[test]
    fn shift_kernel_has_unit_modulus() {
        let k = BlurKernel::from_fn(3, |i, j| if (i, j) == (0, 1) { 1.0 } else { 0.0 }).unwrap();
        let op = build_cyclic(k, (7, 9)).unwrap();
        assert!(op.transfer_function().iter().all(|d| (d.norm() - 1.0).abs() < 1e-10));
    }

    #[test]
    fn box_kernel_transfer_is_real_with_unit_dc() {
        let op = build_cyclic(BlurKernel::uniform(9).unwrap(), (128, 128)).unwrap();
        let d = op.transfer_function();
        assert!((d[0].re - 1.0).abs() < 1e-10 && d[0].im.abs() < 1e-10);
        assert!(d.iter().all(|v| v.im.abs() < 1e-10));
    }

    #[test]
    fn fft_path_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = BlurKernel::new(3, (0..9).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let op = build_cyclic(k.clone(), (8, 8)).unwrap();
        let x = random_image(8, 8, &mut rng);
        let fast = op.blur(&x).unwrap();
        let slow = direct_convolution(&k, &x);
        for (a, b) in fast.pixels().iter().zip(slow.pixels()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn symmetric_kernel_is_self_adjoint() {
        let k = BlurKernel::from_fn(5, |i, j| (-((i * i + j * j) as f64) / 3.0).exp()).unwrap();
        let op = build_cyclic(k, (10, 12)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_image(12, 10, &mut rng);
        let a = op.blur(&x).unwrap();
        let b = op.apply_adjoint(&Observation::Image(x)).unwrap();
        for (p, q) in a.pixels().iter().zip(b.pixels()) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn commutes_with_cyclic_shifts() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = BlurKernel::new(5, (0..25).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let op = build_cyclic(k, (11, 14)).unwrap();
        let x = random_image(14, 11, &mut rng);
        let lhs = op.blur(&x.cyclic_shift(3, -5)).unwrap();
        let rhs = op.blur(&x).unwrap().cyclic_shift(3, -5);
        for (a, b) in lhs.pixels().iter().zip(rhs.pixels()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_oversized_kernel_and_bad_inputs() {
        assert!(build_cyclic(BlurKernel::uniform(9).unwrap(), (8, 16)).is_err());
        let op = build_cyclic(BlurKernel::uniform(3).unwrap(), (8, 8)).unwrap();
        assert!(op.solve_regularized(&Image::zeros(8, 8), 0.0).is_err());
        assert!(op.blur(&Image::zeros(7, 8)).is_err());
    }
}
