use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Unnormalised 2-D DFT over a row-major `height × width` buffer.
pub(crate) struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Fft2({}x{})", self.height, self.width)
    }
}

impl Fft2 {
    pub(crate) fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    fn run(&self, data: &mut [Complex<f64>], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(data.len(), self.height * self.width);
        rows.process(data);
        let mut column = vec![Complex::new(0.0, 0.0); self.height];
        for c in 0..self.width {
            for r in 0..self.height {
                column[r] = data[r * self.width + c];
            }
            cols.process(&mut column);
            for r in 0..self.height {
                data[r * self.width + c] = column[r];
            }
        }
    }

    pub(crate) fn forward(&self, data: &mut [Complex<f64>]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform including the `1 / (height · width)` factor.
    pub(crate) fn inverse(&self, data: &mut [Complex<f64>]) {
        self.run(data, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.height * self.width) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    pub(crate) fn forward_real(&self, values: &[f64]) -> Vec<Complex<f64>> {
        let mut data: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.forward(&mut data);
        data
    }

    pub(crate) fn inverse_real(&self, mut data: Vec<Complex<f64>>) -> Vec<f64> {
        self.inverse(&mut data);
        data.into_iter().map(|c| c.re).collect()
    }
}
