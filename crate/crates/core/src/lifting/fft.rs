//! Two-dimensional FFTs on row-major grids and Gaussian derivative filtering.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::Field2;

pub struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    fn run(&self, data: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.width * self.height);
        rows.process(data);
        let mut col = vec![Complex64::default(); self.height];
        for x in 0..self.width {
            for y in 0..self.height {
                col[y] = data[y * self.width + x];
            }
            cols.process(&mut col);
            for y in 0..self.height {
                data[y * self.width + x] = col[y];
            }
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    /// Normalized inverse transform.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_inv, &self.col_inv);
        let s = 1.0 / (self.width * self.height) as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    pub fn forward_real(&self, f: &Field2) -> Vec<Complex64> {
        let mut d: Vec<Complex64> = f.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut d);
        d
    }
}

/// Angular frequency of DFT bin `k` on a length-`n` axis, in `(-pi, pi]`.
#[inline]
pub fn frequency(k: usize, n: usize) -> f64 {
    let k = k as f64;
    let n_f = n as f64;
    if k <= n_f / 2.0 {
        2.0 * PI * k / n_f
    } else {
        2.0 * PI * (k - n_f) / n_f
    }
}

/// Applies `sigma^2`-normalized Gaussian second derivatives to a
/// pre-transformed field. `weights = (wxx, wxy, wyy)` combine the three
/// second derivatives; the result is real.
pub fn gaussian_second_derivative(
    fft: &Fft2,
    spectrum: &[Complex64],
    width: usize,
    height: usize,
    sigma: f64,
    weights: (f64, f64, f64),
) -> Field2 {
    let mut buf = vec![Complex64::default(); width * height];
    for y in 0..height {
        let wy = frequency(y, height);
        for x in 0..width {
            let wx = frequency(x, width);
            let g = (-0.5 * sigma * sigma * (wx * wx + wy * wy)).exp();
            let d = -(weights.0 * wx * wx + 2.0 * weights.1 * wx * wy + weights.2 * wy * wy);
            buf[y * width + x] = spectrum[y * width + x] * (g * d * sigma * sigma);
        }
    }
    fft.inverse(&mut buf);
    Field2 {
        width,
        height,
        data: buf.iter().map(|c| c.re).collect(),
    }
}
