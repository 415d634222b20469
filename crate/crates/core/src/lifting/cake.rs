//! Cake wavelets: Fourier-domain angular B-spline wedges under a radial
//! low-pass, with the lowest frequencies shared equally by all orientations.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use super::fft::{frequency, Fft2};
use crate::error::{Error, Result};
use crate::manifold::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CakeParams {
    pub n_orientations: usize,
    /// Odd spatial size of each filter, in pixels.
    pub size: usize,
    /// Order of the angular B-spline.
    pub spline_order: usize,
    /// Inflection point of the radial profile as a fraction of Nyquist.
    pub inflection: f64,
    /// Order of the radial Taylor-Gaussian profile.
    pub radial_order: usize,
    /// Std-dev of the isotropic low-frequency part, fraction of Nyquist.
    pub low_frequency: f64,
    /// Std-dev of the spatial Gaussian window, fraction of `size`.
    pub window: f64,
}

impl Default for CakeParams {
    fn default() -> Self {
        Self {
            n_orientations: 32,
            size: 33,
            spline_order: 3,
            inflection: 0.8,
            radial_order: 8,
            low_frequency: 0.08,
            window: 0.25,
        }
    }
}

/// Spatial cake-wavelet filters, one per orientation `2 pi k / n`.
#[derive(Debug, Clone)]
pub struct WaveletStack {
    pub params: CakeParams,
    /// `filters[k]` is a `size x size` row-major kernel centred at `size / 2`.
    pub filters: Vec<Vec<Complex64>>,
}

impl WaveletStack {
    pub fn n_orientations(&self) -> usize {
        self.params.n_orientations
    }

    pub fn size(&self) -> usize {
        self.params.size
    }

    pub fn orientation(&self, k: usize) -> f64 {
        TAU * k as f64 / self.params.n_orientations as f64
    }

    /// DFT of filter `k` on its own `size x size` grid (DC at index 0).
    pub fn spectrum(&self, k: usize) -> Vec<Complex64> {
        let n = self.params.size;
        let h = n / 2;
        let mut buf = vec![Complex64::default(); n * n];
        for y in 0..n {
            for x in 0..n {
                let sx = (x + n - h) % n;
                let sy = (y + n - h) % n;
                buf[sy * n + sx] = self.filters[k][y * n + x];
            }
        }
        Fft2::new(n, n).forward(&mut buf);
        buf
    }
}

/// Cardinal B-spline of the given order (support `[-(order+1)/2, (order+1)/2]`).
pub fn bspline(order: usize, x: f64) -> f64 {
    // Cox-de Boor on integer knots, shifted to be centred at 0.
    let t = x + (order as f64 + 1.0) / 2.0;
    fn b(k: usize, t: f64) -> f64 {
        if k == 0 {
            return if (0.0..1.0).contains(&t) { 1.0 } else { 0.0 };
        }
        let kf = k as f64;
        (t * b(k - 1, t) + (kf + 1.0 - t) * b(k - 1, t - 1.0)) / kf
    }
    b(order, t)
}

fn radial_profile(rho: f64, params: &CakeParams) -> f64 {
    let n = params.radial_order as f64;
    let t2 = 2.0 * params.inflection * params.inflection / (1.0 + 2.0 * n);
    let s = rho * rho / t2;
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..=params.radial_order {
        term *= s / j as f64;
        sum += term;
    }
    (-s).exp() * sum
}

/// Fourier-domain design of filter `k`, before spatial windowing.
/// `rho` is the frequency radius as a fraction of Nyquist.
pub fn cake_design(k: usize, rho: f64, angle: f64, params: &CakeParams) -> f64 {
    let n = params.n_orientations as f64;
    let s_theta = TAU / n;
    let theta_k = TAU * k as f64 / n;
    let low = (-0.5 * (rho / params.low_frequency).powi(2)).exp();
    // Orientation theta responds to structures along theta, whose energy lies
    // at frequency angle theta + pi/2.
    let wedge = bspline(
        params.spline_order,
        wrap_angle(angle - theta_k - PI / 2.0) / s_theta,
    );
    radial_profile(rho, params) * ((1.0 - low) * wedge + low / n)
}

pub fn build_cake_wavelets(params: CakeParams) -> Result<WaveletStack> {
    if params.n_orientations < 4 {
        return Err(Error::BadConfig(
            "cake wavelets need at least 4 orientations".into(),
        ));
    }
    if params.size < 5 || params.size.is_multiple_of(2) {
        return Err(Error::BadConfig(
            "wavelet size must be odd and at least 5".into(),
        ));
    }
    if params.spline_order == 0 || !(params.inflection > 0.0 && params.inflection <= 1.0) {
        return Err(Error::BadConfig(
            "invalid spline order or inflection point".into(),
        ));
    }
    let n = params.size;
    let h = n / 2;
    let fft = Fft2::new(n, n);
    let sigma_w = params.window * n as f64;
    let mut filters = Vec::with_capacity(params.n_orientations);
    for k in 0..params.n_orientations {
        let mut buf = vec![Complex64::default(); n * n];
        for y in 0..n {
            let wy = frequency(y, n);
            for x in 0..n {
                let wx = frequency(x, n);
                let rho = wx.hypot(wy) / PI;
                buf[y * n + x] = Complex64::new(cake_design(k, rho, wy.atan2(wx), &params), 0.0);
            }
        }
        fft.inverse(&mut buf);
        let mut spatial = vec![Complex64::default(); n * n];
        for y in 0..n {
            for x in 0..n {
                let sx = (x + h) % n;
                let sy = (y + h) % n;
                let dx = sx as f64 - h as f64;
                let dy = sy as f64 - h as f64;
                let w = (-(dx * dx + dy * dy) / (2.0 * sigma_w * sigma_w)).exp();
                spatial[sy * n + sx] = buf[y * n + x] * w;
            }
        }
        filters.push(spatial);
    }
    // Windowing perturbs the DC gain slightly; restore sum_k psi_k(0) = 1.
    let dc: Complex64 = filters.iter().flat_map(|f| f.iter()).sum();
    for f in &mut filters {
        for v in f.iter_mut() {
            *v /= dc.re;
        }
    }
    Ok(WaveletStack { params, filters })
}
