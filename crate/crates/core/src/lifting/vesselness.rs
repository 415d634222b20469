//! Orientation-resolved vesselness on M2.
//!
//! Stand-in for a crossing-preserving vesselness: within every orientation
//! slice of `|U|` we take the scale-normalized second Gaussian derivative in
//! the lateral direction A2 = (-sin theta, cos theta), keep its negative part
//! (ridges), and average over scales. Because each slice only sees structures
//! near its own orientation, two crossing vessels land in different slices.

use std::f64::consts::TAU;

use super::fft::{gaussian_second_derivative, Fft2};
use super::score::OrientationScore;
use crate::error::{Error, Result};
use crate::grid::{Field2, GridSpec, ScalarVolume};
use crate::manifold::ManifoldKind;

/// Vesselness per wavelet orientation `theta_k = 2 pi k / n`.
#[derive(Debug, Clone)]
pub struct OrientedVesselness {
    pub slices: Vec<Field2>,
}

impl OrientedVesselness {
    pub fn n_orientations(&self) -> usize {
        self.slices.len()
    }

    pub fn max(&self) -> f64 {
        self.slices.iter().map(Field2::max).fold(0.0, f64::max)
    }

    /// Divides by the global maximum (no-op for an all-zero field).
    pub fn normalized(mut self) -> Self {
        let m = self.max();
        if m > 0.0 {
            for s in &mut self.slices {
                for v in &mut s.data {
                    *v /= m;
                }
            }
        }
        self
    }

    /// Reorders into an M2 volume. The grid's orientation count must divide the
    /// wavelet count and its spatial nodes must be the pixel centres.
    pub fn to_volume(&self, grid: &GridSpec) -> Result<ScalarVolume> {
        let n = self.n_orientations();
        let [nx, ny, nt] = grid.shape();
        let (w, h) = (self.slices[0].width, self.slices[0].height);
        if grid.manifold != ManifoldKind::M2
            || nt == 0
            || !n.is_multiple_of(nt)
            || nx != w
            || ny != h
        {
            return Err(Error::BadConfig(
                "vesselness does not match the M2 grid".into(),
            ));
        }
        let step = TAU / n as f64;
        let mut data = vec![0.0; grid.len()];
        for kg in 0..nt {
            let theta = grid.axes[2].coord(kg);
            let kw = ((theta.rem_euclid(TAU) / step).round() as usize) % n;
            let slice = &self.slices[kw];
            for x in 0..nx {
                for y in 0..ny {
                    data[grid.index(x, y, kg)] = slice.get(x, y);
                }
            }
        }
        ScalarVolume::from_data(*grid, data)
    }
}

pub fn vesselness_m2(u: &OrientationScore, scales: &[f64]) -> Result<OrientedVesselness> {
    if scales.is_empty() || scales.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::BadConfig(
            "vesselness scales must be positive".into(),
        ));
    }
    let (w, h) = (u.width, u.height);
    let fft = Fft2::new(w, h);
    let n = u.n_orientations();
    let weight = 1.0 / scales.len() as f64;
    let slices = (0..n)
        .map(|k| {
            let theta = TAU * k as f64 / n as f64;
            let (s, c) = theta.sin_cos();
            let spectrum = fft.forward_real(&u.magnitude(k));
            let mut acc = Field2::zeros(w, h);
            for &sigma in scales {
                // d^2/dA2^2 with A2 = (-s, c)
                let d = gaussian_second_derivative(
                    &fft,
                    &spectrum,
                    w,
                    h,
                    sigma,
                    (s * s, -s * c, c * c),
                );
                for (a, v) in acc.data.iter_mut().zip(&d.data) {
                    *a += weight * (-v).max(0.0);
                }
            }
            acc
        })
        .collect();
    Ok(OrientedVesselness { slices })
}
