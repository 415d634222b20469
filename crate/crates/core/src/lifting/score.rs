use num_complex::Complex64;

use super::cake::WaveletStack;
use super::fft::Fft2;
use crate::error::{Error, Result};
use crate::grid::Field2;

/// Complex orientation score `U(x, y, theta_k)`, one row-major slice per
/// wavelet orientation `theta_k = 2 pi k / n`.
#[derive(Debug, Clone)]
pub struct OrientationScore {
    pub width: usize,
    pub height: usize,
    pub slices: Vec<Vec<Complex64>>,
}

impl OrientationScore {
    pub fn n_orientations(&self) -> usize {
        self.slices.len()
    }

    pub fn get(&self, k: usize, x: usize, y: usize) -> Complex64 {
        self.slices[k][y * self.width + x]
    }

    pub fn magnitude(&self, k: usize) -> Field2 {
        Field2 {
            width: self.width,
            height: self.height,
            data: self.slices[k].iter().map(|c| c.norm()).collect(),
        }
    }

    /// Sum over orientations; approximately the low-passed input.
    pub fn reconstruct(&self) -> Field2 {
        let mut out = Field2::zeros(self.width, self.height);
        for s in &self.slices {
            for (o, v) in out.data.iter_mut().zip(s) {
                *o += v.re;
            }
        }
        out
    }
}

/// Correlates `f` with every rotated wavelet (periodic boundary).
pub fn orientation_score(f: &Field2, psi: &WaveletStack) -> Result<OrientationScore> {
    let (w, h) = (f.width, f.height);
    let n = psi.size();
    if w < n || h < n {
        return Err(Error::BadConfig(format!(
            "image {w}x{h} is smaller than the wavelet support {n}x{n}"
        )));
    }
    let fft = Fft2::new(w, h);
    let spectrum = fft.forward_real(f);
    let half = n / 2;
    let slices = psi
        .filters
        .iter()
        .map(|kernel| {
            let mut k = vec![Complex64::default(); w * h];
            for y in 0..n {
                for x in 0..n {
                    let px = (x + w - half) % w;
                    let py = (y + h - half) % h;
                    k[py * w + px] = kernel[y * n + x];
                }
            }
            fft.forward(&mut k);
            for (kv, fv) in k.iter_mut().zip(&spectrum) {
                *kv = fv * kv.conj();
            }
            fft.inverse(&mut k);
            k
        })
        .collect();
    Ok(OrientationScore {
        width: w,
        height: h,
        slices,
    })
}
