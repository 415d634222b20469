//! Image lifting: cake wavelets, orientation scores, vesselness and costs.

pub mod cake;
pub mod cost;
pub mod fft;
pub mod frangi;
pub mod score;
pub mod vesselness;

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Field2;

pub use cake::{build_cake_wavelets, CakeParams, WaveletStack};
pub use cost::{cost_from_vesselness, cost_w2_from_r2, CostProvenance, CostVolume};
pub use frangi::{frangi_vesselness, FrangiParams};
pub use score::{orientation_score, OrientationScore};
pub use vesselness::{vesselness_m2, OrientedVesselness};

/// Loads an 8- or 16-bit grayscale PNG with intensities scaled to `[0, 1]`.
pub fn load_grayscale(path: &Path) -> Result<Field2> {
    if !path.exists() {
        return Err(Error::MissingInput {
            path: path.to_path_buf(),
            expected: "grayscale PNG image".into(),
        });
    }
    let img = image::open(path)?.to_luma16();
    let (w, h) = img.dimensions();
    Ok(Field2 {
        width: w as usize,
        height: h as usize,
        data: img.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
    })
}

/// Writes a field in `[0, 1]` as a 16-bit grayscale PNG.
pub fn save_grayscale(f: &Field2, path: &Path) -> Result<()> {
    let buf: Vec<u16> = f
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let img =
        image::ImageBuffer::<image::Luma<u16>, _>::from_raw(f.width as u32, f.height as u32, buf)
            .expect("buffer size matches");
    img.save(path)?;
    Ok(())
}

/// Min-max normalization to `[0, 1]`; constant images map to zero.
pub fn normalize(f: &Field2) -> Field2 {
    let (lo, hi) = f
        .data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let span = hi - lo;
    Field2 {
        width: f.width,
        height: f.height,
        data: f
            .data
            .iter()
            .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
            .collect(),
    }
}

pub fn invert(f: &Field2) -> Field2 {
    Field2 {
        width: f.width,
        height: f.height,
        data: f.data.iter().map(|v| 1.0 - v).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_is_idempotent() {
        let f = Field2::from_fn(7, 5, |x, y| (x * y) as f64 * 0.3 - 1.0);
        let n1 = normalize(&f);
        assert_eq!(normalize(&n1), n1);
        assert_eq!(n1.max(), 1.0);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.png");
        let f = Field2::from_fn(9, 6, |x, y| (x + 9 * y) as f64 / 53.0);
        save_grayscale(&f, &p).unwrap();
        let g = load_grayscale(&p).unwrap();
        for (a, b) in f.data.iter().zip(&g.data) {
            assert!((a - b).abs() < 1e-4);
        }
        assert!(matches!(
            load_grayscale(&dir.path().join("missing.png")),
            Err(Error::MissingInput { .. })
        ));
    }
}
