use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::Result;
use crate::grid::Field2;

const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
];

fn gray(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Draws each pixel path as a polyline in its own colour over the image.
/// NaN samples break the line. With no paths the result is the image itself.
pub fn render_overlay(image: &Field2, paths: &[Vec<[f64; 2]>]) -> RgbImage {
    let (w, h) = (image.width as u32, image.height as u32);
    let mut out = RgbImage::from_fn(w, h, |x, y| {
        let g = gray(image.get(x as usize, y as usize));
        Rgb([g, g, g])
    });
    for (k, path) in paths.iter().enumerate() {
        let colour = Rgb(PALETTE[k % PALETTE.len()]);
        let mut put = |p: [f64; 2]| {
            let (x, y) = (p[0].round(), p[1].round());
            if x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64 {
                out.put_pixel(x as u32, y as u32, colour);
            }
        };
        for seg in path.windows(2) {
            let [a, b] = [seg[0], seg[1]];
            if a.iter().chain(&b).any(|v| !v.is_finite()) {
                continue;
            }
            let n = ((b[0] - a[0]).hypot(b[1] - a[1]) * 4.0).ceil().max(1.0) as usize;
            for i in 0..=n {
                let t = i as f64 / n as f64;
                put([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
        }
        if let [p] = path[..] {
            if p.iter().all(|v| v.is_finite()) {
                put(p);
            }
        }
    }
    out
}

pub fn save_overlay(image: &Field2, paths: &[Vec<[f64; 2]>], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    render_overlay(image, paths).save(path)?;
    Ok(())
}
