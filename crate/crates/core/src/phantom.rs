//! Synthetic test images: straight lines, crossings, curved tubes and a
//! fundus-like patch. Pixel frame: column `x` to the right, row `y` down,
//! angles measured from the x axis towards y.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::Field2;

fn gaussian_profile(d: f64, width: f64) -> f64 {
    (-d * d / (2.0 * width * width)).exp()
}

/// Bright infinite line through `center` with orientation `theta` and a
/// Gaussian cross-section of standard deviation `width`.
pub fn line_image(w: usize, h: usize, center: [f64; 2], theta: f64, width: f64) -> Field2 {
    let (s, c) = theta.sin_cos();
    Field2::from_fn(w, h, |x, y| {
        let dx = x as f64 - center[0];
        let dy = y as f64 - center[1];
        gaussian_profile(-s * dx + c * dy, width)
    })
}

/// Two lines through a common point, combined by maximum.
pub fn crossing_image(
    w: usize,
    h: usize,
    center: [f64; 2],
    t1: f64,
    t2: f64,
    width: f64,
) -> Field2 {
    let a = line_image(w, h, center, t1, width);
    let b = line_image(w, h, center, t2, width);
    Field2 {
        width: w,
        height: h,
        data: a.data.iter().zip(&b.data).map(|(p, q)| p.max(*q)).collect(),
    }
}

/// Smooth random texture in `[0, 1]`: a sum of low-frequency plane waves.
pub fn smooth_random_image(w: usize, h: usize, seed: u64) -> Field2 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..24)
        .map(|_| {
            let r = rng.gen_range(0.02..0.12) * 2.0 * PI;
            let t = rng.gen_range(0.0..2.0 * PI);
            (
                r * t.cos(),
                r * t.sin(),
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(0.3..1.0),
            )
        })
        .collect();
    let f = Field2::from_fn(w, h, |x, y| {
        waves
            .iter()
            .map(|&(kx, ky, ph, a)| a * (kx * x as f64 + ky * y as f64 + ph).cos())
            .sum()
    });
    crate::lifting::normalize(&f)
}

/// Polyline centreline in pixel coordinates.
pub type Centerline = Vec<[f64; 2]>;

/// Samples `curve(t)` for `t` in `[0, 1]`.
pub fn sample_curve(n: usize, curve: impl Fn(f64) -> [f64; 2]) -> Centerline {
    (0..=n).map(|i| curve(i as f64 / n as f64)).collect()
}

/// Euclidean distance from `p` to a polyline.
pub fn distance_to_polyline(p: [f64; 2], line: &[[f64; 2]]) -> f64 {
    let mut best = f64::INFINITY;
    for seg in line.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let d = [b[0] - a[0], b[1] - a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        let t = if len2 > 0.0 {
            (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [a[0] + t * d[0] - p[0], a[1] + t * d[1] - p[1]];
        best = best.min(q[0].hypot(q[1]));
    }
    best
}

/// Renders tubes (bright, Gaussian cross-section) along the centrelines.
pub fn render_tubes(w: usize, h: usize, lines: &[(Centerline, f64, f64)]) -> Field2 {
    Field2::from_fn(w, h, |x, y| {
        let p = [x as f64, y as f64];
        lines
            .iter()
            .map(|(l, width, contrast)| {
                contrast * gaussian_profile(distance_to_polyline(p, l), *width)
            })
            .fold(0.0, f64::max)
    })
}

/// A tube phantom together with its ground-truth centrelines.
#[derive(Debug, Clone)]
pub struct TubePhantom {
    pub image: Field2,
    pub centerlines: Vec<Centerline>,
}

/// Two curved tubes crossing twice. Tube 0 is a wide arc bulging above tube 1,
/// which is a gently curved near-horizontal tube; between the crossings tube 1
/// is the shorter connection. `bend` is the bulge height in pixels.
pub fn double_crossing(w: usize, h: usize, bend: f64) -> TubePhantom {
    let (wf, hf) = (w as f64, h as f64);
    let cy = 0.58 * hf;
    let x0 = 0.08 * wf;
    let x1 = 0.92 * wf;
    let straight = sample_curve(200, |t| {
        let x = x0 + t * (x1 - x0);
        [x, cy + 0.04 * hf * (PI * t).sin()]
    });
    let arc = sample_curve(200, |t| {
        let x = x0 + t * (x1 - x0);
        // crosses the lower tube near t = 0.25 and t = 0.75
        let s = (2.0 * PI * (t - 0.25)).sin();
        [x, cy + 0.04 * hf * (PI * t).sin() - bend * s]
    });
    let image = render_tubes(
        w,
        h,
        &[(arc.clone(), 1.3, 1.0), (straight.clone(), 1.3, 1.0)],
    );
    TubePhantom {
        image,
        centerlines: vec![arc, straight],
    }
}

/// Fundus-like patch: dark branching vessels of varying calibre on a bright,
/// vignetted background with mild noise. Returned centrelines are the vessel
/// axes in pixel coordinates; entry 0 is the main trunk.
pub fn fundus_patch(w: usize, h: usize, seed: u64) -> TubePhantom {
    let (wf, hf) = (w as f64, h as f64);
    let trunk = sample_curve(240, |t| {
        [
            0.06 * wf + 0.88 * wf * t,
            0.30 * hf + 0.22 * hf * t + 0.06 * hf * (2.2 * PI * t).sin(),
        ]
    });
    let branch1 = sample_curve(160, |t| {
        [
            0.30 * wf + 0.40 * wf * t,
            0.37 * hf + 0.50 * hf * t - 0.05 * hf * (PI * t).sin(),
        ]
    });
    let branch2 = sample_curve(160, |t| {
        [
            0.55 * wf + 0.38 * wf * t,
            0.43 * hf - 0.36 * hf * t + 0.04 * hf * (1.5 * PI * t).sin(),
        ]
    });
    let vein = sample_curve(240, |t| {
        [
            0.10 * wf + 0.80 * wf * t,
            0.80 * hf - 0.62 * hf * t + 0.07 * hf * (1.7 * PI * t).sin(),
        ]
    });
    let small = sample_curve(120, |t| {
        [0.15 * wf + 0.25 * wf * t, 0.62 * hf + 0.30 * hf * t]
    });
    let lines = vec![
        (trunk.clone(), 1.6, 0.55),
        (vein.clone(), 1.9, 0.6),
        (branch1.clone(), 1.1, 0.45),
        (branch2.clone(), 1.0, 0.4),
        (small.clone(), 0.8, 0.35),
    ];
    let vessels = render_tubes(w, h, &lines);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cx, cy) = ((wf - 1.0) / 2.0, (hf - 1.0) / 2.0);
    let r0 = wf.max(hf);
    let mut img = Field2::from_fn(w, h, |x, y| {
        let r = ((x as f64 - cx).hypot(y as f64 - cy)) / r0;
        0.8 - 0.25 * r * r - vessels.get(x, y)
    });
    for v in &mut img.data {
        *v = (*v + rng.gen_range(-0.02..0.02)).clamp(0.0, 1.0);
    }
    TubePhantom {
        image: img,
        centerlines: vec![trunk, vein, branch1, branch2, small],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_peaks_on_its_axis() {
        let f = line_image(32, 32, [16.0, 16.0], 0.0, 1.5);
        assert_eq!(f.get(3, 16), 1.0);
        assert!(f.get(3, 20) < 0.1);
    }

    #[test]
    fn polyline_distance() {
        let l = vec![[0.0, 0.0], [10.0, 0.0]];
        assert_eq!(distance_to_polyline([5.0, 3.0], &l), 3.0);
        assert_eq!(distance_to_polyline([13.0, 4.0], &l), 5.0);
    }

    #[test]
    fn random_image_is_reproducible_and_normalized() {
        let a = smooth_random_image(20, 20, 3);
        assert_eq!(a, smooth_random_image(20, 20, 3));
        assert_ne!(a, smooth_random_image(20, 20, 4));
        assert!(a.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn double_crossing_curves_intersect_twice() {
        let p = double_crossing(96, 96, 14.0);
        let (arc, straight) = (&p.centerlines[0], &p.centerlines[1]);
        let sign: Vec<bool> = arc.iter().zip(straight).map(|(a, b)| a[1] < b[1]).collect();
        let changes = sign.windows(2).filter(|s| s[0] != s[1]).count();
        assert_eq!(changes, 2);
    }
}
