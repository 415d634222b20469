//! Lifts a crossing to an orientation score and reads the vesselness at the
//! crossing point: both branch orientations stand out separately.
//!
//! `cargo run --release --example orientation_score`

use geotrack::lifting::{build_cake_wavelets, orientation_score, vesselness_m2, CakeParams};
use geotrack::phantom::crossing_image;

fn main() -> geotrack::Result<()> {
    let (w, h) = (64, 64);
    let angle = 60f64.to_radians();
    let image = crossing_image(w, h, [31.5, 31.5], 0.0, angle, 2.0);

    let stack = build_cake_wavelets(CakeParams::default())?;
    let score = orientation_score(&image, &stack)?;

    let recon = score.reconstruct();
    let err = image
        .data
        .iter()
        .zip(&recon.data)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!(
        "{} orientations, reconstruction error {err:.3}",
        stack.n_orientations()
    );

    let v = vesselness_m2(&score, &[1.5, 2.5])?.normalized();
    println!("vesselness at the crossing, by orientation:");
    for (k, slice) in v.slices.iter().enumerate() {
        let val = slice.get(32, 32);
        let bar = "#".repeat((val * 40.0).round() as usize);
        println!(
            "{:6.1} deg {val:.3} {bar}",
            stack.orientation(k).to_degrees()
        );
    }
    Ok(())
}
