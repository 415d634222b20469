//! Moving frames on M2 and W2 and the stereographic-type map between them.
//!
//! `cargo run --release --example frames_and_projection`

use std::f64::consts::PI;

use geotrack::manifold::{frame_m2, frame_w2, w2_flow, PlanarPoint, SphericalPoint};
use geotrack::oracle::horizontality_probe;
use geotrack::projection::{pi, pi_inverse, CameraGeometry, Pi, Pi_inverse};

fn main() -> geotrack::Result<()> {
    let geom = CameraGeometry::default();

    let p = PlanarPoint::new(0.3, -0.2, PI / 6.0);
    let f = frame_m2(&p);
    println!("M2 frame at {:?}", p.coords());
    for i in 0..3 {
        println!(
            "  A{} = {:?}",
            i + 1,
            f.vector(i).map(|v| (v * 1e6).round() / 1e6)
        );
    }

    let q = SphericalPoint::new(0.4, -0.3, 0.7);
    let f = frame_w2(&q)?;
    println!(
        "W2 frame at {:?}, duality defect {:.1e}",
        q.coords(),
        f.duality_defect()
    );

    // flowing along B1 for a short time stays horizontal: the image moves
    // along the planar orientation
    let moved = w2_flow(&q, 0, 1e-4)?;
    let (a, b) = (Pi(&q, &geom)?, Pi(&moved, &geom)?);
    let heading = (b.y - a.y).atan2(b.x - a.x);
    println!("B1 flow heading {heading:.6}, orientation {:.6}", a.theta);

    let back = Pi_inverse(&a, &geom)?;
    println!(
        "round trip error {:.1e}",
        (back.alpha - q.alpha).abs() + (back.beta - q.beta).abs() + (back.phi - q.phi).abs()
    );

    println!(
        "horizontality probe: {:.2e} exact, {:.2e} with a 1e-3 offset",
        horizontality_probe(&geom, 1000, 0.0, 1),
        horizontality_probe(&geom, 1000, 1e-3, 1)
    );

    // radial distortion over the field of view
    for psi in [0.25, 0.5, 0.75, 1.0].map(|s| s * geom.psi_max) {
        let [x, _] = pi(psi, 0.0, &geom)?;
        let [a, _] = pi_inverse(x, 0.0, &geom)?;
        println!(
            "psi {psi:.3}: plane radius {x:.4}, ratio {:+.1}%, inverse {a:.6}",
            (x / psi - 1.0) * 100.0
        );
    }
    Ok(())
}
