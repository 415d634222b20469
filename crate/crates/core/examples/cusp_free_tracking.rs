//! Backtracks a tip that sits behind the seed. The sub-Riemannian geodesic
//! reverses (a cusp); the forward-gear geodesic turns in place instead.
//!
//! `cargo run --release --example cusp_free_tracking`

use std::f64::consts::PI;

use geotrack::eikonal::{solve, SolverParams};
use geotrack::grid::GridSpec;
use geotrack::lifting::CostVolume;
use geotrack::manifold::ManifoldKind;
use geotrack::metric::{MetricParams, Model};
use geotrack::tracking::{backtrack, TrackParams};

fn main() -> geotrack::Result<()> {
    let grid = GridSpec::m2(41, (-1.0, 1.0), 41, (-1.0, 1.0), 32)?;
    let cost = CostVolume::constant(grid, 1.0);
    let tip = [-0.4, 0.25, PI / 2.0];

    for model in [Model::SubRiemannian, Model::ForwardGear] {
        let metric = MetricParams::new(model, ManifoldKind::M2, 4.0, 0.0)?;
        let map = solve(&cost, [0.0, 0.0, 0.0], &SolverParams::new(metric))?;
        let track = backtrack(&map, &cost, &metric, tip, &TrackParams::default())?;
        println!(
            "{model:?}: {} samples, length {:.4}, W(tip) {:.4}, cusps at {:?}",
            track.len(),
            track.finsler_length,
            map.volume.sample(tip).unwrap(),
            track.cusps
        );
    }
    Ok(())
}
