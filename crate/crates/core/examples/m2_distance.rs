//! Distance maps on M2 with a constant cost, for the sub-Riemannian and the
//! forward-gear models.
//!
//! `cargo run --release --example m2_distance`

use std::f64::consts::PI;

use geotrack::eikonal::{solve, SolverParams};
use geotrack::grid::GridSpec;
use geotrack::lifting::CostVolume;
use geotrack::manifold::ManifoldKind;
use geotrack::metric::{MetricParams, Model};

fn main() -> geotrack::Result<()> {
    let grid = GridSpec::m2(41, (-1.0, 1.0), 41, (-1.0, 1.0), 32)?;
    let cost = CostVolume::constant(grid, 1.0);

    let mut maps = Vec::new();
    for model in [Model::SubRiemannian, Model::ForwardGear] {
        let metric = MetricParams::new(model, ManifoldKind::M2, 4.0, 0.0)?;
        let map = solve(&cost, [0.0, 0.0, 0.0], &SolverParams::new(metric))?;
        let r = map.report.as_ref().unwrap();
        println!(
            "{model:?}: {} iterations, residual {:.2e}, monotone {}",
            r.iterations, r.residual, r.monotone
        );
        maps.push(map);
    }

    // ahead of the seed both models agree; behind it the forward gear has to
    // turn around instead of reversing
    println!("\n   x     SR      FG   (theta = 0, y = 0)");
    for x in [-0.75, -0.5, -0.25, 0.25, 0.5, 0.75] {
        let v: Vec<f64> = maps
            .iter()
            .map(|m| m.volume.sample([x, 0.0, 0.0]).unwrap())
            .collect();
        println!("{x:+.2} {:7.4} {:7.4}", v[0], v[1]);
    }
    println!("\n  theta   SR      FG   (pure rotation at the seed)");
    for th in [PI / 4.0, PI / 2.0, 3.0 * PI / 4.0] {
        let v: Vec<f64> = maps
            .iter()
            .map(|m| m.volume.sample([0.0, 0.0, th]).unwrap())
            .collect();
        println!("{th:.3} {:7.4} {:7.4}", v[0], v[1]);
    }
    Ok(())
}
