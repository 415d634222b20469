//! Compares the PDE distance with an exact shortest path on a dense lattice
//! graph over the same grid.
//!
//! `cargo run --release --example oracle_comparison`

use geotrack::eikonal::{solve, SolverParams};
use geotrack::grid::GridSpec;
use geotrack::lifting::CostVolume;
use geotrack::manifold::ManifoldKind;
use geotrack::metric::{MetricParams, Model};
use geotrack::oracle::{dijkstra_distance, LiftedGraph, StencilSpec};

fn main() -> geotrack::Result<()> {
    let grid = GridSpec::m2(32, (-1.0, 1.0), 32, (-1.0, 1.0), 16)?;
    let cost = CostVolume::constant(grid, 1.0);
    let metric = MetricParams::new(Model::SubRiemannian, ManifoldKind::M2, 8.0, 0.2)?;
    let seed = grid.index(16, 16, 8);

    let pde = solve(&cost, grid.coords(seed), &SolverParams::new(metric))?;
    let graph = LiftedGraph::new(&cost, &metric, &StencilSpec::default())?;
    println!(
        "lattice graph: {} nodes, {} edges",
        grid.len(),
        graph.edge_count()
    );
    let exact = dijkstra_distance(&graph, seed);

    let mut within = 0;
    let mut compared = 0;
    let mut worst: f64 = 0.0;
    for (idx, (&a, &b)) in pde.volume.data.iter().zip(&exact).enumerate() {
        if idx == seed || !b.is_finite() || !pde.is_reached(idx) {
            continue;
        }
        let rel = (a - b).abs() / b;
        compared += 1;
        within += usize::from(rel <= 0.05);
        worst = worst.max(rel);
    }
    println!(
        "{:.1}% of {compared} nodes agree within 5%, worst {:.1}%",
        100.0 * within as f64 / compared as f64,
        100.0 * worst
    );
    Ok(())
}
