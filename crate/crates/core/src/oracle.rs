//! Brute-force references: shortest paths on a lifted lattice graph and a
//! finite-difference probe of the horizontality of `Pi`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid::GridSpec;
use crate::lifting::cost::CostVolume;
use crate::manifold::{
    angle_diff, coords_from_rotation, rotation_from_coords, Rotation3, SphericalPoint,
};
use crate::metric::{finsler, MetricParams};
use crate::projection::{pi, CameraGeometry, Pi};

/// Neighbourhood of the lattice graph: every primitive integer offset
/// `(di, dj, dk)` with `|di|, |dj| <= spatial` and `|dk| <= angular`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilSpec {
    pub spatial: usize,
    pub angular: usize,
    /// Quadrature points per edge for the metric length of the segment.
    pub quadrature: usize,
}

impl Default for StencilSpec {
    fn default() -> Self {
        Self {
            spatial: 6,
            angular: 3,
            quadrature: 6,
        }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl StencilSpec {
    pub fn offsets(&self) -> Vec<[i64; 3]> {
        let (s, a) = (self.spatial as i64, self.angular as i64);
        let mut out = Vec::new();
        for di in -s..=s {
            for dj in -s..=s {
                for dk in -a..=a {
                    if gcd(gcd(di, dj), dk) == 1 {
                        out.push([di, dj, dk]);
                    }
                }
            }
        }
        out
    }
}

/// Directed graph on the grid nodes. Edge weights are the Finsler length of
/// the straight coordinate segment between the endpoints, integrated with
/// the midpoint rule; edges of infinite length (forward gear moving
/// backwards, or lateral motion when `eta = 0`) are omitted.
#[derive(Debug, Clone)]
pub struct LiftedGraph {
    pub grid: GridSpec,
    pub adjacency: Vec<Vec<(u32, f64)>>,
}

impl LiftedGraph {
    pub fn new(cost: &CostVolume, metric: &MetricParams, stencil: &StencilSpec) -> Result<Self> {
        let grid = *cost.grid();
        let offsets = stencil.offsets();
        let shape = grid.shape();
        let q = stencil.quadrature.max(1);
        let mut adjacency = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let node = grid.unravel(idx);
            let c0 = grid.coords(idx);
            let mut edges = Vec::new();
            for off in &offsets {
                let mut nb = [0usize; 3];
                let mut inside = true;
                for k in 0..3 {
                    let v = node[k] as i64 + off[k];
                    let n = shape[k] as i64;
                    if grid.axes[k].periodic {
                        nb[k] = v.rem_euclid(n) as usize;
                    } else if v < 0 || v >= n {
                        inside = false;
                    } else {
                        nb[k] = v as usize;
                    }
                }
                if !inside {
                    continue;
                }
                let d = [
                    off[0] as f64 * grid.axes[0].step,
                    off[1] as f64 * grid.axes[1].step,
                    off[2] as f64 * grid.axes[2].step,
                ];
                let mut len = 0.0;
                for s in 0..q {
                    let t = (s as f64 + 0.5) / q as f64;
                    let p = [c0[0] + t * d[0], c0[1] + t * d[1], c0[2] + t * d[2]];
                    let c = cost.volume.sample_clamped(p);
                    len += finsler(p, d, c, metric)? / q as f64;
                }
                if len.is_finite() {
                    edges.push((grid.index(nb[0], nb[1], nb[2]) as u32, len));
                }
            }
            adjacency.push(edges);
        }
        Ok(Self { grid, adjacency })
    }

    /// Builds a graph from explicit adjacency lists.
    pub fn from_adjacency(grid: GridSpec, adjacency: Vec<Vec<(u32, f64)>>) -> Self {
        Self { grid, adjacency }
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }
}

#[derive(PartialEq)]
struct Entry(f64, u32);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties broken by node index
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact single-source shortest paths; unreachable nodes stay `+inf`.
pub fn dijkstra_distance(graph: &LiftedGraph, seed: usize) -> Vec<f64> {
    let n = graph.adjacency.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[seed] = 0.0;
    heap.push(Entry(0.0, seed as u32));
    while let Some(Entry(d, u)) = heap.pop() {
        let u = u as usize;
        if done[u] {
            continue;
        }
        done[u] = true;
        for &(v, w) in &graph.adjacency[u] {
            let nd = d + w;
            if nd < dist[v as usize] {
                dist[v as usize] = nd;
                heap.push(Entry(nd, v));
            }
        }
    }
    dist
}

/// Maximum angular mismatch between the planar tangent of `pi` along short
/// horizontal W2 arcs and the orientation returned by `Pi` (shifted by
/// `theta_offset`, which exists to check the probe's sensitivity).
pub fn horizontality_probe(
    geom: &CameraGeometry,
    n_samples: usize,
    theta_offset: f64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-3;
    let lim = 0.9 * geom.psi_max;
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < n_samples {
        let q = SphericalPoint::new(
            rng.gen_range(-lim..lim),
            rng.gen_range(-lim..lim),
            rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        );
        let c1: f64 = rng.gen_range(0.2..1.0);
        let c3: f64 = rng.gen_range(-1.0..1.0);
        let r = rotation_from_coords(&q);
        // exp(t (c1 G_alpha + c3 G_phi)) rotates about (c3, -c1, 0)
        let arc = |t: f64| {
            let g = nalgebra::Rotation3::from_scaled_axis(Vector3::new(t * c3, -t * c1, 0.0));
            coords_from_rotation(&(r * Rotation3(*g.matrix())))
        };
        let (Ok(a), Ok(b)) = (arc(h), arc(-h)) else {
            continue;
        };
        let (Ok(pa), Ok(pb), Ok(p0)) = (
            pi(a.alpha, a.beta, geom),
            pi(b.alpha, b.beta, geom),
            Pi(&q, geom),
        ) else {
            continue;
        };
        let angle = (pa[1] - pb[1]).atan2(pa[0] - pb[0]);
        worst = worst.max(angle_diff(angle, p0.theta + theta_offset).abs());
        done += 1;
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScalarVolume;
    use crate::manifold::ManifoldKind;
    use crate::metric::Model;

    #[test]
    fn single_node_graph() {
        let g = GridSpec::m2(4, (0.0, 1.0), 4, (0.0, 1.0), 4).unwrap();
        let graph = LiftedGraph::from_adjacency(g, vec![vec![]]);
        assert_eq!(dijkstra_distance(&graph, 0), vec![0.0]);
    }

    #[test]
    fn chain_distance_is_hop_sum() {
        let g = GridSpec::m2(4, (0.0, 1.0), 4, (0.0, 1.0), 4).unwrap();
        let k = 9;
        let adjacency = (0..=k)
            .map(|i| {
                if i < k {
                    vec![(i as u32 + 1, 0.25)]
                } else {
                    vec![]
                }
            })
            .collect();
        let d = dijkstra_distance(&LiftedGraph::from_adjacency(g, adjacency), 0);
        assert_eq!(d[k], k as f64 * 0.25);
    }

    #[test]
    fn stencil_edge_counts() {
        let spec = StencilSpec {
            spatial: 1,
            angular: 1,
            quadrature: 2,
        };
        assert_eq!(spec.offsets().len(), 26);
        let g = GridSpec::m2(6, (-1.0, 1.0), 6, (-1.0, 1.0), 8).unwrap();
        let cost = CostVolume::constant(g, 1.0);
        let sr = MetricParams::new(Model::SubRiemannian, ManifoldKind::M2, 1.0, 0.5).unwrap();
        let graph = LiftedGraph::new(&cost, &sr, &spec).unwrap();
        // interior spatial nodes see every offset, theta wraps
        let interior = g.index(2, 3, 0);
        assert_eq!(graph.adjacency[interior].len(), 26);
        assert_eq!(graph.adjacency[g.index(0, 0, 0)].len(), 26 - 9 - 9 + 3);
        assert!(graph.adjacency.iter().flatten().all(|(_, w)| *w > 0.0));
        // forward gear drops every edge with a backward spatial component
        let fw = MetricParams {
            model: Model::ForwardGear,
            ..sr
        };
        let fgraph = LiftedGraph::new(&cost, &fw, &spec).unwrap();
        assert!(fgraph.adjacency[interior].len() < 26);
        // eta = 0 keeps only edges free of lateral motion at every quadrature point
        let exact = MetricParams { eta: 0.0, ..sr };
        let egraph = LiftedGraph::new(&cost, &exact, &spec).unwrap();
        assert!(egraph.edge_count() < graph.edge_count());
    }

    #[test]
    fn dijkstra_is_deterministic_and_bounded_below() {
        let g = GridSpec::m2(10, (-1.0, 1.0), 10, (-1.0, 1.0), 8).unwrap();
        let cost = CostVolume {
            volume: ScalarVolume::from_fn(g, |c| 0.5 + 0.4 * c[0].sin()),
            provenance: crate::lifting::CostProvenance::Constant,
            coverage: None,
        };
        let m = MetricParams::new(Model::SubRiemannian, ManifoldKind::M2, 2.0, 0.2).unwrap();
        let graph = LiftedGraph::new(&cost, &m, &StencilSpec::default()).unwrap();
        let seed = g.index(5, 5, 3);
        let a = dijkstra_distance(&graph, seed);
        let b = dijkstra_distance(&graph, seed);
        assert_eq!(a, b);
        // lower bound: pure rotation at cost >= 0.1 everywhere
        assert!(a.iter().all(|d| d.is_finite() && *d >= 0.0));
    }

    #[test]
    fn probe_reference_behaviour() {
        let geom = CameraGeometry::default();
        assert_eq!(horizontality_probe(&geom, 0, 0.0, 1), 0.0);
        assert!(horizontality_probe(&geom, 1000, 0.0, 2) < 1e-4);
        assert!(horizontality_probe(&geom, 200, 0.01, 3) >= 0.009);
    }
}
