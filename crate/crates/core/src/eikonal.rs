//! Iterated relaxed eikonal solver.
//!
//! Starting from the morphological delta at the seed, every iteration applies
//! `W <- min(W, W + eps (1 - F*(p, dW)))` to all nodes synchronously, where
//! `dW` is estimated by upwind differences along the frame directions. Each
//! node's new value depends only on the previous field, so the sweep is
//! computed in parallel with results identical to a sequential sweep.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarVolume};
use crate::lifting::cost::CostVolume;
use crate::manifold::FrameEntry;
use crate::metric::{dual_finsler_components, MetricParams, Model};

/// Stand-in for +infinity in distance maps.
pub const SENTINEL: f64 = 1e10;

/// Edge length of the cubic blocks used for activity tracking.
const BLOCK: usize = 8;

/// Fractional indices closer than this to the grid boundary are clamped onto it.
const EDGE_SNAP: f64 = 1e-9;

/// Frames at every node plus the fractional-index positions of the upwind
/// samples `p +- h_i X_i`.
#[derive(Debug, Clone)]
pub struct FrameField {
    pub grid: GridSpec,
    pub frames: Vec<FrameEntry>,
    /// Step length along each frame direction, chosen so that `h_i X_i`
    /// spans one cell along its dominant index axis.
    pub steps: Vec<[f64; 3]>,
    /// `samples[node][2 i]` is `p + h_i X_i`, `samples[node][2 i + 1]` is
    /// `p - h_i X_i`; `None` when outside the grid.
    pub samples: Vec<[Option<Stencil>; 6]>,
    /// Index-space displacement `h_i X_i` per node and direction.
    pub displacements: Vec<[[f64; 3]; 3]>,
}

/// Precomputed trilinear stencil: flat-index contributions of the two
/// bracketing nodes along each axis and the upper weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub fractional: [f64; 3],
    offsets: [[u32; 2]; 3],
    t: [f64; 3],
}

impl Stencil {
    fn new(grid: &GridSpec, f: [f64; 3]) -> Self {
        let n1 = grid.axes[1].n as u32;
        let n2 = grid.axes[2].n as u32;
        let stride = [n1 * n2, n2, 1];
        let mut offsets = [[0u32; 2]; 3];
        let mut t = [0.0; 3];
        for k in 0..3 {
            let (a, b, tk) = grid.axes[k].bracket(f[k]);
            offsets[k] = [a as u32 * stride[k], b as u32 * stride[k]];
            t[k] = tk;
        }
        Self {
            fractional: f,
            offsets,
            t,
        }
    }

    /// Same value as [`trilinear`] at `fractional`.
    #[inline]
    pub fn eval(&self, w: &[f64]) -> f64 {
        let [oi, oj, ok] = self.offsets;
        let [ti, tj, tk] = self.t;
        let line = |base: u32| {
            let a = w[(base + ok[0]) as usize];
            if tk == 0.0 {
                a
            } else {
                a + tk * (w[(base + ok[1]) as usize] - a)
            }
        };
        let plane = |base: u32| {
            let a = line(base + oj[0]);
            if tj == 0.0 {
                a
            } else {
                a + tj * (line(base + oj[1]) - a)
            }
        };
        let a = plane(oi[0]);
        if ti == 0.0 {
            a
        } else {
            a + ti * (plane(oi[1]) - a)
        }
    }
}

fn fractional_clamped(grid: &GridSpec, f: [f64; 3]) -> Option<[f64; 3]> {
    let mut out = f;
    for k in 0..3 {
        let a = &grid.axes[k];
        let n = a.n as f64;
        if a.periodic {
            out[k] = f[k].rem_euclid(n);
            if out[k] >= n {
                out[k] -= n;
            }
        } else {
            let hi = n - 1.0;
            if f[k] < -EDGE_SNAP || f[k] > hi + EDGE_SNAP {
                return None;
            }
            out[k] = f[k].clamp(0.0, hi);
        }
    }
    Some(out)
}

/// Frame, steps, upwind stencils and inverse frame matrix at one node.
type NodeFrame = (FrameEntry, [f64; 3], [Option<Stencil>; 6], [[f64; 3]; 3]);

impl FrameField {
    pub fn new(grid: &GridSpec) -> Result<Self> {
        grid.validate()?;
        let spacing = grid.spacing();
        let per_node: Vec<NodeFrame> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let c = grid.coords(idx);
                let fr = grid.manifold.frame(c)?;
                let node = grid.unravel(idx).map(|v| v as f64);
                let mut steps = [0.0; 3];
                let mut samples = [None; 6];
                let mut disp = [[0.0; 3]; 3];
                for i in 0..3 {
                    let v = fr.vector(i);
                    let cells = [v[0] / spacing[0], v[1] / spacing[1], v[2] / spacing[2]];
                    let norm = cells[0].abs().max(cells[1].abs()).max(cells[2].abs());
                    let h = 1.0 / norm;
                    steps[i] = h;
                    disp[i] = cells.map(|c| h * c);
                    for (s, sign) in [(0, 1.0), (1, -1.0)] {
                        let f = [
                            node[0] + sign * h * cells[0],
                            node[1] + sign * h * cells[1],
                            node[2] + sign * h * cells[2],
                        ];
                        samples[2 * i + s] =
                            fractional_clamped(grid, f).map(|f| Stencil::new(grid, f));
                    }
                }
                Ok((fr, steps, samples, disp))
            })
            .collect::<Result<_>>()?;
        let mut frames = Vec::with_capacity(per_node.len());
        let mut steps = Vec::with_capacity(per_node.len());
        let mut samples = Vec::with_capacity(per_node.len());
        let mut displacements = Vec::with_capacity(per_node.len());
        for (f, h, s, d) in per_node {
            frames.push(f);
            steps.push(h);
            samples.push(s);
            displacements.push(d);
        }
        Ok(Self {
            grid: *grid,
            frames,
            steps,
            samples,
            displacements,
        })
    }

    /// Value of `w` at `p + 2 sign h_i X_i`, if inside the grid.
    #[inline]
    fn far_sample(&self, w: &[f64], idx: usize, i: usize, sign: f64) -> Option<f64> {
        let node = self.grid.unravel(idx);
        let d = self.displacements[idx][i];
        let f = [
            node[0] as f64 + 2.0 * sign * d[0],
            node[1] as f64 + 2.0 * sign * d[1],
            node[2] as f64 + 2.0 * sign * d[2],
        ];
        fractional_clamped(&self.grid, f).map(|f| Stencil::new(&self.grid, f).eval(w))
    }

    /// Upwind frame-component covector at one node. With `second_order`,
    /// one-sided three-point differences replace two-point ones wherever the
    /// upstream values decrease monotonically away from the node.
    #[inline]
    pub fn upwind_at(
        &self,
        w: &[f64],
        idx: usize,
        model: Model,
        weights: [f64; 3],
        second_order: bool,
    ) -> [f64; 3] {
        let w0 = w[idx];
        let h = self.steps[idx];
        let s = &self.samples[idx];
        let mut lambda = [0.0; 3];
        for i in 0..3 {
            if weights[i] == 0.0 {
                continue;
            }
            let mut back = 0.0;
            if let Some(st) = &s[2 * i + 1] {
                let w1 = st.eval(w);
                if w1 < w0 {
                    back = (w0 - w1) / h[i];
                    if second_order && w0 < 0.5 * SENTINEL {
                        if let Some(w2) = self.far_sample(w, idx, i, -1.0).filter(|&w2| w2 <= w1) {
                            let b2 = (3.0 * w0 - 4.0 * w1 + w2) / (2.0 * h[i]);
                            if b2 > 0.0 {
                                back = b2;
                            }
                        }
                    }
                }
            }
            let forward_only = i == 0 && model == Model::ForwardGear;
            let mut fwd = 0.0;
            if !forward_only {
                if let Some(st) = &s[2 * i] {
                    let w1 = st.eval(w);
                    if w1 < w0 {
                        fwd = (w1 - w0) / h[i];
                        if second_order && w0 < 0.5 * SENTINEL {
                            if let Some(w2) = self.far_sample(w, idx, i, 1.0).filter(|&w2| w2 <= w1)
                            {
                                let f2 = -(3.0 * w0 - 4.0 * w1 + w2) / (2.0 * h[i]);
                                if f2 < 0.0 {
                                    fwd = f2;
                                }
                            }
                        }
                    }
                }
            }
            // keep the candidate contributing most to the Hamiltonian
            lambda[i] = if back * back >= fwd * fwd { back } else { fwd };
        }
        lambda
    }
}

/// Upwind frame-component covector estimates `(dW(X_1), dW(X_2), dW(X_3))`
/// at every node.
pub fn upwind_frame_derivatives(
    w: &[f64],
    frames: &FrameField,
    metric: &MetricParams,
    second_order: bool,
) -> Vec<[f64; 3]> {
    let weights = metric.dual_weights();
    (0..w.len())
        .into_par_iter()
        .map(|idx| frames.upwind_at(w, idx, metric.model, weights, second_order))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub metric: MetricParams,
    /// Uniform pseudo-time step; `None` uses the local stability bound
    /// scaled by `cfl`.
    pub epsilon: Option<f64>,
    pub cfl: f64,
    /// Iteration cap; `None` means `10 (n1 + n2 + n3)`.
    pub n_max: Option<usize>,
    pub tol_sup: f64,
    /// Three-point one-sided differences where the upstream data allow it.
    /// Not monotone: underestimates can lock in, so residuals grow.
    pub second_order: bool,
}

impl SolverParams {
    pub fn new(metric: MetricParams) -> Self {
        Self {
            metric,
            epsilon: None,
            cfl: 0.9,
            n_max: None,
            tol_sup: 1e-4,
            second_order: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.metric.validate()?;
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::BadConfig(format!(
                    "epsilon must be positive, got {e}"
                )));
            }
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::BadConfig(format!(
                "cfl must lie in (0, 1], got {}",
                self.cfl
            )));
        }
        if !(self.tol_sup > 0.0) {
            return Err(Error::BadConfig("tol_sup must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCriterion {
    Tolerance,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub criterion: StopCriterion,
    pub converged: bool,
    /// Largest change in the last iteration, rescaled to the largest time step.
    pub final_sup_change: f64,
    /// `sup |F* - 1|` over reached non-seed nodes with `W < 0.9 max W`.
    pub residual: f64,
    /// True if no node ever increased between iterations.
    pub monotone: bool,
    pub epsilon_min: f64,
    pub epsilon_max: f64,
    pub seed_snap_cells: f64,
    pub params: SolverParams,
    pub seconds: f64,
}

/// Distance map `W` with its seed and solver provenance.
#[derive(Debug, Clone)]
pub struct DistanceMap {
    pub volume: ScalarVolume,
    pub seed: [f64; 3],
    pub seed_index: usize,
    pub report: Option<SolverReport>,
}

impl DistanceMap {
    pub fn grid(&self) -> &GridSpec {
        &self.volume.grid
    }

    pub fn max_finite(&self) -> f64 {
        self.volume
            .data
            .iter()
            .filter(|v| **v < 0.5 * SENTINEL)
            .fold(0.0, |a, &b| a.max(b))
    }

    pub fn is_reached(&self, idx: usize) -> bool {
        self.volume.data[idx] < 0.5 * SENTINEL
    }
}

/// Morphological delta: 0 at the node nearest `seed`, [`SENTINEL`] elsewhere.
/// Returns the map and the snap distance in cells.
pub fn initialize(grid: &GridSpec, seed: [f64; 3]) -> Result<(DistanceMap, f64)> {
    let (idx, snap) = grid.nearest_node(seed)?;
    let mut v = ScalarVolume::filled(*grid, SENTINEL);
    v.data[idx] = 0.0;
    Ok((
        DistanceMap {
            volume: v,
            seed,
            seed_index: idx,
            report: None,
        },
        snap,
    ))
}

struct Blocks {
    counts: [usize; 3],
    periodic: [bool; 3],
    shape: [usize; 3],
}

impl Blocks {
    fn new(grid: &GridSpec) -> Self {
        let shape = grid.shape();
        Self {
            counts: shape.map(|n| n.div_ceil(BLOCK)),
            periodic: [
                grid.axes[0].periodic,
                grid.axes[1].periodic,
                grid.axes[2].periodic,
            ],
            shape,
        }
    }

    fn len(&self) -> usize {
        self.counts.iter().product()
    }

    fn unravel(&self, b: usize) -> [usize; 3] {
        let c = self.counts;
        [b / (c[1] * c[2]), (b / c[2]) % c[1], b % c[2]]
    }

    /// Blocks within one block of a changed block.
    fn dilate(&self, changed: &[bool]) -> Vec<usize> {
        let mut active = vec![false; changed.len()];
        let c = self.counts;
        for (b, _) in changed.iter().enumerate().filter(|(_, &ch)| ch) {
            let bb = self.unravel(b);
            for d0 in -1i64..=1 {
                for d1 in -1i64..=1 {
                    for d2 in -1i64..=1 {
                        let mut n = [0usize; 3];
                        let mut ok = true;
                        for (k, d) in [d0, d1, d2].into_iter().enumerate() {
                            let v = bb[k] as i64 + d;
                            let m = c[k] as i64;
                            if self.periodic[k] {
                                n[k] = v.rem_euclid(m) as usize;
                            } else if v < 0 || v >= m {
                                ok = false;
                            } else {
                                n[k] = v as usize;
                            }
                        }
                        if ok {
                            active[(n[0] * c[1] + n[1]) * c[2] + n[2]] = true;
                        }
                    }
                }
            }
        }
        active
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(b, _)| b)
            .collect()
    }

    fn nodes(&self, b: usize, grid: &GridSpec) -> Vec<usize> {
        let bb = self.unravel(b);
        let mut out = Vec::with_capacity(BLOCK * BLOCK * BLOCK);
        for i in bb[0] * BLOCK..((bb[0] + 1) * BLOCK).min(self.shape[0]) {
            for j in bb[1] * BLOCK..((bb[1] + 1) * BLOCK).min(self.shape[1]) {
                for k in bb[2] * BLOCK..((bb[2] + 1) * BLOCK).min(self.shape[2]) {
                    out.push(grid.index(i, j, k));
                }
            }
        }
        out
    }
}

type BlockUpdate = (usize, Vec<(usize, f64)>, f64, bool);

/// Local pseudo-time steps: `cfl / sum_i sqrt(d_i) / (C h_i)` keeps the update
/// monotone in every neighbour value.
fn time_steps(frames: &FrameField, cost: &[f64], params: &SolverParams) -> Vec<f64> {
    if let Some(e) = params.epsilon {
        return vec![e; cost.len()];
    }
    let d = params.metric.dual_weights();
    (0..cost.len())
        .map(|idx| {
            let h = frames.steps[idx];
            let rate: f64 = (0..3).map(|i| d[i].sqrt() / h[i]).sum::<f64>() / cost[idx];
            params.cfl / rate
        })
        .collect()
}

/// Observer invoked after every iteration with the iteration number and the
/// previous and current fields.
pub type IterationHook<'a> = &'a mut dyn FnMut(usize, &[f64], &[f64]);

pub fn solve(cost: &CostVolume, seed: [f64; 3], params: &SolverParams) -> Result<DistanceMap> {
    solve_observed(cost, seed, params, None, None)
}

/// Like [`solve`], reusing precomputed frames and optionally observing every
/// iteration.
pub fn solve_observed(
    cost: &CostVolume,
    seed: [f64; 3],
    params: &SolverParams,
    frames: Option<&FrameField>,
    mut hook: Option<IterationHook<'_>>,
) -> Result<DistanceMap> {
    params.validate()?;
    cost.validate()?;
    let grid = *cost.grid();
    if grid.manifold != params.metric.manifold {
        return Err(Error::BadConfig(format!(
            "cost lives on {} but the metric is for {}",
            grid.manifold, params.metric.manifold
        )));
    }
    let start = Instant::now();
    let owned;
    let frames = match frames {
        Some(f) => f,
        None => {
            owned = FrameField::new(&grid)?;
            &owned
        }
    };
    let (mut map, snap) = initialize(&grid, seed)?;
    let c = &cost.volume.data;
    let eps = time_steps(frames, c, params);
    // changes are compared at the largest step so slow regions are not
    // mistaken for settled ones
    let eps_max = eps.iter().fold(0.0f64, |m, &e| m.max(e));
    let weights = params.metric.dual_weights();
    let model = params.metric.model;
    let n_max = params
        .n_max
        .unwrap_or(10 * grid.shape().iter().sum::<usize>());
    let blocks = Blocks::new(&grid);
    let mut changed = vec![true; blocks.len()];
    let seed_idx = map.seed_index;

    let mut w = std::mem::take(&mut map.volume.data);
    let mut prev = if hook.is_some() {
        w.clone()
    } else {
        Vec::new()
    };
    let mut iterations = 0;
    let mut sup_change = f64::INFINITY;
    let mut monotone = true;
    let mut criterion = StopCriterion::MaxIterations;
    while iterations < n_max {
        let active = blocks.dilate(&changed);
        // (block, changed nodes, scaled sup-change, any increase)
        let updates: Vec<BlockUpdate> = active
            .par_iter()
            .map(|&b| {
                let mut out = Vec::new();
                let mut block_sup: f64 = 0.0;
                let mut increased = false;
                for idx in blocks.nodes(b, &grid) {
                    if idx == seed_idx {
                        continue;
                    }
                    let lambda = frames.upwind_at(&w, idx, model, weights, params.second_order);
                    let f = dual_finsler_components(lambda, c[idx], &params.metric);
                    let old = w[idx];
                    let new = old.min(old + eps[idx] * (1.0 - f));
                    if new > old {
                        increased = true;
                    }
                    if new != old {
                        block_sup = block_sup.max((old - new) * eps_max / eps[idx]);
                        out.push((idx, new));
                    }
                }
                (b, out, block_sup, increased)
            })
            .collect();
        if hook.is_some() {
            prev.clone_from(&w);
        }
        changed.iter_mut().for_each(|v| *v = false);
        sup_change = 0.0;
        for (b, out, s, inc) in updates {
            if !out.is_empty() {
                changed[b] = true;
            }
            for (idx, v) in out {
                w[idx] = v;
            }
            sup_change = sup_change.max(s);
            monotone &= !inc;
        }
        w[seed_idx] = 0.0;
        iterations += 1;
        if let Some(h) = hook.as_mut() {
            h(iterations, &prev, &w);
        }
        if sup_change < params.tol_sup {
            criterion = StopCriterion::Tolerance;
            break;
        }
    }
    // changes of order SENTINEL at the last step mean the front never settled
    let converged = criterion == StopCriterion::Tolerance;
    map.volume.data = w;
    let residual = residual(&map, frames, cost, params);
    let (emin, emax) = eps
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    map.report = Some(SolverReport {
        iterations,
        criterion,
        converged,
        final_sup_change: sup_change,
        residual,
        monotone,
        epsilon_min: emin,
        epsilon_max: emax,
        seed_snap_cells: snap,
        params: *params,
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(map)
}

/// `sup |F*(p, dW) - 1|` over reached non-seed nodes with `W < 0.9 max W`.
pub fn residual(
    map: &DistanceMap,
    frames: &FrameField,
    cost: &CostVolume,
    params: &SolverParams,
) -> f64 {
    let metric = &params.metric;
    let w = &map.volume.data;
    let cut = 0.9 * map.max_finite();
    let weights = metric.dual_weights();
    (0..w.len())
        .into_par_iter()
        .filter(|&idx| idx != map.seed_index && w[idx] < cut)
        .map(|idx| {
            let l = frames.upwind_at(w, idx, metric.model, weights, params.second_order);
            (dual_finsler_components(l, cost.volume.data[idx], metric) - 1.0).abs()
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::ManifoldKind;
    use crate::metric::Model;

    fn metric(model: Model, xi: f64, eta: f64) -> MetricParams {
        MetricParams::new(model, ManifoldKind::M2, xi, eta).unwrap()
    }

    fn small_grid() -> GridSpec {
        GridSpec::m2(16, (-1.0, 1.0), 16, (-1.0, 1.0), 16).unwrap()
    }

    #[test]
    fn stencil_matches_trilinear() {
        let g = GridSpec::m2(7, (-1.0, 1.0), 6, (0.0, 2.0), 8).unwrap();
        let w: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        for f in [
            [0.0, 0.0, 0.0],
            [1.3, 4.9, 7.5],
            [6.0, 5.0, 3.25],
            [2.5, 0.0, 0.0],
        ] {
            let a = Stencil::new(&g, f).eval(&w);
            let b = crate::grid::trilinear(&g, &w, f);
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn initialization() {
        let g = small_grid();
        let (m, snap) = initialize(&g, g.coords(g.index(3, 4, 5))).unwrap();
        assert_eq!(m.volume.data.iter().filter(|v| **v == 0.0).count(), 1);
        assert!(snap < 1e-9);
        let between = [
            g.axes[0].coord(3) + 0.3 * g.axes[0].step,
            g.axes[1].coord(4),
            g.axes[2].coord(5),
        ];
        let (m2, snap) = initialize(&g, between).unwrap();
        assert_eq!(m2.seed_index, g.index(3, 4, 5));
        assert!((snap - 0.3).abs() < 1e-9);
        let (m3, _) = initialize(&g, between).unwrap();
        assert_eq!(m2.volume.data, m3.volume.data);
        assert!(matches!(
            initialize(&g, [5.0, 0.0, 0.0]),
            Err(Error::SeedOutsideGrid(_))
        ));
    }

    #[test]
    fn upwind_exact_on_linear_fields() {
        let g = small_grid();
        let frames = FrameField::new(&g).unwrap();
        let m = metric(Model::SubRiemannian, 1.0, 1.0);
        let w: Vec<f64> = (0..g.len()).map(|i| 2.5 * g.coords(i)[0] + 3.0).collect();
        let l = upwind_frame_derivatives(&w, &frames, &m, false);
        let k = g.axes[2].fractional(0.0).unwrap() as usize;
        for i in 1..15 {
            for j in 1..15 {
                let idx = g.index(i, j, k);
                assert!((l[idx][0] - 2.5).abs() < 1e-10, "{:?}", l[idx]);
                assert!(l[idx][1].abs() < 1e-10);
            }
        }
        let c = vec![7.0; g.len()];
        assert!(upwind_frame_derivatives(&c, &frames, &m, false)
            .iter()
            .all(|v| *v == [0.0; 3]));
    }

    #[test]
    fn upwind_converges_at_first_order() {
        let m = metric(Model::SubRiemannian, 1.0, 1.0);
        let field = |c: [f64; 3]| {
            (1.3 * c[0]).sin() + 0.7 * c[1] * c[1] + 0.4 * c[2].cos() + 0.5 * c[0] * c[1]
        };
        let exact = |c: [f64; 3]| {
            let (s, co) = c[2].sin_cos();
            let dx = 1.3 * (1.3 * c[0]).cos() + 0.5 * c[1];
            let dy = 1.4 * c[1] + 0.5 * c[0];
            [co * dx + s * dy, -s * dx + co * dy, -0.4 * c[2].sin()]
        };
        let mut errors = Vec::new();
        for n in [12usize, 24, 48] {
            let g = GridSpec::m2(n, (-1.0, 1.0), n, (-1.0, 1.0), 2 * n).unwrap();
            let frames = FrameField::new(&g).unwrap();
            let w: Vec<f64> = (0..g.len()).map(|i| field(g.coords(i))).collect();
            let l = upwind_frame_derivatives(&w, &frames, &m, false);
            let mut err: f64 = 0.0;
            for (idx, li) in l.iter().enumerate() {
                let c = g.coords(idx);
                if c[0].abs() > 0.6 || c[1].abs() > 0.6 {
                    continue;
                }
                let e = exact(c);
                // compare magnitudes: upwinding discards candidates of the wrong sign
                for i in 0..3 {
                    if e[i].abs() > 0.2 {
                        err = err.max((li[i] - e[i]).abs());
                    }
                }
            }
            errors.push(err);
        }
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 0.9, "errors {errors:?}");
        }
    }

    fn solve_unit(model: Model, xi: f64, eta: f64, grid: GridSpec, seed: [f64; 3]) -> DistanceMap {
        let cost = CostVolume::constant(grid, 1.0);
        solve(&cost, seed, &SolverParams::new(metric(model, xi, eta))).unwrap()
    }

    #[test]
    fn seed_pinned_and_monotone() {
        let g = small_grid();
        let cost = CostVolume::constant(g, 1.0);
        let params = SolverParams::new(metric(Model::SubRiemannian, 2.0, 0.0));
        let mut violations = 0usize;
        let mut seed_ok = true;
        let seed_idx = g.index(8, 8, 8);
        let mut hook = |_: usize, prev: &[f64], cur: &[f64]| {
            violations += prev.iter().zip(cur).filter(|(a, b)| b > a).count();
            seed_ok &= cur[seed_idx] == 0.0;
        };
        let m = solve_observed(&cost, g.coords(seed_idx), &params, None, Some(&mut hook)).unwrap();
        assert_eq!(violations, 0);
        assert!(seed_ok);
        let r = m.report.unwrap();
        assert!(r.monotone && r.converged, "{r:?}");
        assert!(m.volume.data.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn parallel_matches_sequential_bitwise() {
        let g = small_grid();
        let cost = CostVolume {
            volume: ScalarVolume::from_fn(g, |c| {
                0.2 + 0.8 * (c[0] * 3.0).sin().powi(2) * (0.5 + 0.5 * c[2].cos())
            }),
            provenance: crate::lifting::cost::CostProvenance::Constant,
            coverage: None,
        };
        let params = SolverParams::new(metric(Model::ForwardGear, 3.0, 0.0));
        let seed = g.coords(g.index(5, 9, 2));
        let par = solve(&cost, seed, &params).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let seq = pool.install(|| solve(&cost, seed, &params).unwrap());
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let par4 = pool4.install(|| solve(&cost, seed, &params).unwrap());
        let bits = |m: &DistanceMap| {
            m.volume
                .data
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&par), bits(&seq));
        assert_eq!(bits(&par4), bits(&seq));
    }

    #[test]
    fn forward_gear_dominates_sub_riemannian() {
        let g = small_grid();
        let seed = g.coords(g.index(8, 8, 8));
        let sr = solve_unit(Model::SubRiemannian, 2.0, 0.0, g, seed);
        let fw = solve_unit(Model::ForwardGear, 2.0, 0.0, g, seed);
        for (a, b) in fw.volume.data.iter().zip(&sr.volume.data) {
            assert!(*a >= b - 0.01 * b.abs() - 1e-9, "{a} < {b}");
        }
    }

    #[test]
    fn rejects_mismatched_manifold_and_bad_params() {
        let g = small_grid();
        let cost = CostVolume::constant(g, 1.0);
        let w2 = MetricParams::new(Model::SubRiemannian, ManifoldKind::W2, 1.0, 0.0).unwrap();
        assert!(solve(&cost, [0.0; 3], &SolverParams::new(w2)).is_err());
        let mut p = SolverParams::new(metric(Model::SubRiemannian, 1.0, 0.0));
        p.epsilon = Some(-1.0);
        assert!(solve(&cost, [0.0; 3], &p).is_err());
    }
}
