//! Geodesic backtracking on distance maps, track lengths, cusp detection and
//! transfer of tracks between the spherical and planar models.
//!
//! A track runs from the tip to the seed. Its frame components `u` are those
//! of the velocity of the same curve traversed from the seed to the tip, so
//! forward-gear tracks have `u1 >= 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eikonal::{upwind_frame_derivatives, DistanceMap, FrameField};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::lifting::cost::CostVolume;
use crate::manifold::{
    angle_diff, frame_m2, frame_w2, wrap_angle, ManifoldKind, PlanarPoint, SphericalPoint,
};
use crate::metric::{finsler_components, grad_dual_in_frame, MetricParams, Model};
use crate::projection::{pi, CameraGeometry, Pi, Pi_inverse, PlaneCalibration};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicTrack {
    pub manifold: ManifoldKind,
    /// Manifold coordinates, tip first, seed last.
    pub points: Vec<[f64; 3]>,
    pub u: Vec<[f64; 3]>,
    pub t: Vec<f64>,
    /// Distance map sampled along the track.
    pub w: Vec<f64>,
    pub finsler_length: f64,
    pub cusps: Vec<usize>,
}

impl GeodesicTrack {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn tip(&self) -> [f64; 3] {
        self.points[0]
    }

    pub fn end(&self) -> [f64; 3] {
        self.points[self.points.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackParams {
    /// Integration step in cells.
    pub step: f64,
    /// Distance to the seed, in cells, below which the track is closed with
    /// a straight segment.
    pub capture_radius: f64,
    /// `None` means `40 (n1 + n2 + n3)`.
    pub max_steps: Option<usize>,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self {
            step: 0.5,
            capture_radius: 2.0,
            max_steps: None,
        }
    }
}

fn coord_diff(grid: &GridSpec, a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    let mut d = [0.0; 3];
    for k in 0..3 {
        d[k] = if grid.axes[k].periodic {
            angle_diff(a[k], b[k])
        } else {
            a[k] - b[k]
        };
    }
    d
}

fn advance(grid: &GridSpec, p: [f64; 3], v: [f64; 3], s: f64) -> [f64; 3] {
    let mut q = [0.0; 3];
    for k in 0..3 {
        let a = &grid.axes[k];
        let x = p[k] + s * v[k];
        q[k] = if a.periodic {
            wrap_angle(x)
        } else {
            x.clamp(a.start, a.end())
        };
    }
    q
}

fn cell_norm(grid: &GridSpec, v: [f64; 3]) -> f64 {
    (0..3)
        .map(|k| (v[k] / grid.axes[k].step).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Read-only backtracking context: distance map, cost, metric and the
/// interpolable field of upwind gradients in coordinates.
pub struct Backtracker<'a> {
    pub map: &'a DistanceMap,
    pub cost: &'a CostVolume,
    pub metric: MetricParams,
    gradient: [Vec<f64>; 3],
}

impl<'a> Backtracker<'a> {
    pub fn new(map: &'a DistanceMap, cost: &'a CostVolume, metric: MetricParams) -> Result<Self> {
        let frames = FrameField::new(map.grid())?;
        Self::with_frames(map, cost, metric, &frames)
    }

    pub fn with_frames(
        map: &'a DistanceMap,
        cost: &'a CostVolume,
        metric: MetricParams,
        frames: &FrameField,
    ) -> Result<Self> {
        metric.validate()?;
        if *cost.grid() != *map.grid()
            || frames.grid != *map.grid()
            || map.grid().manifold != metric.manifold
        {
            return Err(Error::BadConfig(
                "distance map, cost, frames and metric disagree on the grid".into(),
            ));
        }
        let lambda = upwind_frame_derivatives(&map.volume.data, frames, &metric, false);
        let n = lambda.len();
        let mut gradient = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (idx, l) in lambda.iter().enumerate() {
            if !map.is_reached(idx) {
                continue;
            }
            let c = frames.frames[idx].covector(*l);
            for k in 0..3 {
                gradient[k][idx] = c[k];
            }
        }
        Ok(Self {
            map,
            cost,
            metric,
            gradient,
        })
    }

    fn grid(&self) -> &GridSpec {
        self.map.grid()
    }

    fn w_at(&self, p: [f64; 3]) -> f64 {
        self.map.volume.sample_clamped(p)
    }

    fn clamped_fractional(&self, p: [f64; 3]) -> [f64; 3] {
        let g = self.grid();
        let mut f = [0.0; 3];
        for k in 0..3 {
            let a = &g.axes[k];
            f[k] = a
                .fractional(p[k])
                .unwrap_or_else(|| ((p[k] - a.start) / a.step).clamp(0.0, (a.n - 1) as f64));
        }
        f
    }

    /// Interpolated coordinate covector `dW` at `p`.
    pub fn gradient(&self, p: [f64; 3]) -> [f64; 3] {
        let f = self.clamped_fractional(p);
        let g = self.grid();
        [
            crate::grid::trilinear(g, &self.gradient[0], f),
            crate::grid::trilinear(g, &self.gradient[1], f),
            crate::grid::trilinear(g, &self.gradient[2], f),
        ]
    }

    /// `d_p F*(p, dW(p))` in coordinates: the unit-speed direction of
    /// increasing distance.
    pub fn ascent(&self, p: [f64; 3]) -> Result<[f64; 3]> {
        let fr = self.metric.manifold.frame(p)?;
        let c = self.cost.volume.sample_clamped(p);
        grad_dual_in_frame(&fr, self.gradient(p), c, &self.metric)
    }

    fn seed_point(&self) -> [f64; 3] {
        self.grid().coords(self.map.seed_index)
    }

    fn finish(&self, points: Vec<[f64; 3]>, u: Vec<[f64; 3]>, t: Vec<f64>) -> GeodesicTrack {
        let w = points.iter().map(|p| self.w_at(*p)).collect();
        let mut track = GeodesicTrack {
            manifold: self.grid().manifold,
            points,
            u,
            t,
            w,
            finsler_length: 0.0,
            cusps: Vec::new(),
        };
        track.finsler_length = finsler_length(&track, self.cost, &self.metric);
        track.cusps = detect_cusps(&track);
        track
    }

    /// Integrates `gamma' = -W(tip) d_p F*(gamma, dW(gamma))` with RK4 from
    /// `tip` until the seed is within the capture radius, then closes the
    /// track with a straight segment to the seed node.
    pub fn track(&self, tip: [f64; 3], params: &TrackParams) -> Result<GeodesicTrack> {
        let grid = *self.grid();
        grid.fractional(tip).ok_or(Error::SeedOutsideGrid(tip))?;
        let w_tip = self.w_at(tip);
        if !(w_tip < 0.5 * crate::eikonal::SENTINEL) {
            return Err(Error::TipUnreached(tip));
        }
        let seed = self.seed_point();
        if grid.cell_distance(tip, seed) < 1e-9 {
            return Ok(self.finish(vec![seed], vec![[0.0; 3]], vec![1.0]));
        }
        let max_steps = params
            .max_steps
            .unwrap_or(40 * grid.axes.iter().map(|a| a.n).sum::<usize>());
        let velocity = |p: [f64; 3]| -> Result<[f64; 3]> {
            let a = self.ascent(p)?;
            Ok([-w_tip * a[0], -w_tip * a[1], -w_tip * a[2]])
        };
        let mut points = vec![tip];
        let mut us = Vec::new();
        let mut ts = vec![0.0];
        let mut p = tip;
        let mut t = 0.0;
        let mut w_prev = w_tip;
        let mut uphill = 0usize;
        let mut steps = 0usize;
        let partial = |points: &[[f64; 3]], us: &[[f64; 3]], ts: &[f64]| {
            let mut u = us.to_vec();
            u.resize(points.len(), *us.last().unwrap_or(&[0.0; 3]));
            Box::new(self.finish(points.to_vec(), u, ts.to_vec()))
        };
        while grid.cell_distance(p, seed) > params.capture_radius {
            if steps >= max_steps {
                return Err(Error::NotReached {
                    steps,
                    partial: partial(&points, &us, &ts),
                });
            }
            let k1 = match velocity(p) {
                Ok(v) if cell_norm(&grid, v) > 1e-12 => v,
                _ => {
                    return Err(Error::Stalled {
                        steps,
                        partial: partial(&points, &us, &ts),
                    })
                }
            };
            us.push([-k1[0], -k1[1], -k1[2]]);
            let dt = params.step / cell_norm(&grid, k1);
            let rk = || -> Result<[f64; 3]> {
                let k2 = velocity(advance(&grid, p, k1, 0.5 * dt))?;
                let k3 = velocity(advance(&grid, p, k2, 0.5 * dt))?;
                let k4 = velocity(advance(&grid, p, k3, dt))?;
                let mut v = [0.0; 3];
                for k in 0..3 {
                    v[k] = (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]) / 6.0;
                }
                Ok(v)
            };
            let v = match rk() {
                Ok(v) => v,
                Err(_) => {
                    return Err(Error::Stalled {
                        steps,
                        partial: partial(&points, &us, &ts),
                    })
                }
            };
            p = advance(&grid, p, v, dt);
            t += dt;
            steps += 1;
            points.push(p);
            ts.push(t);
            let w = self.w_at(p);
            uphill = if w < w_prev { 0 } else { uphill + 1 };
            w_prev = w_prev.min(w);
            if uphill > 8 {
                return Err(Error::Stalled {
                    steps,
                    partial: partial(&points, &us, &ts),
                });
            }
        }
        // straight closing segment, sub-sampled at the integration step
        let chord = coord_diff(&grid, seed, p);
        let cells = cell_norm(&grid, chord);
        let pieces = (cells / params.step).ceil().max(1.0) as usize;
        let t_rest = (self.w_at(p) / w_tip).max(1e-12);
        let dt = t_rest / pieces as f64;
        let u_close = [-chord[0] / t_rest, -chord[1] / t_rest, -chord[2] / t_rest];
        for i in 1..=pieces {
            let s = i as f64 / pieces as f64;
            let q = if i == pieces {
                seed
            } else {
                advance(&grid, p, chord, s)
            };
            points.push(q);
            ts.push(t + i as f64 * dt);
        }
        // frame components: ODE samples carry their own, the closing segment the chord's
        let mut u_frame = Vec::with_capacity(points.len());
        for (i, pt) in points.iter().enumerate() {
            let v = if i < us.len() { us[i] } else { u_close };
            let fr = self.metric.manifold.frame(*pt)?;
            u_frame.push(fr.components(v));
        }
        let total = *ts.last().unwrap();
        for x in &mut ts {
            *x /= total;
        }
        Ok(self.finish(points, u_frame, ts))
    }

    /// Backtracks every tip concurrently; results are in input order and
    /// do not depend on scheduling.
    pub fn track_many(
        &self,
        tips: &[[f64; 3]],
        params: &TrackParams,
    ) -> Vec<Result<GeodesicTrack>> {
        tips.par_iter()
            .map(|tip| self.track(*tip, params))
            .collect()
    }
}

/// Convenience wrapper building a [`Backtracker`] for a single tip.
pub fn backtrack(
    map: &DistanceMap,
    cost: &CostVolume,
    metric: &MetricParams,
    tip: [f64; 3],
    params: &TrackParams,
) -> Result<GeodesicTrack> {
    Backtracker::new(map, cost, *metric)?.track(tip, params)
}

/// Finsler length by the composite trapezoid rule on chords. Forward-gear
/// tracks use the symmetric integrand and `eta = 0` drops the lateral
/// component, so chord noise never produces infinite lengths.
pub fn finsler_length(track: &GeodesicTrack, cost: &CostVolume, metric: &MetricParams) -> f64 {
    let grid = cost.grid();
    let m = MetricParams {
        model: Model::SubRiemannian,
        ..*metric
    };
    let integrand = |p: [f64; 3], d: [f64; 3]| -> f64 {
        let Ok(fr) = m.manifold.frame(p) else {
            return f64::NAN;
        };
        let mut u = fr.components(d);
        if m.eta == 0.0 {
            u[1] = 0.0;
        }
        finsler_components(u, cost.volume.sample_clamped(p), &m)
    };
    track
        .points
        .windows(2)
        .map(|s| {
            let d = coord_diff(grid, s[1], s[0]);
            0.5 * (integrand(s[0], d) + integrand(s[1], d))
        })
        .sum()
}

/// Relative noise floor for cusp detection.
const CUSP_FLOOR: f64 = 0.05;

/// Indices where `u1` changes sign, ignoring samples with
/// `|u1| <= CUSP_FLOOR * max |u1|`.
pub fn detect_cusps(track: &GeodesicTrack) -> Vec<usize> {
    cusps_in(&track.u.iter().map(|u| u[0]).collect::<Vec<_>>())
}

pub fn cusps_in(u1: &[f64]) -> Vec<usize> {
    let floor = CUSP_FLOOR * u1.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut out = Vec::new();
    let mut last: Option<bool> = None;
    for (i, &v) in u1.iter().enumerate() {
        if v.abs() <= floor || v.abs() == 0.0 {
            continue;
        }
        let pos = v > 0.0;
        if last.is_some_and(|l| l != pos) {
            out.push(i);
        }
        last = Some(pos);
    }
    out
}

/// A transferred track; samples whose image is undefined hold NaN and are
/// listed in `out_of_chart`.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedTrack {
    pub track: GeodesicTrack,
    pub out_of_chart: Vec<usize>,
}

fn push_forward<F>(f: F, p: [f64; 3], v: [f64; 3]) -> Option<[f64; 3]>
where
    F: Fn([f64; 3]) -> Option<[f64; 3]>,
{
    let n = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if n == 0.0 {
        return Some([0.0; 3]);
    }
    let h = 1e-6 / n;
    let a = f([p[0] + h * v[0], p[1] + h * v[1], p[2] + h * v[2]])?;
    let b = f([p[0] - h * v[0], p[1] - h * v[1], p[2] - h * v[2]])?;
    Some([
        (a[0] - b[0]) / (2.0 * h),
        (a[1] - b[1]) / (2.0 * h),
        angle_diff(a[2], b[2]) / (2.0 * h),
    ])
}

fn transfer<F, G>(track: &GeodesicTrack, target: ManifoldKind, map: F, frames: G) -> MappedTrack
where
    F: Fn([f64; 3]) -> Option<[f64; 3]>,
    G: Fn(&[f64; 3]) -> Option<crate::manifold::FrameEntry>,
{
    let mut out = track.clone();
    out.manifold = target;
    let mut out_of_chart = Vec::new();
    for i in 0..track.points.len() {
        let p = track.points[i];
        let mapped = map(p).and_then(|q| {
            let v = track.manifold.frame(p).ok()?.tangent(track.u[i]);
            let w = push_forward(&map, p, v)?;
            Some((q, frames(&q)?.components(w)))
        });
        match mapped {
            Some((q, u)) => {
                out.points[i] = q;
                out.u[i] = u;
            }
            None => {
                out.points[i] = [f64::NAN; 3];
                out.u[i] = [f64::NAN; 3];
                out_of_chart.push(i);
            }
        }
    }
    MappedTrack {
        track: out,
        out_of_chart,
    }
}

/// Maps a W2 track to M2 sample by sample with `Pi`; frame components are
/// pushed forward. Length, `t`, `w` and cusps are carried over unchanged.
pub fn map_track(track: &GeodesicTrack, geom: &CameraGeometry) -> Result<MappedTrack> {
    if track.manifold != ManifoldKind::W2 {
        return Err(Error::BadConfig("map_track expects a W2 track".into()));
    }
    let f = |c: [f64; 3]| {
        Pi(&SphericalPoint::new(c[0], c[1], c[2]), geom)
            .ok()
            .map(|p| p.coords())
    };
    Ok(transfer(track, ManifoldKind::M2, f, |q| {
        Some(frame_m2(&PlanarPoint::new(q[0], q[1], q[2])))
    }))
}

/// Inverse of [`map_track`].
pub fn map_track_inverse(track: &GeodesicTrack, geom: &CameraGeometry) -> Result<MappedTrack> {
    if track.manifold != ManifoldKind::M2 {
        return Err(Error::BadConfig(
            "map_track_inverse expects an M2 track".into(),
        ));
    }
    let f = |c: [f64; 3]| {
        Pi_inverse(&PlanarPoint::new(c[0], c[1], c[2]), geom)
            .ok()
            .map(|q| q.coords())
    };
    Ok(transfer(track, ManifoldKind::W2, f, |q| {
        frame_w2(&SphericalPoint::new(q[0], q[1], q[2])).ok()
    }))
}

/// Spatial path of a track in pixel coordinates; NaN where undefined.
pub fn pixel_path(
    track: &GeodesicTrack,
    cal: &PlaneCalibration,
    geom: &CameraGeometry,
) -> Vec<[f64; 2]> {
    track
        .points
        .iter()
        .map(|p| {
            let xy = match track.manifold {
                ManifoldKind::M2 => Some([p[0], p[1]]),
                ManifoldKind::W2 => pi(p[0], p[1], geom).ok(),
            };
            xy.map_or([f64::NAN; 2], |q| cal.to_pixel(q[0], q[1]))
        })
        .collect()
}
