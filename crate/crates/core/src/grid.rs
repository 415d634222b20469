//! Regular 3D grids over M2 / W2 and scalar fields sampled on them.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{wrap_angle, ManifoldKind};

/// Fractional indices within this distance of an integer are snapped onto it.
const KNOT_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub n: usize,
    pub start: f64,
    pub step: f64,
    pub periodic: bool,
}

impl Axis {
    /// `n` nodes covering `[lo, hi]` inclusively.
    pub fn closed(n: usize, lo: f64, hi: f64) -> Self {
        Self {
            n,
            start: lo,
            step: (hi - lo) / (n as f64 - 1.0),
            periodic: false,
        }
    }

    /// `n` nodes `start + i * step`.
    pub fn stepped(n: usize, start: f64, step: f64) -> Self {
        Self {
            n,
            start,
            step,
            periodic: false,
        }
    }

    /// `n` equispaced angles on `[-pi, pi)`.
    pub fn angular(n: usize) -> Self {
        Self {
            n,
            start: -PI,
            step: TAU / n as f64,
            periodic: true,
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.coord(self.n - 1)
    }

    /// Continuous index of a coordinate; periodic axes are wrapped into
    /// `[0, n)`, other axes return `None` outside `[0, n - 1]`.
    pub fn fractional(&self, c: f64) -> Option<f64> {
        if self.periodic {
            let mut f = (wrap_angle(c) - self.start) / self.step;
            let r = f.round();
            if (f - r).abs() < KNOT_SNAP {
                f = r;
            }
            let n = self.n as f64;
            f = f.rem_euclid(n);
            if f >= n {
                f -= n;
            }
            Some(f)
        } else {
            let mut f = (c - self.start) / self.step;
            let r = f.round();
            if (f - r).abs() < KNOT_SNAP {
                f = r;
            }
            if f < 0.0 || f > (self.n - 1) as f64 {
                None
            } else {
                Some(f)
            }
        }
    }

    /// Nearest node index and signed coordinate offset to it.
    pub fn nearest(&self, c: f64) -> Option<(usize, f64)> {
        if self.periodic {
            let f = self.fractional(c)?;
            let i = (f.round() as usize) % self.n;
            Some((i, crate::manifold::angle_diff(c, self.coord(i))))
        } else {
            let f = (c - self.start) / self.step;
            if f < -0.5 || f > self.n as f64 - 0.5 {
                return None;
            }
            let i = (f.round().max(0.0) as usize).min(self.n - 1);
            Some((i, c - self.coord(i)))
        }
    }

    /// Two bracketing nodes and the weight of the upper one.
    #[inline]
    pub fn bracket(&self, f: f64) -> (usize, usize, f64) {
        let i0 = f.floor() as usize;
        if self.periodic {
            let i0 = i0 % self.n;
            (i0, (i0 + 1) % self.n, f - f.floor())
        } else if i0 >= self.n - 1 {
            (self.n - 2, self.n - 1, 1.0)
        } else {
            (i0, i0 + 1, f - i0 as f64)
        }
    }
}

/// Grid descriptor. Axis order is (x, y, theta) on M2 and (alpha, beta, phi)
/// on W2; the last axis is the periodic orientation axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub manifold: ManifoldKind,
    pub axes: [Axis; 3],
}

impl GridSpec {
    pub fn new(manifold: ManifoldKind, axes: [Axis; 3]) -> Result<Self> {
        let g = Self { manifold, axes };
        g.validate()?;
        Ok(g)
    }

    /// M2 grid with inclusive spatial ranges and `n_theta` orientations.
    pub fn m2(nx: usize, x: (f64, f64), ny: usize, y: (f64, f64), n_theta: usize) -> Result<Self> {
        Self::new(
            ManifoldKind::M2,
            [
                Axis::closed(nx, x.0, x.1),
                Axis::closed(ny, y.0, y.1),
                Axis::angular(n_theta),
            ],
        )
    }

    pub fn w2(
        na: usize,
        alpha: (f64, f64),
        nb: usize,
        beta: (f64, f64),
        n_phi: usize,
    ) -> Result<Self> {
        Self::new(
            ManifoldKind::W2,
            [
                Axis::closed(na, alpha.0, alpha.1),
                Axis::closed(nb, beta.0, beta.1),
                Axis::angular(n_phi),
            ],
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (k, a) in self.axes.iter().enumerate() {
            if a.n < 4 {
                return Err(Error::BadConfig(format!("axis {k} has {} < 4 nodes", a.n)));
            }
            if !(a.step > 0.0) || !a.step.is_finite() || !a.start.is_finite() {
                return Err(Error::BadConfig(format!("axis {k} has invalid spacing")));
            }
        }
        if self.axes[0].periodic || self.axes[1].periodic || !self.axes[2].periodic {
            return Err(Error::BadConfig(
                "only the orientation axis may be periodic".into(),
            ));
        }
        if self.manifold == ManifoldKind::W2 {
            let lim = std::f64::consts::FRAC_PI_2 - crate::manifold::CHART_TOLERANCE;
            for a in &self.axes[..2] {
                if a.start <= -lim || a.end() >= lim {
                    return Err(Error::BadConfig("W2 grid exceeds the chart domain".into()));
                }
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.axes[0].n, self.axes[1].n, self.axes[2].n]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.axes[1].n + j) * self.axes[2].n + k
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let n2 = self.axes[2].n;
        let n1 = self.axes[1].n;
        [idx / (n1 * n2), (idx / n2) % n1, idx % n2]
    }

    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.unravel(idx);
        [
            self.axes[0].coord(i),
            self.axes[1].coord(j),
            self.axes[2].coord(k),
        ]
    }

    /// Continuous indices of a point, `None` if outside a non-periodic range.
    pub fn fractional(&self, c: [f64; 3]) -> Option<[f64; 3]> {
        Some([
            self.axes[0].fractional(c[0])?,
            self.axes[1].fractional(c[1])?,
            self.axes[2].fractional(c[2])?,
        ])
    }

    /// Nearest node and the offset of `c` from it, measured in cells.
    pub fn nearest_node(&self, c: [f64; 3]) -> Result<(usize, f64)> {
        let mut idx = [0usize; 3];
        let mut d2 = 0.0;
        for k in 0..3 {
            let (i, off) = self.axes[k]
                .nearest(c[k])
                .ok_or(Error::SeedOutsideGrid(c))?;
            idx[k] = i;
            d2 += (off / self.axes[k].step).powi(2);
        }
        Ok((self.index(idx[0], idx[1], idx[2]), d2.sqrt()))
    }

    /// Distance between two points measured in cells, with periodic wrap.
    pub fn cell_distance(&self, a: [f64; 3], b: [f64; 3]) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let d = if self.axes[k].periodic {
                crate::manifold::angle_diff(a[k], b[k])
            } else {
                a[k] - b[k]
            };
            d2 += (d / self.axes[k].step).powi(2);
        }
        d2.sqrt()
    }

    pub fn spacing(&self) -> [f64; 3] {
        [self.axes[0].step, self.axes[1].step, self.axes[2].step]
    }
}

/// Scalar field on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    pub grid: GridSpec,
    pub data: Vec<f64>,
}

impl ScalarVolume {
    pub fn filled(grid: GridSpec, v: f64) -> Self {
        Self {
            data: vec![v; grid.len()],
            grid,
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> f64) -> Self {
        let data = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        Self { grid, data }
    }

    pub fn from_data(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::BadConfig(format!(
                "data length {} does not match grid size {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.grid.index(i, j, k)]
    }

    /// Trilinear interpolation with periodic wrap on the orientation axis;
    /// exact at nodes, `None` outside the spatial range.
    pub fn sample(&self, c: [f64; 3]) -> Option<f64> {
        let f = self.grid.fractional(c)?;
        Some(self.sample_fractional(f))
    }

    /// Like [`sample`](Self::sample) but clamps spatial coordinates into range.
    pub fn sample_clamped(&self, c: [f64; 3]) -> f64 {
        let mut f = [0.0; 3];
        for k in 0..3 {
            let a = &self.grid.axes[k];
            f[k] = match a.fractional(c[k]) {
                Some(v) => v,
                None => ((c[k] - a.start) / a.step).clamp(0.0, (a.n - 1) as f64),
            };
        }
        self.sample_fractional(f)
    }

    pub fn sample_fractional(&self, f: [f64; 3]) -> f64 {
        trilinear(&self.grid, &self.data, f)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Rounds every value to the nearest 32-bit float, matching what the
    /// on-disk array format stores.
    pub fn quantized(&self) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|&v| v as f32 as f64).collect(),
        }
    }
}

/// Trilinear interpolation of `data` at fractional indices `f`, as nested
/// lerps so that constant fields are reproduced exactly. Corners with zero
/// weight are not read.
#[inline]
pub fn trilinear(grid: &GridSpec, data: &[f64], f: [f64; 3]) -> f64 {
    let (i0, i1, ti) = grid.axes[0].bracket(f[0]);
    let (j0, j1, tj) = grid.axes[1].bracket(f[1]);
    let (k0, k1, tk) = grid.axes[2].bracket(f[2]);
    let line = |i: usize, j: usize| {
        let a = data[grid.index(i, j, k0)];
        if tk == 0.0 {
            a
        } else {
            a + tk * (data[grid.index(i, j, k1)] - a)
        }
    };
    let plane = |i: usize| {
        let a = line(i, j0);
        if tj == 0.0 {
            a
        } else {
            a + tj * (line(i, j1) - a)
        }
    };
    let a = plane(i0);
    if ti == 0.0 {
        a
    } else {
        a + ti * (plane(i1) - a)
    }
}

/// Planar scalar field (x fastest within a row), used for images and
/// position-only vesselness.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Field2 {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample at continuous pixel coordinates, `None` outside.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64)
        {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width - 2);
        let y0 = (y.floor() as usize).min(self.height - 2);
        let tx = x - x0 as f64;
        let ty = y - y0 as f64;
        let v = (1.0 - tx) * (1.0 - ty) * self.get(x0, y0)
            + tx * (1.0 - ty) * self.get(x0 + 1, y0)
            + (1.0 - tx) * ty * self.get(x0, y0 + 1)
            + tx * ty * self.get(x0 + 1, y0 + 1);
        Some(v)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}
