//! The spatial projection `pi` of the spherical image onto the flat image and
//! its unique horizontality-preserving extension `Pi: W2 -> M2`.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarVolume};
use crate::lifting::cost::{CostProvenance, CostVolume};
use crate::manifold::{wrap_angle, ManifoldKind, PlanarPoint, SphericalPoint, CHART_TOLERANCE};

const NEWTON_MAX_ITER: usize = 50;
const NEWTON_TOL: f64 = 1e-12;

/// Two-parameter camera model: focal point at `(-a, 0)`, image plane at
/// distance `c` from the eyeball centre, half field of view `psi_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraGeometry {
    pub a: f64,
    pub c: f64,
    pub psi_max: f64,
}

impl Default for CameraGeometry {
    /// Wide-field setup: a = 13/21, c = 1/2, 120 degree field of view.
    fn default() -> Self {
        Self {
            a: 13.0 / 21.0,
            c: 0.5,
            psi_max: PI / 3.0,
        }
    }
}

impl CameraGeometry {
    pub fn new(a: f64, c: f64, psi_max: f64) -> Result<Self> {
        let g = Self { a, c, psi_max };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.c > 0.0) {
            return Err(Error::BadConfig(
                "camera parameters a and c must be positive".into(),
            ));
        }
        if !(self.psi_max > 0.0 && self.psi_max < FRAC_PI_2) {
            return Err(Error::BadConfig("psi_max must lie in (0, pi/2)".into()));
        }
        Ok(())
    }

    /// Plane half-width covered by the field of view along the x axis.
    pub fn half_width(&self) -> f64 {
        pi_unchecked(self.psi_max, 0.0, self)[0]
    }
}

fn in_domain(alpha: f64, beta: f64) -> bool {
    alpha.abs() < FRAC_PI_2 && beta.abs() < FRAC_PI_2
}

#[inline]
fn pi_unchecked(alpha: f64, beta: f64, g: &CameraGeometry) -> [f64; 2] {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let k = g.a + g.c;
    let d = g.a + ca * cb;
    [k * sa / d, k * ca * sb / d]
}

/// Spatial projection of the sphere onto the image plane.
pub fn pi(alpha: f64, beta: f64, geom: &CameraGeometry) -> Result<[f64; 2]> {
    if !in_domain(alpha, beta) {
        return Err(Error::OutOfChart(alpha, beta));
    }
    Ok(pi_unchecked(alpha, beta, geom))
}

/// Jacobian of `pi`: `j[i][0] = d pi^i / d alpha`, `j[i][1] = d pi^i / d beta`.
pub fn pi_jacobian(alpha: f64, beta: f64, geom: &CameraGeometry) -> [[f64; 2]; 2] {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let a = geom.a;
    let k = geom.a + geom.c;
    let d = a + ca * cb;
    let kd2 = k / (d * d);
    [
        [kd2 * (a * ca + cb), kd2 * sa * ca * sb],
        [-kd2 * a * sa * sb, kd2 * ca * (a * cb + ca)],
    ]
}

/// Inverse of `pi` by damped Newton iteration.
pub fn pi_inverse(x: f64, y: f64, geom: &CameraGeometry) -> Result<[f64; 2]> {
    let k = geom.a + geom.c;
    let lim = FRAC_PI_2 - CHART_TOLERANCE;
    let lin = (geom.a + 1.0) / k;
    let mut ab = [(x * lin).clamp(-lim, lim), (y * lin).clamp(-lim, lim)];
    let residual = |ab: [f64; 2]| {
        let p = pi_unchecked(ab[0], ab[1], geom);
        [p[0] - x, p[1] - y]
    };
    let norm = |r: [f64; 2]| r[0].hypot(r[1]);
    let mut r = residual(ab);
    let scale = 1.0 + x.abs().max(y.abs());
    for _ in 0..NEWTON_MAX_ITER {
        if norm(r) <= NEWTON_TOL * scale {
            return Ok(ab);
        }
        let j = pi_jacobian(ab[0], ab[1], geom);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            break;
        }
        let da = (j[1][1] * r[0] - j[0][1] * r[1]) / det;
        let db = (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = [
                (ab[0] - t * da).clamp(-lim, lim),
                (ab[1] - t * db).clamp(-lim, lim),
            ];
            let rc = residual(cand);
            if norm(rc) < norm(r) {
                ab = cand;
                r = rc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm(r) <= 1e-10 * scale {
        return Ok(ab);
    }
    if ab[0].abs() >= lim || ab[1].abs() >= lim {
        return Err(Error::OutOfRange(x, y));
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITER,
        residual: norm(r),
    })
}

/// Spatial velocity `(d pi^1, d pi^2)` of the horizontal direction at `q`.
fn horizontal_image_direction(q: &SphericalPoint, geom: &CameraGeometry) -> [f64; 2] {
    let j = pi_jacobian(q.alpha, q.beta, geom);
    let (sp, cp) = q.phi.sin_cos();
    let vb = sp / q.alpha.cos();
    [j[0][0] * cp + j[0][1] * vb, j[1][0] * cp + j[1][1] * vb]
}

/// Horizontality-preserving map `W2 -> M2`.
#[allow(non_snake_case)]
pub fn Pi(q: &SphericalPoint, geom: &CameraGeometry) -> Result<PlanarPoint> {
    if FRAC_PI_2 - q.alpha.abs() < CHART_TOLERANCE {
        return Err(Error::DegenerateChart { alpha: q.alpha });
    }
    let [x, y] = pi(q.alpha, q.beta, geom)?;
    let d = horizontal_image_direction(q, geom);
    Ok(PlanarPoint::new(x, y, d[1].atan2(d[0])))
}

/// Inverse of [`Pi`].
#[allow(non_snake_case)]
pub fn Pi_inverse(p: &PlanarPoint, geom: &CameraGeometry) -> Result<SphericalPoint> {
    let [alpha, beta] = pi_inverse(p.x, p.y, geom)?;
    let j = pi_jacobian(alpha, beta, geom);
    let inv_ca = 1.0 / alpha.cos();
    // M = J diag(1, 1/cos alpha); (cos phi, sin phi) is parallel to M^{-1} (cos theta, sin theta)
    let m = [[j[0][0], j[0][1] * inv_ca], [j[1][0], j[1][1] * inv_ca]];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let (st, ct) = p.theta.sin_cos();
    let w0 = (m[1][1] * ct - m[0][1] * st) / det;
    let w1 = (-m[1][0] * ct + m[0][0] * st) / det;
    Ok(SphericalPoint::new(alpha, beta, w1.atan2(w0)))
}

/// Pulls an M2 cost back to W2, `C_W2 = C_M2 o Pi`, by trilinear sampling.
/// Nodes whose image falls outside the M2 grid get cost 1 and are flagged in
/// the coverage mask.
pub fn pullback_cost(
    cost_m2: &CostVolume,
    grid_w2: &GridSpec,
    geom: &CameraGeometry,
) -> Result<CostVolume> {
    if cost_m2.volume.grid.manifold != ManifoldKind::M2 || grid_w2.manifold != ManifoldKind::W2 {
        return Err(Error::BadConfig(
            "pullback expects an M2 cost and a W2 grid".into(),
        ));
    }
    let src = &cost_m2.volume;
    let samples: Vec<Option<f64>> = (0..grid_w2.len())
        .into_par_iter()
        .map(|idx| {
            let c = grid_w2.coords(idx);
            let q = SphericalPoint::new(c[0], c[1], c[2]);
            let p = Pi(&q, geom).ok()?;
            src.sample([p.x, p.y, p.theta])
        })
        .collect();
    let coverage: Vec<bool> = samples.iter().map(Option::is_some).collect();
    let data = samples.into_iter().map(|s| s.unwrap_or(1.0)).collect();
    Ok(CostVolume {
        volume: ScalarVolume::from_data(*grid_w2, data)?,
        provenance: CostProvenance::PulledBack {
            source: Box::new(cost_m2.provenance.clone()),
        },
        coverage: Some(coverage),
    })
}

/// Affine map between pixel indices (column, row) and plane coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneCalibration {
    pub center_px: [f64; 2],
    pub units_per_px: f64,
}

impl PlaneCalibration {
    /// Centres the image and maps the half-width to the field-of-view edge.
    pub fn fit_field_of_view(width: usize, height: usize, geom: &CameraGeometry) -> Self {
        let half = (width.max(height) as f64 - 1.0) / 2.0;
        Self {
            center_px: [(width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0],
            units_per_px: geom.half_width() / half,
        }
    }

    pub fn to_plane(&self, col: f64, row: f64) -> [f64; 2] {
        [
            (col - self.center_px[0]) * self.units_per_px,
            (row - self.center_px[1]) * self.units_per_px,
        ]
    }

    pub fn to_pixel(&self, x: f64, y: f64) -> [f64; 2] {
        [
            x / self.units_per_px + self.center_px[0],
            y / self.units_per_px + self.center_px[1],
        ]
    }

    /// M2 grid whose spatial nodes are the pixel centres.
    pub fn m2_grid(&self, width: usize, height: usize, n_theta: usize) -> Result<GridSpec> {
        let lo = self.to_plane(0.0, 0.0);
        let hi = self.to_plane((width - 1) as f64, (height - 1) as f64);
        GridSpec::m2(width, (lo[0], hi[0]), height, (lo[1], hi[1]), n_theta)
    }

    /// Smallest W2 grid whose spatial box contains the preimage of the whole
    /// image rectangle.
    pub fn w2_grid(
        &self,
        width: usize,
        height: usize,
        n_alpha: usize,
        n_beta: usize,
        n_phi: usize,
        geom: &CameraGeometry,
    ) -> Result<GridSpec> {
        let (mut amin, mut amax, mut bmin, mut bmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        let samples = 64;
        let w = (width - 1) as f64;
        let h = (height - 1) as f64;
        for s in 0..=samples {
            let t = s as f64 / samples as f64;
            for (col, row) in [(t * w, 0.0), (t * w, h), (0.0, t * h), (w, t * h)] {
                let p = self.to_plane(col, row);
                let [a, b] = pi_inverse(p[0], p[1], geom)?;
                amin = amin.min(a);
                amax = amax.max(a);
                bmin = bmin.min(b);
                bmax = bmax.max(b);
            }
        }
        GridSpec::w2(n_alpha, (amin, amax), n_beta, (bmin, bmax), n_phi)
    }
}

/// Converts a pixel-frame seed `(col, row, theta)` to W2.
pub fn pixel_to_w2(
    cal: &PlaneCalibration,
    col: f64,
    row: f64,
    theta: f64,
    geom: &CameraGeometry,
) -> Result<SphericalPoint> {
    let [x, y] = cal.to_plane(col, row);
    Pi_inverse(&PlanarPoint::new(x, y, wrap_angle(theta)), geom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::angle_diff;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geom() -> CameraGeometry {
        CameraGeometry::default()
    }

    #[test]
    fn pi_reference_values() {
        assert_eq!(pi(0.0, 0.0, &geom()).unwrap(), [0.0, 0.0]);
        let p = pi(PI / 3.0, 0.0, &geom()).unwrap();
        assert!((p[0] - 3f64.sqrt() / 2.0).abs() < 1e-14, "{p:?}");
        assert!(p[1].abs() < 1e-15);
        assert!(matches!(pi(1.6, 0.0, &geom()), Err(Error::OutOfChart(..))));
    }

    #[test]
    fn pi_symmetries() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (a, b) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let [u, v] = pi(a, b, &geom()).unwrap();
            let [u1, v1] = pi(-a, b, &geom()).unwrap();
            let [u2, v2] = pi(a, -b, &geom()).unwrap();
            assert!((u1 + u).abs() < 1e-14 && (v1 - v).abs() < 1e-14);
            assert!((u2 - u).abs() < 1e-14 && (v2 + v).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-6;
        for _ in 0..500 {
            let (a, b) = (rng.gen_range(-1.4..1.4), rng.gen_range(-1.4..1.4));
            let j = pi_jacobian(a, b, &geom());
            let da = [
                pi_unchecked(a + h, b, &geom()),
                pi_unchecked(a - h, b, &geom()),
            ];
            let db = [
                pi_unchecked(a, b + h, &geom()),
                pi_unchecked(a, b - h, &geom()),
            ];
            for i in 0..2 {
                assert!((j[i][0] - (da[0][i] - da[1][i]) / (2.0 * h)).abs() < 1e-7);
                assert!((j[i][1] - (db[0][i] - db[1][i]) / (2.0 * h)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn pi_inverse_reference_and_round_trip() {
        assert_eq!(pi_inverse(0.0, 0.0, &geom()).unwrap(), [0.0, 0.0]);
        let ab = pi_inverse(3f64.sqrt() / 2.0, 0.0, &geom()).unwrap();
        assert!((ab[0] - PI / 3.0).abs() < 1e-10 && ab[1].abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let (a, b) = (rng.gen_range(-1.45..1.45), rng.gen_range(-1.45..1.45));
            let [x, y] = pi(a, b, &geom()).unwrap();
            let [a2, b2] = pi_inverse(x, y, &geom()).unwrap();
            let [x2, y2] = pi(a2, b2, &geom()).unwrap();
            assert!((x2 - x).abs() < 1e-9 && (y2 - y).abs() < 1e-9);
        }
    }

    #[test]
    fn pi_inverse_rejects_points_beyond_the_image() {
        let k = geom().a + geom().c;
        let edge = k / geom().a; // limit of pi(alpha, 0) as alpha -> pi/2
        assert!(pi_inverse(edge * 1.5, 0.0, &geom()).is_err());
    }

    #[test]
    fn big_pi_at_origin_is_identity_on_orientation() {
        for phi in [-3.0, -1.2, 0.0, 0.7, 2.9] {
            let p = Pi(&SphericalPoint::new(0.0, 0.0, phi), &geom()).unwrap();
            assert!(p.x.abs() < 1e-15 && p.y.abs() < 1e-15);
            assert!(angle_diff(p.theta, phi).abs() < 1e-14);
            let q = Pi_inverse(&PlanarPoint::new(0.0, 0.0, phi), &geom()).unwrap();
            assert!(q.alpha.abs() < 1e-15 && q.beta.abs() < 1e-15);
            assert!(angle_diff(q.phi, phi).abs() < 1e-14);
        }
    }

    #[test]
    fn big_pi_spatial_part_ignores_phi() {
        let a = Pi(&SphericalPoint::new(0.5, -0.4, 0.1), &geom()).unwrap();
        let b = Pi(&SphericalPoint::new(0.5, -0.4, 2.3), &geom()).unwrap();
        assert_eq!((a.x, a.y), (b.x, b.y));
    }

    #[test]
    fn pullback_of_constant_is_constant() {
        let g2 = GridSpec::m2(16, (-1.0, 1.0), 16, (-1.0, 1.0), 8).unwrap();
        let c = CostVolume::new(ScalarVolume::filled(g2, 1.0), CostProvenance::Constant);
        let gw = GridSpec::w2(8, (-0.5, 0.5), 8, (-0.5, 0.5), 8).unwrap();
        let pb = pullback_cost(&c, &gw, &geom()).unwrap();
        assert!(pb.volume.data.iter().all(|&v| v == 1.0));
        assert!(pb.coverage.unwrap().iter().all(|&m| m));
    }

    #[test]
    fn pullback_flags_uncovered_nodes() {
        let g2 = GridSpec::m2(8, (-0.1, 0.1), 8, (-0.1, 0.1), 8).unwrap();
        let c = CostVolume::new(ScalarVolume::filled(g2, 0.5), CostProvenance::Constant);
        let gw = GridSpec::w2(8, (-0.5, 0.5), 8, (-0.5, 0.5), 8).unwrap();
        let pb = pullback_cost(&c, &gw, &geom()).unwrap();
        let mask = pb.coverage.as_ref().unwrap();
        assert!(mask.iter().any(|&m| !m));
        for (v, m) in pb.volume.data.iter().zip(mask) {
            assert_eq!(*v, if *m { 0.5 } else { 1.0 });
        }
    }
}
