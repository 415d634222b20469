//! Coordinates, group actions and left-invariant frames on the planar
//! position-orientation space M2 = SE(2) and the spherical one W2 = SO(3).
//!
//! Frames are returned as 3x3 component matrices in the coordinate basis:
//! column `i` holds the components of A_i (resp. B_i) with respect to
//! (d/dx, d/dy, d/dtheta) (resp. (d/dalpha, d/dbeta, d/dphi)). The coframe is
//! the inverse matrix; its row `i` is the dual covector omega^i (resp. nu^i).

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance from alpha = ±pi/2 below which W2 frames are refused.
pub const CHART_TOLERANCE: f64 = 1e-6;

/// Distance from alpha = ±pi/2 below which the chart inverse is refused.
pub const CHART_INVERSE_TOLERANCE: f64 = 1e-9;

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(t: f64) -> f64 {
    let mut r = t - TAU * ((t + PI) / TAU).floor();
    if r >= PI {
        r -= TAU;
    }
    if r < -PI {
        r += TAU;
    }
    r
}

/// Signed shortest difference `a - b` between two angles, in `[-pi, pi)`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

/// Which position-orientation space a grid or point lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    M2,
    W2,
}

impl ManifoldKind {
    pub fn axis_names(self) -> [&'static str; 3] {
        match self {
            ManifoldKind::M2 => ["x", "y", "theta"],
            ManifoldKind::W2 => ["alpha", "beta", "phi"],
        }
    }

    /// Left-invariant frame at the given coordinates.
    pub fn frame(self, c: [f64; 3]) -> Result<FrameEntry> {
        match self {
            ManifoldKind::M2 => Ok(frame_m2(&PlanarPoint::new(c[0], c[1], c[2]))),
            ManifoldKind::W2 => frame_w2(&SphericalPoint::new(c[0], c[1], c[2])),
        }
    }
}

impl std::fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ManifoldKind::M2 => f.write_str("m2"),
            ManifoldKind::W2 => f.write_str("w2"),
        }
    }
}

/// A point (x, y, theta) of M2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn coords(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }
}

/// A roto-translation `(b, R_theta)` of the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Se2 {
    pub b: [f64; 2],
    pub theta: f64,
}

impl Se2 {
    pub const IDENTITY: Se2 = Se2 {
        b: [0.0, 0.0],
        theta: 0.0,
    };

    pub fn new(bx: f64, by: f64, theta: f64) -> Self {
        Self {
            b: [bx, by],
            theta: wrap_angle(theta),
        }
    }

    fn rotate(&self, v: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [c * v[0] - s * v[1], s * v[0] + c * v[1]]
    }

    /// Group product `self ∘ other`.
    pub fn compose(&self, other: &Se2) -> Se2 {
        let rb = self.rotate(other.b);
        Se2::new(
            self.b[0] + rb[0],
            self.b[1] + rb[1],
            self.theta + other.theta,
        )
    }

    pub fn inverse(&self) -> Se2 {
        let inv = Se2 {
            b: [0.0, 0.0],
            theta: -self.theta,
        };
        let rb = inv.rotate(self.b);
        Se2::new(-rb[0], -rb[1], -self.theta)
    }
}

/// Left action of SE(2) on M2: `(b + R x, theta_g + theta_p)`.
pub fn se2_act(g: &Se2, p: &PlanarPoint) -> PlanarPoint {
    let r = g.rotate([p.x, p.y]);
    PlanarPoint::new(g.b[0] + r[0], g.b[1] + r[1], g.theta + p.theta)
}

/// A point (alpha, beta, phi) of W2 in the chart `R_Z(-beta) R_Y(-alpha) R_X(phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalPoint {
    pub alpha: f64,
    pub beta: f64,
    pub phi: f64,
}

impl SphericalPoint {
    pub fn new(alpha: f64, beta: f64, phi: f64) -> Self {
        Self {
            alpha,
            beta,
            phi: wrap_angle(phi),
        }
    }

    pub fn coords(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.phi]
    }

    pub fn in_chart(&self) -> bool {
        self.alpha.abs() < FRAC_PI_2 && self.beta.abs() < FRAC_PI_2
    }
}

/// An element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3(pub Matrix3<f64>);

impl Rotation3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Counter-clockwise rotation about the X axis.
    pub fn rx(t: f64) -> Self {
        let (s, c) = t.sin_cos();
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn ry(t: f64) -> Self {
        let (s, c) = t.sin_cos();
        Self(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn rz(t: f64) -> Self {
        let (s, c) = t.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let r = self.0 * Vector3::new(v[0], v[1], v[2]);
        [r.x, r.y, r.z]
    }

    /// Largest entry of `R^T R - I`, and `|det R - 1|`.
    pub fn orthonormality_defect(&self) -> (f64, f64) {
        let e = (self.0.transpose() * self.0 - Matrix3::identity())
            .abs()
            .max();
        (e, (self.0.determinant() - 1.0).abs())
    }
}

impl Mul for Rotation3 {
    type Output = Rotation3;

    fn mul(self, rhs: Rotation3) -> Rotation3 {
        Rotation3(self.0 * rhs.0)
    }
}

/// Reference position on the sphere.
pub const N0: [f64; 3] = [1.0, 0.0, 0.0];

pub fn rotation_from_coords(q: &SphericalPoint) -> Rotation3 {
    Rotation3::rz(-q.beta) * Rotation3::ry(-q.alpha) * Rotation3::rx(q.phi)
}

/// Chart inverse, principal branch.
pub fn coords_from_rotation(r: &Rotation3) -> Result<SphericalPoint> {
    let m = &r.0;
    // R n0 = (cos a cos b, -cos a sin b, sin a); third row = (sin a, cos a sin phi, cos a cos phi)
    let sa = m[(2, 0)].clamp(-1.0, 1.0);
    let alpha = sa.asin();
    if FRAC_PI_2 - alpha.abs() < CHART_INVERSE_TOLERANCE {
        return Err(Error::DegenerateChart { alpha });
    }
    let beta = (-m[(1, 0)]).atan2(m[(0, 0)]);
    let phi = m[(2, 1)].atan2(m[(2, 2)]);
    Ok(SphericalPoint::new(alpha, beta, phi))
}

/// Position `R n0` on the unit sphere.
pub fn sphere_position(alpha: f64, beta: f64) -> [f64; 3] {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    [ca * cb, -ca * sb, sa]
}

/// Frame vectors (columns) and coframe covectors (rows) at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameEntry {
    pub frame: Matrix3<f64>,
    pub coframe: Matrix3<f64>,
}

impl FrameEntry {
    /// Coordinate components of frame vector `i` (0-based).
    pub fn vector(&self, i: usize) -> [f64; 3] {
        let c = self.frame.column(i);
        [c[0], c[1], c[2]]
    }

    /// Frame components `(u1, u2, u3)` of a tangent vector given in coordinates.
    pub fn components(&self, v: [f64; 3]) -> [f64; 3] {
        let u = self.coframe * Vector3::new(v[0], v[1], v[2]);
        [u.x, u.y, u.z]
    }

    /// Coordinate components of `sum_i u_i X_i`.
    pub fn tangent(&self, u: [f64; 3]) -> [f64; 3] {
        let v = self.frame * Vector3::new(u[0], u[1], u[2]);
        [v.x, v.y, v.z]
    }

    /// Evaluations `lambda_i = cov(X_i)` of a covector given in coordinates.
    pub fn covector_components(&self, cov: [f64; 3]) -> [f64; 3] {
        let l = self.frame.transpose() * Vector3::new(cov[0], cov[1], cov[2]);
        [l.x, l.y, l.z]
    }

    /// Coordinate components of `sum_i lambda_i omega^i`.
    pub fn covector(&self, lambda: [f64; 3]) -> [f64; 3] {
        let c = self.coframe.transpose() * Vector3::new(lambda[0], lambda[1], lambda[2]);
        [c.x, c.y, c.z]
    }

    /// Largest entry of `frame * coframe - I`.
    pub fn duality_defect(&self) -> f64 {
        (self.frame * self.coframe - Matrix3::identity())
            .abs()
            .max()
    }
}

/// Left-invariant frame of M2:
/// A1 = cos(theta) dx + sin(theta) dy, A2 = -sin(theta) dx + cos(theta) dy, A3 = dtheta.
pub fn frame_m2(p: &PlanarPoint) -> FrameEntry {
    let (s, c) = p.theta.sin_cos();
    let frame = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    let coframe = Matrix3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0);
    FrameEntry { frame, coframe }
}

/// Left-invariant frame of W2, B_i = (R_q)_* d_i at the reference point.
///
/// Closed forms (checked against a numeric pushforward in the tests):
///   B1 = cos(phi) d_alpha + sin(phi)/cos(alpha) d_beta + tan(alpha) sin(phi) d_phi
///   B2 = -sin(phi) d_alpha + cos(phi)/cos(alpha) d_beta + tan(alpha) cos(phi) d_phi
///   B3 = d_phi
pub fn frame_w2(q: &SphericalPoint) -> Result<FrameEntry> {
    if FRAC_PI_2 - q.alpha.abs() < CHART_TOLERANCE {
        return Err(Error::DegenerateChart { alpha: q.alpha });
    }
    let (sa, ca) = q.alpha.sin_cos();
    let (sp, cp) = q.phi.sin_cos();
    let ta = sa / ca;
    #[rustfmt::skip]
    let frame = Matrix3::new(
        cp,      -sp,      0.0,
        sp / ca, cp / ca,  0.0,
        ta * sp, ta * cp,  1.0,
    );
    #[rustfmt::skip]
    let coframe = Matrix3::new(
        cp,  ca * sp,  0.0,
        -sp, ca * cp,  0.0,
        0.0, -sa,      1.0,
    );
    Ok(FrameEntry { frame, coframe })
}

/// The group element `R(h e_i)` generating the flow of B_i through the
/// reference point (`i` 0-based).
pub fn w2_generator(i: usize, h: f64) -> Rotation3 {
    let mut c = [0.0; 3];
    c[i] = h;
    rotation_from_coords(&SphericalPoint::new(c[0], c[1], c[2]))
}

/// Moves `q` by `exp(h X_i)` through right multiplication, i.e. along the
/// integral curve of the left-invariant field `B_i`.
pub fn w2_flow(q: &SphericalPoint, i: usize, h: f64) -> Result<SphericalPoint> {
    coords_from_rotation(&(rotation_from_coords(q) * w2_generator(i, h)))
}
