//! Sub-Riemannian and forward-gear Finsler functions on M2 and W2.
//!
//! Everything is computed in frame components: a tangent vector `v` has
//! components `u = coframe * v`, a covector `cov` has components
//! `lambda = frame^T * cov`. Relaxation `eta > 0` turns the lateral
//! constraint into a penalty; `eta = 0` forbids lateral motion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{FrameEntry, ManifoldKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    #[serde(alias = "sr")]
    SubRiemannian,
    #[serde(alias = "forward")]
    ForwardGear,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Model::SubRiemannian => "sub_riemannian",
            Model::ForwardGear => "forward_gear",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub model: Model,
    pub manifold: ManifoldKind,
    /// Stiffness: relative cost of spatial against angular motion.
    pub xi: f64,
    /// Lateral relaxation in `[0, 1]`; 0 is the exact constraint.
    pub eta: f64,
}

impl MetricParams {
    pub fn new(model: Model, manifold: ManifoldKind, xi: f64, eta: f64) -> Result<Self> {
        let p = Self {
            model,
            manifold,
            xi,
            eta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::BadConfig(format!(
                "xi must be positive, got {}",
                self.xi
            )));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::BadConfig(format!(
                "eta must lie in [0, 1], got {}",
                self.eta
            )));
        }
        Ok(())
    }

    /// Diagonal of the dual quadratic form: `F*^2 = C^-2 sum d_i lambda_i^2`.
    #[inline]
    pub fn dual_weights(&self) -> [f64; 3] {
        let k = 1.0 / (self.xi * self.xi);
        [k, self.eta * self.eta * k, 1.0]
    }
}

/// Primal Finsler function on frame components.
pub fn finsler_components(u: [f64; 3], cost: f64, p: &MetricParams) -> f64 {
    if p.model == Model::ForwardGear && u[0] < 0.0 {
        return f64::INFINITY;
    }
    let lateral = if p.eta == 0.0 {
        if u[1] != 0.0 {
            return f64::INFINITY;
        }
        0.0
    } else {
        (p.xi * u[1] / p.eta).powi(2)
    };
    cost * ((p.xi * u[0]).powi(2) + lateral + u[2] * u[2]).sqrt()
}

/// Dual Finsler function on frame components.
#[inline]
pub fn dual_finsler_components(lambda: [f64; 3], cost: f64, p: &MetricParams) -> f64 {
    let d = p.dual_weights();
    let l1 = match p.model {
        Model::SubRiemannian => lambda[0],
        Model::ForwardGear => lambda[0].max(0.0),
    };
    (d[0] * l1 * l1 + d[1] * lambda[1] * lambda[1] + d[2] * lambda[2] * lambda[2]).sqrt() / cost
}

/// Gradient of the dual in its covector argument, as frame components of a
/// tangent vector.
pub fn grad_dual_components(lambda: [f64; 3], cost: f64, p: &MetricParams) -> Result<[f64; 3]> {
    let f = dual_finsler_components(lambda, cost, p);
    if !(f > 0.0) {
        return Err(Error::ZeroCovector);
    }
    let d = p.dual_weights();
    let l1 = match p.model {
        Model::SubRiemannian => lambda[0],
        Model::ForwardGear => lambda[0].max(0.0),
    };
    let s = 1.0 / (cost * cost * f);
    Ok([d[0] * l1 * s, d[1] * lambda[1] * s, d[2] * lambda[2] * s])
}

/// Finsler cost of the coordinate-basis tangent `v` at `pt`.
pub fn finsler(pt: [f64; 3], v: [f64; 3], cost: f64, p: &MetricParams) -> Result<f64> {
    let fr = p.manifold.frame(pt)?;
    Ok(finsler_components(fr.components(v), cost, p))
}

/// Dual Finsler function of the coordinate-basis covector `cov` at `pt`.
pub fn dual_finsler(pt: [f64; 3], cov: [f64; 3], cost: f64, p: &MetricParams) -> Result<f64> {
    let fr = p.manifold.frame(pt)?;
    Ok(dual_finsler_components(
        fr.covector_components(cov),
        cost,
        p,
    ))
}

/// Gradient of the dual Finsler function in the coordinate basis.
pub fn grad_dual_finsler(
    pt: [f64; 3],
    cov: [f64; 3],
    cost: f64,
    p: &MetricParams,
) -> Result<[f64; 3]> {
    let fr = p.manifold.frame(pt)?;
    grad_dual_in_frame(&fr, cov, cost, p)
}

pub fn grad_dual_in_frame(
    fr: &FrameEntry,
    cov: [f64; 3],
    cost: f64,
    p: &MetricParams,
) -> Result<[f64; 3]> {
    let g = grad_dual_components(fr.covector_components(cov), cost, p)?;
    Ok(fr.tangent(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{
        coords_from_rotation, frame_m2, frame_w2, rotation_from_coords, se2_act, PlanarPoint,
        Rotation3, Se2, SphericalPoint,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn params(model: Model, manifold: ManifoldKind, xi: f64, eta: f64) -> MetricParams {
        MetricParams::new(model, manifold, xi, eta).unwrap()
    }

    fn sr() -> MetricParams {
        params(Model::SubRiemannian, ManifoldKind::M2, 1.0, 0.0)
    }

    fn fw() -> MetricParams {
        params(Model::ForwardGear, ManifoldKind::M2, 1.0, 0.0)
    }

    fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    #[test]
    fn unit_frame_vectors() {
        let pt = [0.3, -1.0, 0.8];
        let fr = frame_m2(&PlanarPoint::new(0.3, -1.0, 0.8));
        assert!((finsler(pt, fr.vector(0), 1.0, &sr()).unwrap() - 1.0).abs() < 1e-12);
        assert!((finsler(pt, fr.vector(2), 1.0, &sr()).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            finsler_components([0.0, 1.0, 0.0], 1.0, &sr()),
            f64::INFINITY
        );
        assert_eq!(
            finsler_components([-1.0, 0.0, 0.0], 1.0, &fw()),
            f64::INFINITY
        );
        assert_eq!(finsler_components([-1.0, 0.0, 0.0], 1.0, &sr()), 1.0);
    }

    #[test]
    fn dual_reference_values() {
        assert_eq!(dual_finsler_components([1.0, 0.0, 0.0], 1.0, &sr()), 1.0);
        assert_eq!(dual_finsler_components([-1.0, 0.0, 0.0], 1.0, &fw()), 0.0);
        assert_eq!(dual_finsler_components([-1.0, 0.0, 0.0], 1.0, &sr()), 1.0);
        let g = grad_dual_components([0.0, 0.0, 1.0], 1.0, &sr()).unwrap();
        assert_eq!(g, [0.0, 0.0, 1.0]);
        assert!(matches!(
            grad_dual_components([-1.0, 0.0, 0.0], 1.0, &fw()),
            Err(Error::ZeroCovector)
        ));
    }

    /// `sup_u <lambda, u> / F(u)` over a dense set of directions.
    fn brute_force_dual(lambda: [f64; 3], cost: f64, p: &MetricParams) -> f64 {
        let (na, nb) = (600, 1200);
        let mut best: f64 = 0.0;
        for i in 0..=na {
            let a = PI * i as f64 / na as f64;
            for j in 0..nb {
                let b = 2.0 * PI * j as f64 / nb as f64;
                // anisotropic sampling concentrates directions where the unit ball is long
                let mut u = [
                    a.sin() * b.cos() / p.xi,
                    p.eta * a.sin() * b.sin() / p.xi,
                    a.cos(),
                ];
                if p.model == Model::ForwardGear {
                    // fold onto the admissible half-space, keeping its boundary u1 = 0
                    u[0] = u[0].abs();
                }
                let f = finsler_components(u, cost, p);
                if f.is_finite() && f > 0.0 {
                    best = best.max(dot(lambda, u) / f);
                }
            }
        }
        best
    }

    #[test]
    fn legendre_duality_by_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for model in [Model::SubRiemannian, Model::ForwardGear] {
            for &(xi, eta) in &[(1.0, 0.5), (4.0, 0.2), (0.7, 1.0)] {
                let p = params(model, ManifoldKind::M2, xi, eta);
                for _ in 0..4 {
                    let l = [
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                    ];
                    let c = rng.gen_range(0.2..1.0);
                    let exact = dual_finsler_components(l, c, &p);
                    let brute = brute_force_dual(l, c, &p);
                    assert!(
                        (exact - brute).abs() <= 1e-3 * exact.max(1e-12),
                        "{model} {l:?}: {exact} vs {brute}"
                    );
                }
            }
        }
        // unit covector omega^1 at C = xi = 1
        let p = params(Model::SubRiemannian, ManifoldKind::M2, 1.0, 0.5);
        assert!((brute_force_dual([1.0, 0.0, 0.0], 1.0, &p) - 1.0).abs() < 1e-3);
        let p = params(Model::ForwardGear, ManifoldKind::M2, 1.0, 0.5);
        assert!(brute_force_dual([-1.0, 0.0, 0.0], 1.0, &p).abs() < 1e-3);
    }

    #[test]
    fn homogeneity_and_euler_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..10_000 {
            let manifold = if i % 2 == 0 {
                ManifoldKind::M2
            } else {
                ManifoldKind::W2
            };
            let model = if i % 3 == 0 {
                Model::ForwardGear
            } else {
                Model::SubRiemannian
            };
            let p = params(
                model,
                manifold,
                rng.gen_range(0.5..6.0),
                rng.gen_range(0.0..1.0),
            );
            let pt = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-PI..PI),
            ];
            let cov = [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ];
            let c = rng.gen_range(0.05..1.0);
            let f = dual_finsler(pt, cov, c, &p).unwrap();
            let f2 = dual_finsler(pt, cov.map(|x| 2.0 * x), c, &p).unwrap();
            assert!((f2 - 2.0 * f).abs() <= 1e-12 * f.max(1.0));
            if f > 1e-9 {
                let g = grad_dual_finsler(pt, cov, c, &p).unwrap();
                assert!(
                    (dot(cov, g) - f).abs() <= 1e-8 * f.max(1.0),
                    "euler {} vs {f}",
                    dot(cov, g)
                );
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for i in 0..1000 {
            let manifold = if i % 2 == 0 {
                ManifoldKind::M2
            } else {
                ManifoldKind::W2
            };
            let model = if i % 3 == 0 {
                Model::ForwardGear
            } else {
                Model::SubRiemannian
            };
            let p = params(
                model,
                manifold,
                rng.gen_range(0.5..6.0),
                rng.gen_range(0.0..1.0),
            );
            let pt = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-PI..PI),
            ];
            let cov = [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ];
            let fr = manifold.frame(pt).unwrap();
            // keep away from the kink of the forward-gear dual
            if model == Model::ForwardGear && fr.covector_components(cov)[0].abs() < 1e-3 {
                continue;
            }
            let c = rng.gen_range(0.05..1.0);
            let Ok(g) = grad_dual_finsler(pt, cov, c, &p) else {
                continue;
            };
            for j in 0..3 {
                let mut a = cov;
                let mut b = cov;
                a[j] += h;
                b[j] -= h;
                let fd = (dual_finsler(pt, a, c, &p).unwrap()
                    - dual_finsler(pt, b, c, &p).unwrap())
                    / (2.0 * h);
                assert!(
                    (fd - g[j]).abs() < 1e-5 * g[j].abs().max(1.0),
                    "component {j}: {fd} vs {}",
                    g[j]
                );
            }
        }
    }

    #[test]
    fn forward_gear_dominates_sub_riemannian() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5000 {
            let xi = rng.gen_range(0.5..6.0);
            let eta = rng.gen_range(0.0..1.0);
            let s = params(Model::SubRiemannian, ManifoldKind::M2, xi, eta);
            let f = params(Model::ForwardGear, ManifoldKind::M2, xi, eta);
            let u = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let c = rng.gen_range(0.05..1.0);
            assert!(finsler_components(u, c, &f) >= finsler_components(u, c, &s));
            assert!(dual_finsler_components(u, c, &f) <= dual_finsler_components(u, c, &s));
        }
    }

    #[test]
    fn left_invariance_on_m2() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = params(Model::SubRiemannian, ManifoldKind::M2, 2.5, 0.3);
        for _ in 0..1000 {
            let q = PlanarPoint::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-PI..PI),
            );
            let g = Se2::new(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-PI..PI),
            );
            let v = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let (s, c) = g.theta.sin_cos();
            let gv = [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]];
            let gq = se2_act(&g, &q);
            let a = finsler(q.coords(), v, 1.0, &p).unwrap();
            let b = finsler(gq.coords(), gv, 1.0, &p).unwrap();
            assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        }
    }

    #[test]
    fn left_invariance_on_w2() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = params(Model::SubRiemannian, ManifoldKind::W2, 3.0, 0.4);
        let mut checked = 0;
        while checked < 300 {
            let q = SphericalPoint::new(
                rng.gen_range(-0.6..0.6),
                rng.gen_range(-0.6..0.6),
                rng.gen_range(-PI..PI),
            );
            let g =
                Rotation3::rz(rng.gen_range(-0.3..0.3)) * Rotation3::ry(rng.gen_range(-0.3..0.3));
            let Ok(gq) = coords_from_rotation(&(g * rotation_from_coords(&q))) else {
                continue;
            };
            if !gq.in_chart() || gq.alpha.abs() > 1.2 {
                continue;
            }
            let v = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            // pushforward of v by left multiplication, fourth-order central differences
            let moved = |t: f64| {
                let c = [q.alpha + t * v[0], q.beta + t * v[1], q.phi + t * v[2]];
                let r = g * rotation_from_coords(&SphericalPoint::new(c[0], c[1], c[2]));
                coords_from_rotation(&r).unwrap().coords()
            };
            let h = 1e-3;
            let (a1, b1, a2, b2) = (moved(h), moved(-h), moved(2.0 * h), moved(-2.0 * h));
            let mut gv = [0.0; 3];
            for k in 0..3 {
                let d = |x: f64, y: f64| {
                    if k == 2 {
                        crate::manifold::angle_diff(x, y)
                    } else {
                        x - y
                    }
                };
                gv[k] = (8.0 * d(a1[k], b1[k]) - d(a2[k], b2[k])) / (12.0 * h);
            }
            let a = finsler(q.coords(), v, 1.0, &p).unwrap();
            let b = finsler(gq.coords(), gv, 1.0, &p).unwrap();
            assert!((a - b).abs() <= 1e-8 * a.max(1.0), "{a} vs {b}");
            checked += 1;
        }
    }

    #[test]
    fn w2_frame_is_unit_under_metric() {
        let q = SphericalPoint::new(0.4, -0.2, 1.1);
        let fr = frame_w2(&q).unwrap();
        let p = params(Model::SubRiemannian, ManifoldKind::W2, 1.0, 0.0);
        assert!((finsler(q.coords(), fr.vector(0), 1.0, &p).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            finsler(q.coords(), fr.vector(1), 1.0, &p).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(MetricParams::new(Model::SubRiemannian, ManifoldKind::M2, 0.0, 0.0).is_err());
        assert!(MetricParams::new(Model::SubRiemannian, ManifoldKind::M2, 1.0, 1.5).is_err());
    }
}
