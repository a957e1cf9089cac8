use std::f64::consts::PI;

use super::generate::{biconcave_profile, biconcave_profile_derivative};
use super::SurfaceMesh;
use crate::{Error, Result, Vec3};

const MAX_NEWTON_ITERATIONS: usize = 50;

/// Closest-point map onto an exact analytic surface.
pub trait SurfaceProjector {
    fn project(&self, p: Vec3) -> Result<Vec3>;
    /// Unit outward normal at a point on (or near) the surface.
    fn normal(&self, p: Vec3) -> Vec3;
}

#[derive(Clone, Copy, Debug)]
pub struct SphereProjector {
    pub radius: f64,
}

impl SurfaceProjector for SphereProjector {
    fn project(&self, p: Vec3) -> Result<Vec3> {
        let r = p.norm();
        if r == 0.0 {
            return Err(Error::Curving("cannot project the sphere centre".into()));
        }
        Ok(p * (self.radius / r))
    }

    fn normal(&self, p: Vec3) -> Vec3 {
        p.normalize()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EllipsoidProjector {
    pub semi_axes: [f64; 3],
}

impl SurfaceProjector for EllipsoidProjector {
    /// Solves for the Lagrange multiplier λ with x_i = p_i a_i² / (a_i² + λ).
    fn project(&self, p: Vec3) -> Result<Vec3> {
        let a2 = self.semi_axes.map(|a| a * a);
        let lower = -a2.iter().cloned().fold(f64::INFINITY, f64::min);
        let residual = |lambda: f64| -> (f64, f64) {
            let mut f = -1.0;
            let mut df = 0.0;
            for i in 0..3 {
                let d = a2[i] + lambda;
                let q = p[i] * p[i] * a2[i] / (d * d);
                f += q;
                df -= 2.0 * q / d;
            }
            (f, df)
        };
        let mut lambda = 0.0;
        for _ in 0..MAX_NEWTON_ITERATIONS {
            let (f, df) = residual(lambda);
            let mut next = lambda - f / df;
            if !next.is_finite() || next <= lower {
                next = 0.5 * (lambda + lower);
            }
            let step = (next - lambda).abs();
            lambda = next;
            if step <= 1e-15 * (1.0 + lambda.abs()) {
                let x = Vec3::new(
                    p.x * a2[0] / (a2[0] + lambda),
                    p.y * a2[1] / (a2[1] + lambda),
                    p.z * a2[2] / (a2[2] + lambda),
                );
                return Ok(x);
            }
        }
        Err(Error::Curving(format!(
            "ellipsoid projection of {:?} did not converge in {MAX_NEWTON_ITERATIONS} iterations",
            p.as_slice()
        )))
    }

    fn normal(&self, p: Vec3) -> Vec3 {
        let [a, b, c] = self.semi_axes;
        Vec3::new(p.x / (a * a), p.y / (b * b), p.z / (c * c)).normalize()
    }
}

/// Surface of revolution with meridian u ↦ (sin u, F(cos u)), u ∈ [0, π].
#[derive(Clone, Copy, Debug)]
pub struct BiconcaveProjector;

impl BiconcaveProjector {
    fn meridian(u: f64) -> (f64, f64) {
        (u.sin(), biconcave_profile(u.cos()))
    }

    fn meridian_d1(u: f64) -> (f64, f64) {
        (u.cos(), -biconcave_profile_derivative(u.cos()) * u.sin())
    }

    fn meridian_d2(u: f64) -> (f64, f64) {
        let (s, c) = u.sin_cos();
        let fpp = 2.0 * 3.0 * 0.121435 * c - 20.0 * 0.561365 * c.powi(3);
        (-s, fpp * s * s - biconcave_profile_derivative(c) * c)
    }

    fn closest_parameter(r: f64, z: f64) -> Result<f64> {
        let dist2 = |u: f64| {
            let (cr, cz) = Self::meridian(u);
            (cr - r).powi(2) + (cz - z).powi(2)
        };
        const SAMPLES: usize = 256;
        let mut u = 0.0;
        let mut best = f64::INFINITY;
        for i in 0..=SAMPLES {
            let v = PI * i as f64 / SAMPLES as f64;
            let d = dist2(v);
            if d < best {
                best = d;
                u = v;
            }
        }
        for _ in 0..MAX_NEWTON_ITERATIONS {
            let (cr, cz) = Self::meridian(u);
            let (tr, tz) = Self::meridian_d1(u);
            let (sr, sz) = Self::meridian_d2(u);
            let g = (cr - r) * tr + (cz - z) * tz;
            let dg = tr * tr + tz * tz + (cr - r) * sr + (cz - z) * sz;
            let step = if dg > 0.0 { g / dg } else { g / (tr * tr + tz * tz) };
            let next = (u - step).clamp(0.0, PI);
            let moved = (next - u).abs();
            u = next;
            if moved <= 1e-15 || g.abs() <= 1e-16 {
                return Ok(u);
            }
        }
        Err(Error::Curving(format!(
            "biconcave projection of (r={r}, z={z}) did not converge in {MAX_NEWTON_ITERATIONS} iterations"
        )))
    }
}

impl SurfaceProjector for BiconcaveProjector {
    fn project(&self, p: Vec3) -> Result<Vec3> {
        let r = p.x.hypot(p.y);
        let u = Self::closest_parameter(r, p.z)?;
        let (cr, cz) = Self::meridian(u);
        if r == 0.0 {
            return Ok(Vec3::new(0.0, 0.0, cz));
        }
        Ok(Vec3::new(p.x / r * cr, p.y / r * cr, cz))
    }

    fn normal(&self, p: Vec3) -> Vec3 {
        let r = p.x.hypot(p.y);
        let u = Self::closest_parameter(r, p.z).unwrap_or(0.0);
        if u < 1e-12 {
            return Vec3::z();
        }
        if PI - u < 1e-12 {
            return -Vec3::z();
        }
        let (tr, tz) = Self::meridian_d1(u);
        let (nr, nz) = (-tz, tr);
        let len = nr.hypot(nz);
        let radial = if r > 0.0 { Vec3::new(p.x / r, p.y / r, 0.0) } else { Vec3::x() };
        radial * (nr / len) + Vec3::z() * (nz / len)
    }
}

/// Adds quadratic geometry nodes: each edge node is the projection of the chord midpoint.
pub fn curve_to_quadratic(mesh: &SurfaceMesh, projector: &dyn SurfaceProjector) -> Result<SurfaceMesh> {
    if mesh.geometry_order() != 1 {
        return Err(Error::InvalidArgument("mesh is already curved".into()));
    }
    let nodes = (0..mesh.n_edges())
        .map(|e| projector.project(mesh.edge_node(e)))
        .collect::<Result<Vec<_>>>()?;
    mesh.clone().with_edge_midpoint_nodes(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_icosphere, BenchmarkShape};

    #[test]
    fn sphere_curving_puts_nodes_on_sphere() {
        let mesh = generate_icosphere(1, 1.0).unwrap();
        let curved = curve_to_quadratic(&mesh, &SphereProjector { radius: 1.0 }).unwrap();
        assert_eq!(curved.geometry_order(), 2);
        for n in curved.edge_midpoint_nodes().unwrap() {
            assert!((n.norm() - 1.0).abs() < 1e-12);
        }
        assert!(curve_to_quadratic(&curved, &SphereProjector { radius: 1.0 }).is_err());
    }

    #[test]
    fn ellipsoid_projection_is_closest_point() {
        let proj = EllipsoidProjector { semi_axes: [1.5, 1.0, 0.7] };
        for p in [Vec3::new(0.3, 0.9, 0.2), Vec3::new(2.0, -0.1, 0.5), Vec3::new(0.1, 0.1, -0.1)] {
            let x = proj.project(p).unwrap();
            let level = (x.x / 1.5).powi(2) + x.y.powi(2) + (x.z / 0.7).powi(2);
            assert!((level - 1.0).abs() < 1e-12);
            // p − x is parallel to the normal at x.
            let n = proj.normal(x);
            assert!((p - x).cross(&n).norm() < 1e-12);
        }
    }

    #[test]
    fn biconcave_projection_fixes_surface_points() {
        let shape = BenchmarkShape::Biconcave;
        let proj = BiconcaveProjector;
        for p in [Vec3::new(0.6, 0.0, 0.8), Vec3::new(0.0, 0.28, -0.96), Vec3::new(0.5, 0.5, 0.5f64.sqrt())] {
            let s = shape.map_unit_sphere(p.normalize());
            let x = proj.project(s).unwrap();
            assert!((x - s).norm() < 1e-12, "{s:?} -> {x:?}");
            let off = s + proj.normal(s) * 0.01;
            assert!((proj.project(off).unwrap() - s).norm() < 1e-10);
        }
    }

    #[test]
    fn biconcave_normal_is_outward_at_rim() {
        let n = BiconcaveProjector.normal(Vec3::new(1.0, 0.0, 0.0));
        assert!((n - Vec3::x()).norm() < 1e-12);
    }
}
