use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::curving::{BiconcaveProjector, EllipsoidProjector, SphereProjector, SurfaceProjector};
use super::SurfaceMesh;
use crate::{Error, Result, Vec3};

/// Largest accepted subdivision level (20·4⁸ ≈ 1.3M triangles).
pub const MAX_SUBDIVISIONS: usize = 8;

const PHI: f64 = 1.618_033_988_749_894_8;

const ICOSAHEDRON_FACES: [[usize; 3]; 20] = [
    [0, 11, 5],
    [0, 5, 1],
    [0, 1, 7],
    [0, 7, 10],
    [0, 10, 11],
    [1, 5, 9],
    [5, 11, 4],
    [11, 10, 2],
    [10, 7, 6],
    [7, 1, 8],
    [3, 9, 4],
    [3, 4, 2],
    [3, 2, 6],
    [3, 6, 8],
    [3, 8, 9],
    [4, 9, 5],
    [2, 4, 11],
    [6, 2, 10],
    [8, 6, 7],
    [9, 8, 1],
];

const TETRAHEDRON_FACES: [[usize; 3]; 4] = [[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];

/// Regular icosahedron with the given circumradius.
pub fn icosahedron(radius: f64) -> SurfaceMesh {
    let raw = [
        [-1.0, PHI, 0.0],
        [1.0, PHI, 0.0],
        [-1.0, -PHI, 0.0],
        [1.0, -PHI, 0.0],
        [0.0, -1.0, PHI],
        [0.0, 1.0, PHI],
        [0.0, -1.0, -PHI],
        [0.0, 1.0, -PHI],
        [PHI, 0.0, -1.0],
        [PHI, 0.0, 1.0],
        [-PHI, 0.0, -1.0],
        [-PHI, 0.0, 1.0],
    ];
    let vertices = raw
        .iter()
        .map(|p| Vec3::new(p[0], p[1], p[2]).normalize() * radius)
        .collect();
    SurfaceMesh::new(vertices, ICOSAHEDRON_FACES.to_vec()).expect("icosahedron table is a closed manifold")
}

/// Regular tetrahedron with the given circumradius.
pub fn tetrahedron(radius: f64) -> SurfaceMesh {
    let raw = [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];
    let vertices = raw
        .iter()
        .map(|p| Vec3::new(p[0], p[1], p[2]).normalize() * radius)
        .collect();
    SurfaceMesh::new(vertices, TETRAHEDRON_FACES.to_vec()).expect("tetrahedron table is a closed manifold")
}

/// Splits every triangle into four; new vertices go through `place`.
fn subdivide(mesh: &SurfaceMesh, place: impl Fn(Vec3) -> Vec3) -> SurfaceMesh {
    let mut vertices = mesh.vertices().to_vec();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::with_capacity(mesh.n_edges());
    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
        *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
            vertices.push(place((vertices[a] + vertices[b]) * 0.5));
            vertices.len() - 1
        })
    };
    for &[a, b, c] in mesh.triangles() {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        triangles.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
    }
    SurfaceMesh::new(vertices, triangles).expect("subdivision preserves manifoldness")
}

/// Icosahedron refined `subdivisions` times with vertices projected to the sphere.
pub fn generate_icosphere(subdivisions: usize, radius: f64) -> Result<SurfaceMesh> {
    if subdivisions > MAX_SUBDIVISIONS {
        return Err(Error::InvalidArgument(format!(
            "subdivisions must be at most {MAX_SUBDIVISIONS}, got {subdivisions}"
        )));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let mut mesh = icosahedron(radius);
    for _ in 0..subdivisions {
        mesh = subdivide(&mesh, |p| p.normalize() * radius);
    }
    Ok(mesh)
}

/// Meridian profile of the biconcave benchmark: z = F(p) for a unit-sphere height p.
pub fn biconcave_profile(p: f64) -> f64 {
    0.54353 * p + 0.121435 * p.powi(3) - 0.561365 * p.powi(5)
}

pub(crate) fn biconcave_profile_derivative(p: f64) -> f64 {
    0.54353 + 3.0 * 0.121435 * p * p - 5.0 * 0.561365 * p.powi(4)
}

/// Analytic benchmark surfaces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BenchmarkShape {
    Sphere { radius: f64 },
    /// Axis-aligned ellipsoid with semi-axes along x, y, z.
    Ellipsoid { semi_axes: [f64; 3] },
    /// Unit sphere mapped by (x, y, z) ↦ (x, y, F(z)).
    Biconcave,
}

impl BenchmarkShape {
    pub const PROLATE_AXES: [f64; 3] = [1.1017, 0.95, 0.95];
    pub const OBLATE_AXES: [f64; 3] = [1.5065, 1.5065, 0.9];

    pub fn prolate() -> Self {
        Self::Ellipsoid { semi_axes: Self::PROLATE_AXES }
    }

    pub fn oblate() -> Self {
        Self::Ellipsoid { semi_axes: Self::OBLATE_AXES }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::Sphere { radius } if !(radius > 0.0 && radius.is_finite()) => {
                Err(Error::InvalidArgument(format!("sphere radius must be positive, got {radius}")))
            }
            Self::Ellipsoid { semi_axes } if semi_axes.iter().any(|a| !(*a > 0.0 && a.is_finite())) => Err(
                Error::InvalidArgument(format!("semi-axes must be positive, got {semi_axes:?}")),
            ),
            _ => Ok(()),
        }
    }

    /// Maps a point of the unit sphere onto this surface.
    pub fn map_unit_sphere(&self, p: Vec3) -> Vec3 {
        match *self {
            Self::Sphere { radius } => p * radius,
            Self::Ellipsoid { semi_axes: [a, b, c] } => Vec3::new(a * p.x, b * p.y, c * p.z),
            Self::Biconcave => Vec3::new(p.x, p.y, biconcave_profile(p.z)),
        }
    }

    /// Closest-point projector onto the exact surface.
    pub fn projector(&self) -> Box<dyn SurfaceProjector + Send + Sync> {
        match *self {
            Self::Sphere { radius } => Box::new(SphereProjector { radius }),
            Self::Ellipsoid { semi_axes } => Box::new(EllipsoidProjector { semi_axes }),
            Self::Biconcave => Box::new(BiconcaveProjector),
        }
    }

    /// Exact lifted curvature κ = 2H (outward normal, unit sphere gives −2) at a
    /// surface point, when a closed form is available.
    pub fn reference_curvature(&self, x: Vec3) -> Option<f64> {
        match *self {
            Self::Sphere { radius } => Some(-2.0 / radius),
            Self::Ellipsoid { semi_axes: [a, b, c] } => {
                let (a2, b2, c2) = (a * a, b * b, c * c);
                let q = x.x * x.x / (a2 * a2) + x.y * x.y / (b2 * b2) + x.z * x.z / (c2 * c2);
                let h = (x.norm_squared() - a2 - b2 - c2) / (2.0 * a2 * b2 * c2 * q.powf(1.5));
                Some(2.0 * h)
            }
            Self::Biconcave => None,
        }
    }
}

/// Tangential vertex noise: each vertex moves by at most `magnitude` times the
/// mean edge length, then is projected back onto the surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jitter {
    pub magnitude: f64,
    pub seed: u64,
}

impl Jitter {
    pub const DEFAULT_SEED: u64 = 20_240_611;
}

/// Icosphere control mesh mapped onto a benchmark surface.
pub fn generate_benchmark_shape(
    shape: BenchmarkShape,
    subdivisions: usize,
    jitter: Option<Jitter>,
) -> Result<SurfaceMesh> {
    shape.validate()?;
    let sphere = generate_icosphere(subdivisions, 1.0)?;
    let vertices: Vec<Vec3> = sphere.vertices().iter().map(|&p| shape.map_unit_sphere(p)).collect();
    let mesh = sphere.with_vertices(vertices)?;
    match jitter {
        Some(j) if j.magnitude > 0.0 => apply_jitter(&mesh, shape.projector().as_ref(), j),
        Some(j) if j.magnitude < 0.0 => Err(Error::InvalidArgument(format!(
            "jitter magnitude must be non-negative, got {}",
            j.magnitude
        ))),
        _ => Ok(mesh),
    }
}

fn apply_jitter(mesh: &SurfaceMesh, projector: &dyn SurfaceProjector, jitter: Jitter) -> Result<SurfaceMesh> {
    let mut rng = ChaCha8Rng::seed_from_u64(jitter.seed);
    let scale = jitter.magnitude * mesh.mean_edge_length();
    let mut vertices = Vec::with_capacity(mesh.n_vertices());
    for &p in mesh.vertices() {
        let n = projector.normal(p);
        let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = n.cross(&helper).normalize();
        let e2 = n.cross(&e1);
        let angle = rng.random::<f64>() * std::f64::consts::TAU;
        let r = rng.random::<f64>() * scale;
        let moved = p + (e1 * angle.cos() + e2 * angle.sin()) * r;
        vertices.push(projector.project(moved)?);
    }
    mesh.with_vertices(vertices)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn faces_are_outward() {
        for mesh in [icosahedron(1.0), tetrahedron(1.0)] {
            for &[a, b, c] in mesh.triangles() {
                let v = mesh.vertices();
                let n = (v[b] - v[a]).cross(&(v[c] - v[a]));
                assert!(n.dot(&(v[a] + v[b] + v[c])) > 0.0);
            }
        }
    }

    #[test]
    fn icosahedron_edge_length() {
        let mesh = icosahedron(1.0);
        let expected = 4.0 / (10.0 + 2.0 * 5f64.sqrt()).sqrt();
        for e in mesh.edges() {
            let [a, b] = e.vertices;
            assert!(((mesh.vertices()[a] - mesh.vertices()[b]).norm() - expected).abs() < 1e-14);
        }
        assert!((expected - 1.051462).abs() < 1e-6);
    }

    #[test]
    fn subdivision_counts_and_radius() {
        let mesh = generate_icosphere(1, 1.0).unwrap();
        assert_eq!((mesh.n_vertices(), mesh.n_triangles(), mesh.n_edges()), (42, 80, 120));
        for v in mesh.vertices() {
            assert!((v.norm() - 1.0).abs() < 1e-15);
        }
        let mesh = generate_icosphere(3, 2.5).unwrap();
        assert_eq!(mesh.n_triangles(), 20 * 64);
        assert_eq!(mesh.euler_characteristic(), 2);
    }

    #[test]
    fn too_many_subdivisions_rejected() {
        assert!(generate_icosphere(9, 1.0).is_err());
        assert!(generate_icosphere(1, 0.0).is_err());
    }

    #[test]
    fn sphere_shape_matches_icosphere() {
        let a = generate_benchmark_shape(BenchmarkShape::Sphere { radius: 1.0 }, 2, None).unwrap();
        let b = generate_icosphere(2, 1.0).unwrap();
        assert_eq!(a.vertices(), b.vertices());
        assert_eq!(a.triangles(), b.triangles());
    }

    #[test]
    fn biconcave_pole() {
        assert!((biconcave_profile(1.0) - 0.1036).abs() < 1e-12);
        let mesh = generate_benchmark_shape(BenchmarkShape::Biconcave, 2, None).unwrap();
        let pole = mesh
            .vertices()
            .iter()
            .find(|v| v.x.abs() < 1e-12 && v.y.abs() < 1e-12 && v.z > 0.0)
            .expect("first subdivision puts a vertex on the z axis");
        assert!((pole.z - 0.1036).abs() < 1e-12);
        let mapped = BenchmarkShape::Biconcave.map_unit_sphere(Vec3::z());
        assert!((mapped - Vec3::new(0.0, 0.0, 0.1036)).norm() < 1e-12);
    }

    #[test]
    fn prolate_bounding_box() {
        let mesh = generate_benchmark_shape(BenchmarkShape::prolate(), 3, None).unwrap();
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in mesh.vertices() {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        let axes = BenchmarkShape::PROLATE_AXES;
        for i in 0..3 {
            assert!((hi[i] - axes[i]).abs() < 1e-12, "axis {i}: {}", hi[i]);
            assert!((lo[i] + axes[i]).abs() < 1e-12, "axis {i}: {}", lo[i]);
        }
    }

    #[test]
    fn negative_axes_rejected() {
        let shape = BenchmarkShape::Ellipsoid { semi_axes: [1.0, -1.0, 1.0] };
        assert!(generate_benchmark_shape(shape, 1, None).is_err());
    }

    #[test]
    fn jitter_stays_on_surface_and_is_deterministic() {
        let jitter = Some(Jitter { magnitude: 0.2, seed: 7 });
        let a = generate_benchmark_shape(BenchmarkShape::prolate(), 2, jitter).unwrap();
        let b = generate_benchmark_shape(BenchmarkShape::prolate(), 2, jitter).unwrap();
        assert_eq!(a.vertices(), b.vertices());
        let [ax, ay, az] = BenchmarkShape::PROLATE_AXES;
        let plain = generate_benchmark_shape(BenchmarkShape::prolate(), 2, None).unwrap();
        let mut moved = 0;
        for (v, p) in a.vertices().iter().zip(plain.vertices()) {
            let level = (v.x / ax).powi(2) + (v.y / ay).powi(2) + (v.z / az).powi(2);
            assert!((level - 1.0).abs() < 1e-12);
            if (v - p).norm() > 1e-6 {
                moved += 1;
            }
        }
        assert!(moved > a.n_vertices() / 2);
    }

    #[test]
    fn ellipsoid_reference_curvature_of_sphere() {
        let shape = BenchmarkShape::Ellipsoid { semi_axes: [2.0, 2.0, 2.0] };
        let k = shape.reference_curvature(Vec3::new(0.0, 2.0, 0.0)).unwrap();
        assert!((k + 1.0).abs() < 1e-14);
        // Prolate tip: both principal curvatures equal c / a².
        let [c, a, _] = BenchmarkShape::PROLATE_AXES;
        let k = BenchmarkShape::prolate().reference_curvature(Vec3::new(c, 0.0, 0.0)).unwrap();
        assert!((k + 2.0 * c / (a * a)).abs() < 1e-12);
    }
}
