//! Deformed geometry: displacement fields over the reference mesh and the
//! per-element maps, frames and measures they induce.

use std::sync::{Arc, OnceLock};

use super::SurfaceMesh;
use crate::fem::quadrature::{quadrature, Domain};
use crate::fem::space::VectorSpace;
use crate::{Error, Mat3, Result, Vec3};

/// Reference vertices of the unit triangle.
pub(crate) const REF_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Reference point and direction of local edge `i` at parameter `s`.
pub(crate) fn edge_reference(i: usize, s: f64) -> ([f64; 2], [f64; 2]) {
    let a = REF_VERTICES[i];
    let b = REF_VERTICES[(i + 1) % 3];
    let d = [b[0] - a[0], b[1] - a[1]];
    ([a[0] + s * d[0], a[1] + s * d[1]], d)
}

/// Orthonormal edge frame; μ = ν × τ points out of the element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub nu: Vec3,
    pub tau: Vec3,
    pub mu: Vec3,
}

/// Geometry of a deformed element at one reference point.
#[derive(Clone, Copy, Debug)]
pub struct SurfacePoint {
    pub x: Vec3,
    /// Tangent vectors ∂x/∂ξ₁, ∂x/∂ξ₂.
    pub tangents: [Vec3; 2],
    /// Dual basis J(JᵀJ)⁻¹; surface gradients are `dual · ∇_ξ`.
    pub dual: [Vec3; 2],
    pub normal: Vec3,
    /// √det(JᵀJ), the area of the image per unit reference area.
    pub area_density: f64,
    /// Tangential derivative of the normal field, ∂^S ν (zero on flat elements).
    pub shape_operator: Mat3,
}

impl SurfacePoint {
    /// Surface gradient of a field with the given reference gradient.
    pub fn gradient(&self, g: [f64; 2]) -> Vec3 {
        self.dual[0] * g[0] + self.dual[1] * g[1]
    }

    /// tr(∂^S ν) = −2H.
    pub fn normal_divergence(&self) -> f64 {
        self.shape_operator.trace()
    }
}

/// Geometry at a point of a local element edge.
#[derive(Clone, Copy, Debug)]
pub struct EdgePoint {
    pub surface: SurfacePoint,
    pub frame: Frame,
    /// Physical length per unit edge parameter.
    pub length_density: f64,
}

/// Quadratic (or affine) map from the reference triangle onto a deformed element.
///
/// Nodes follow the local P2 order: vertices 0–2, then the geometry nodes of
/// local edges (0,1), (1,2), (2,0).
#[derive(Clone, Copy, Debug)]
pub struct ElementMap {
    pub triangle: usize,
    pub nodes: [Vec3; 6],
    pub affine: bool,
}

impl ElementMap {
    fn jacobian(&self, xi: [f64; 2]) -> [Vec3; 2] {
        let n = &self.nodes;
        if self.affine {
            return [n[1] - n[0], n[2] - n[0]];
        }
        let l0 = 1.0 - xi[0] - xi[1];
        let (x1, x2) = (xi[0], xi[1]);
        // ∂/∂ξ₁ and ∂/∂ξ₂ of the six P2 shape functions.
        let d1 = [
            1.0 - 4.0 * l0,
            4.0 * x1 - 1.0,
            0.0,
            4.0 * (l0 - x1),
            4.0 * x2,
            -4.0 * x2,
        ];
        let d2 = [
            1.0 - 4.0 * l0,
            0.0,
            4.0 * x2 - 1.0,
            -4.0 * x1,
            4.0 * x1,
            4.0 * (l0 - x2),
        ];
        let mut a = [Vec3::zeros(); 2];
        for k in 0..6 {
            a[0] += n[k] * d1[k];
            a[1] += n[k] * d2[k];
        }
        a
    }

    /// Constant second derivatives (x₁₁, x₁₂, x₂₂).
    fn second_derivatives(&self) -> [Vec3; 3] {
        let n = &self.nodes;
        [
            n[0] * 4.0 + n[1] * 4.0 - n[3] * 8.0,
            (n[0] - n[3] + n[4] - n[5]) * 4.0,
            n[0] * 4.0 + n[2] * 4.0 - n[5] * 8.0,
        ]
    }

    pub fn point(&self, xi: [f64; 2]) -> Vec3 {
        let n = &self.nodes;
        let l = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
        if self.affine {
            return n[0] * l[0] + n[1] * l[1] + n[2] * l[2];
        }
        let mut x = Vec3::zeros();
        for i in 0..3 {
            x += n[i] * (l[i] * (2.0 * l[i] - 1.0)) + n[3 + i] * (4.0 * l[i] * l[(i + 1) % 3]);
        }
        x
    }

    pub fn eval(&self, xi: [f64; 2]) -> Result<SurfacePoint> {
        let a = self.jacobian(xi);
        let n = a[0].cross(&a[1]);
        let area_density = n.norm();
        if !(area_density > 1e-14 * a[0].norm() * a[1].norm()) {
            return Err(Error::Degenerate(format!(
                "element {} has a singular Jacobian at reference point {xi:?}",
                self.triangle
            )));
        }
        let normal = n / area_density;
        let g11 = a[0].dot(&a[0]);
        let g12 = a[0].dot(&a[1]);
        let g22 = a[1].dot(&a[1]);
        let det = g11 * g22 - g12 * g12;
        let dual = [
            (a[0] * g22 - a[1] * g12) / det,
            (a[1] * g11 - a[0] * g12) / det,
        ];
        let shape_operator = if self.affine {
            Mat3::zeros()
        } else {
            let [x11, x12, x22] = self.second_derivatives();
            let proj = Mat3::identity() - normal * normal.transpose();
            let dn1 = proj * (x11.cross(&a[1]) + a[0].cross(&x12)) / area_density;
            let dn2 = proj * (x12.cross(&a[1]) + a[0].cross(&x22)) / area_density;
            dn1 * dual[0].transpose() + dn2 * dual[1].transpose()
        };
        Ok(SurfacePoint {
            x: self.point(xi),
            tangents: a,
            dual,
            normal,
            area_density,
            shape_operator,
        })
    }

    /// Geometry at parameter `s` ∈ [0, 1] along local edge `i` (counter-clockwise direction).
    pub fn eval_edge(&self, i: usize, s: f64) -> Result<EdgePoint> {
        let (xi, d) = edge_reference(i, s);
        let surface = self.eval(xi)?;
        let t = surface.tangents[0] * d[0] + surface.tangents[1] * d[1];
        let length_density = t.norm();
        if !(length_density > 1e-14) {
            return Err(Error::Degenerate(format!(
                "edge {i} of element {} has zero length at parameter {s}",
                self.triangle
            )));
        }
        let tau = -t / length_density;
        let nu = surface.normal;
        let mu = nu.cross(&tau);
        Ok(EdgePoint {
            surface,
            frame: Frame { nu, tau, mu },
            length_density,
        })
    }
}

/// Total displacement field over the reference mesh in a vector Lagrange space.
#[derive(Clone, Debug)]
pub struct DeformationState {
    space: VectorSpace,
    displacement: Vec<f64>,
    extra_quadrature: usize,
    elements: OnceLock<Vec<ElementMap>>,
}

impl DeformationState {
    pub fn zero(space: VectorSpace) -> Self {
        let n = space.ndof();
        Self {
            space,
            displacement: vec![0.0; n],
            extra_quadrature: 0,
            elements: OnceLock::new(),
        }
    }

    pub fn new(space: VectorSpace, displacement: Vec<f64>) -> Result<Self> {
        if displacement.len() != space.ndof() {
            return Err(Error::InvalidArgument(format!(
                "displacement has {} coefficients, space has {}",
                displacement.len(),
                space.ndof()
            )));
        }
        if displacement.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("displacement contains non-finite values".into()));
        }
        Ok(Self {
            space,
            displacement,
            extra_quadrature: 0,
            elements: OnceLock::new(),
        })
    }

    /// Displacement interpolating `f(X) − X` at every Lagrange node X of the reference geometry.
    pub fn from_node_map(space: VectorSpace, f: impl Fn(Vec3) -> Vec3) -> Self {
        let nodes = dof_reference_positions(&space);
        let n = nodes.len();
        let mut displacement = vec![0.0; 3 * n];
        for (i, &x) in nodes.iter().enumerate() {
            let d = f(x) - x;
            for c in 0..3 {
                displacement[c * n + i] = d[c];
            }
        }
        Self {
            space,
            displacement,
            extra_quadrature: 0,
            elements: OnceLock::new(),
        }
    }

    pub fn space(&self) -> &VectorSpace {
        &self.space
    }

    pub fn mesh(&self) -> &Arc<SurfaceMesh> {
        self.space.mesh()
    }

    pub fn displacement(&self) -> &[f64] {
        &self.displacement
    }

    /// State with displacement `d + t·direction`.
    pub fn displaced(&self, direction: &[f64], t: f64) -> Self {
        let displacement = self
            .displacement
            .iter()
            .zip(direction)
            .map(|(d, x)| d + t * x)
            .collect();
        Self {
            space: self.space.clone(),
            displacement,
            extra_quadrature: self.extra_quadrature,
            elements: OnceLock::new(),
        }
    }

    /// True when every element map is affine.
    pub fn is_affine(&self) -> bool {
        self.space.order() == 1 && self.mesh().geometry_order() == 1
    }

    /// Polynomial order of the element maps.
    pub fn geometry_order(&self) -> usize {
        if self.is_affine() {
            1
        } else {
            2
        }
    }

    /// Raises every quadrature degree used on this state by `extra` (kept by `displaced`).
    pub fn with_extra_quadrature(mut self, extra: usize) -> Result<Self> {
        let top = 2 * self.space.order().max(self.mesh().geometry_order()) + 2 + extra;
        if top > crate::fem::quadrature::MAX_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "quadrature degree {top} exceeds {}",
                crate::fem::quadrature::MAX_DEGREE
            )));
        }
        self.extra_quadrature = extra;
        Ok(self)
    }

    /// Quadrature degree 2k + 2 (plus any extra) for fields of order `field_order` on this geometry.
    pub fn quadrature_degree(&self, field_order: usize) -> usize {
        2 * field_order.max(self.geometry_order()) + 2 + self.extra_quadrature
    }

    fn nodal_displacement(&self, dof: usize) -> Vec3 {
        let n = self.space.scalar().ndof();
        Vec3::new(
            self.displacement[dof],
            self.displacement[n + dof],
            self.displacement[2 * n + dof],
        )
    }

    /// Displaced node position of each vertex.
    pub fn deformed_vertices(&self) -> Vec<Vec3> {
        self.mesh()
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + self.nodal_displacement(i))
            .collect()
    }

    /// The displaced surface as a standalone mesh (curved when the geometry is).
    pub fn deformed_mesh(&self) -> Result<SurfaceMesh> {
        let mesh = self.mesh();
        let moved = mesh.with_vertices(self.deformed_vertices())?;
        if self.is_affine() {
            return Ok(moved);
        }
        let nodes = mesh
            .edges()
            .iter()
            .enumerate()
            .map(|(e, r)| {
                let d = if self.space.order() == 2 {
                    self.nodal_displacement(mesh.n_vertices() + e)
                } else {
                    (self.nodal_displacement(r.vertices[0]) + self.nodal_displacement(r.vertices[1])) * 0.5
                };
                mesh.edge_node(e) + d
            })
            .collect();
        moved.with_edge_midpoint_nodes(nodes)
    }

    pub fn element(&self, t: usize) -> ElementMap {
        self.elements
            .get_or_init(|| (0..self.mesh().n_triangles()).map(|t| self.build_element(t)).collect())[t]
    }

    fn build_element(&self, t: usize) -> ElementMap {
        let mesh = self.mesh();
        let tri = mesh.triangles()[t];
        let edges = mesh.triangle_edges(t);
        let mut nodes = [Vec3::zeros(); 6];
        let mut vertex_disp = [Vec3::zeros(); 3];
        for i in 0..3 {
            vertex_disp[i] = self.nodal_displacement(tri[i]);
            nodes[i] = mesh.vertices()[tri[i]] + vertex_disp[i];
        }
        for i in 0..3 {
            let d = if self.space.order() == 2 {
                self.nodal_displacement(mesh.n_vertices() + edges[i])
            } else {
                (vertex_disp[i] + vertex_disp[(i + 1) % 3]) * 0.5
            };
            nodes[3 + i] = mesh.edge_node(edges[i]) + d;
        }
        ElementMap {
            triangle: t,
            nodes,
            affine: self.is_affine(),
        }
    }

    /// Element map of the undeformed reference geometry.
    pub fn reference_element(&self, t: usize) -> ElementMap {
        let mesh = self.mesh();
        let tri = mesh.triangles()[t];
        let edges = mesh.triangle_edges(t);
        let mut nodes = [Vec3::zeros(); 6];
        for i in 0..3 {
            nodes[i] = mesh.vertices()[tri[i]];
            nodes[3 + i] = mesh.edge_node(edges[i]);
        }
        ElementMap {
            triangle: t,
            nodes,
            affine: self.is_affine(),
        }
    }
}

/// Reference positions of the scalar dofs of a vector space (vertices, then edge nodes).
pub(crate) fn dof_reference_positions(space: &VectorSpace) -> Vec<Vec3> {
    let mesh = space.mesh();
    let mut nodes = mesh.vertices().to_vec();
    if space.order() == 2 {
        nodes.extend((0..mesh.n_edges()).map(|e| mesh.edge_node(e)));
    }
    nodes
}

/// Area and enclosed volume of a deformed surface.
#[derive(Clone, Debug)]
pub struct Measures {
    pub total_area: f64,
    pub element_areas: Vec<f64>,
    pub enclosed_volume: f64,
}

/// Areas and volume by quadrature; volume = ⅓∫ x·ν.
pub fn measure(deformation: &DeformationState) -> Result<Measures> {
    let mesh = deformation.mesh();
    let rule = quadrature(Domain::Triangle, deformation.quadrature_degree(deformation.space().order()))?;
    let mut element_areas = Vec::with_capacity(mesh.n_triangles());
    let mut volume = 0.0;
    for t in 0..mesh.n_triangles() {
        let map = deformation.element(t);
        let mut area = 0.0;
        for (xi, w) in rule.iter() {
            let p = map.eval(xi)?;
            area += w * p.area_density;
            volume += w * p.area_density * p.x.dot(&p.normal) / 3.0;
        }
        element_areas.push(area);
    }
    let total_area: f64 = element_areas.iter().sum();
    let threshold = 1e-12 * total_area / mesh.n_triangles() as f64;
    if let Some((t, a)) = element_areas.iter().enumerate().find(|(_, a)| **a < threshold) {
        return Err(Error::Degenerate(format!("element {t} collapsed (area {a:e})")));
    }
    Ok(Measures {
        total_area,
        element_areas,
        enclosed_volume: volume,
    })
}

/// Frame of the deformed element at a point of local edge `edge`, obtained by
/// pulling the reference frame through F = I + ∂^S d.
pub fn element_frame(deformation: &DeformationState, triangle: usize, edge: usize, s: f64) -> Result<Frame> {
    if edge > 2 || !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidArgument(format!("invalid edge point ({edge}, {s})")));
    }
    let reference = deformation.reference_element(triangle).eval_edge(edge, s)?;
    let deformed = deformation.element(triangle).eval(edge_reference(edge, s).0)?;
    let r = reference.surface;
    let grad_d = (deformed.tangents[0] - r.tangents[0]) * r.dual[0].transpose()
        + (deformed.tangents[1] - r.tangents[1]) * r.dual[1].transpose();
    let f = Mat3::identity() + grad_d;
    let f_tau = f * reference.frame.tau;
    if f_tau.norm() < 1e-14 {
        return Err(Error::Degenerate(format!(
            "element {triangle}: deformation collapses edge {edge}"
        )));
    }
    let f_inv_t = f
        .try_inverse()
        .ok_or_else(|| Error::Degenerate(format!("element {triangle}: singular deformation gradient")))?
        .transpose();
    let nu = (f_inv_t * reference.frame.nu).normalize();
    let tau = f_tau.normalize();
    Ok(Frame {
        nu,
        tau,
        mu: nu.cross(&tau),
    })
}

/// Pull-back data of the deformed geometry relative to the reference one.
#[derive(Clone, Copy, Debug)]
pub struct GeomSample {
    pub x: Vec3,
    /// Deformed over reference area density.
    pub area_weight: f64,
    /// Deformed over reference length density (edge samples only).
    pub edge_weight: Option<f64>,
    /// Maps reference surface gradients to deformed ones: ∇u_t ∘ T = A ∇u.
    pub a: Mat3,
}

/// Pull-back data at an interior point, or at parameter `s` of local edge `edge`.
pub fn geometry_sample(
    deformation: &DeformationState,
    triangle: usize,
    location: GeomLocation,
) -> Result<GeomSample> {
    let xi = match location {
        GeomLocation::Interior(xi) => xi,
        GeomLocation::Edge { edge, s } => edge_reference(edge, s).0,
    };
    let reference = deformation.reference_element(triangle).eval(xi)?;
    let deformed = deformation.element(triangle).eval(xi)?;
    let a = deformed.dual[0] * reference.tangents[0].transpose() + deformed.dual[1] * reference.tangents[1].transpose();
    let edge_weight = match location {
        GeomLocation::Interior(_) => None,
        GeomLocation::Edge { edge, s } => {
            let r = deformation.reference_element(triangle).eval_edge(edge, s)?;
            let d = deformation.element(triangle).eval_edge(edge, s)?;
            Some(d.length_density / r.length_density)
        }
    };
    Ok(GeomSample {
        x: deformed.x,
        area_weight: deformed.area_density / reference.area_density,
        edge_weight,
        a,
    })
}

/// Where [`geometry_sample`] evaluates.
#[derive(Clone, Copy, Debug)]
pub enum GeomLocation {
    Interior([f64; 2]),
    Edge { edge: usize, s: f64 },
}
