//! Closed, oriented triangle meshes and everything attached to their geometry.
//!
//! A [`SurfaceMesh`] is immutable after construction. Geometry changes are
//! expressed as a [`DeformationState`] (a displacement field in a vector
//! Lagrange space over the mesh); the reference vertices never move.

mod curving;
mod deform;
mod generate;

use std::collections::HashMap;

pub use curving::{curve_to_quadratic, BiconcaveProjector, EllipsoidProjector, SphereProjector, SurfaceProjector};
pub(crate) use deform::{dof_reference_positions, edge_reference};
pub use deform::{
    element_frame, geometry_sample, measure, DeformationState, EdgePoint, ElementMap, Frame, GeomLocation,
    GeomSample, Measures, SurfacePoint,
};
pub use generate::{
    biconcave_profile, generate_benchmark_shape, generate_icosphere, icosahedron, tetrahedron, BenchmarkShape,
    Jitter, MAX_SUBDIVISIONS,
};

use crate::{Error, Result, Vec3};

/// One undirected edge of a closed mesh.
///
/// The left triangle traverses the edge from `vertices[0]` to `vertices[1]`,
/// the right triangle in reverse. Local edge `i` of a triangle runs from its
/// local vertex `i` to local vertex `(i + 1) % 3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeRecord {
    pub vertices: [usize; 2],
    pub left: usize,
    pub right: usize,
    pub left_local: usize,
    pub right_local: usize,
}

/// Edge records plus, per triangle, the global edge of each local edge.
#[derive(Clone, Debug)]
pub struct EdgeAdjacency {
    pub edges: Vec<EdgeRecord>,
    pub triangle_edges: Vec<[usize; 3]>,
}

/// Builds the edge table of an oriented closed 2-manifold.
///
/// Fails when an edge is used twice in the same direction (non-manifold or
/// inconsistently oriented) or only once (boundary edge).
pub fn build_edge_adjacency(triangles: &[[usize; 3]]) -> Result<EdgeAdjacency> {
    let mut directed: HashMap<(usize, usize), (usize, usize)> = HashMap::with_capacity(3 * triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[2] == tri[0] {
            return Err(Error::Structural(format!("triangle {t} repeats a vertex: {tri:?}")));
        }
        for i in 0..3 {
            let key = (tri[i], tri[(i + 1) % 3]);
            if let Some((other, _)) = directed.insert(key, (t, i)) {
                return Err(Error::Structural(format!(
                    "directed edge {}->{} used by triangles {other} and {t}: non-manifold edge or inconsistent orientation",
                    key.0, key.1
                )));
            }
        }
    }

    let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(directed.len() / 2);
    let mut edges = Vec::with_capacity(directed.len() / 2);
    let mut triangle_edges = vec![[usize::MAX; 3]; triangles.len()];
    for (t, tri) in triangles.iter().enumerate() {
        for i in 0..3 {
            let (a, b) = (tri[i], tri[(i + 1) % 3]);
            let key = (a.min(b), a.max(b));
            if let Some(&e) = index.get(&key) {
                triangle_edges[t][i] = e;
                continue;
            }
            let Some(&(right, right_local)) = directed.get(&(b, a)) else {
                return Err(Error::Structural(format!(
                    "edge {a}-{b} of triangle {t} has only one adjacent triangle (open surface)"
                )));
            };
            let e = edges.len();
            edges.push(EdgeRecord {
                vertices: [a, b],
                left: t,
                right,
                left_local: i,
                right_local,
            });
            index.insert(key, e);
            triangle_edges[t][i] = e;
        }
    }
    Ok(EdgeAdjacency { edges, triangle_edges })
}

/// Closed oriented triangle mesh, optionally with one curved geometry node per edge.
#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<EdgeRecord>,
    triangle_edges: Vec<[usize; 3]>,
    edge_midpoint_nodes: Option<Vec<Vec3>>,
}

impl SurfaceMesh {
    /// Builds an affine (order 1) mesh and validates manifoldness and orientation.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if let Some((t, tri)) = triangles
            .iter()
            .enumerate()
            .find(|(_, tri)| tri.iter().any(|&v| v >= vertices.len()))
        {
            return Err(Error::Structural(format!(
                "triangle {t} references vertex out of range: {tri:?} (have {} vertices)",
                vertices.len()
            )));
        }
        if triangles.is_empty() {
            return Err(Error::Structural("mesh has no triangles".into()));
        }
        let adjacency = build_edge_adjacency(&triangles)?;
        Ok(Self {
            vertices,
            triangles,
            edges: adjacency.edges,
            triangle_edges: adjacency.triangle_edges,
            edge_midpoint_nodes: None,
        })
    }

    /// Returns a copy carrying quadratic geometry nodes, one per edge.
    pub fn with_edge_midpoint_nodes(mut self, nodes: Vec<Vec3>) -> Result<Self> {
        if nodes.len() != self.edges.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} edge midpoint nodes, got {}",
                self.edges.len(),
                nodes.len()
            )));
        }
        self.edge_midpoint_nodes = Some(nodes);
        Ok(self)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.edges
    }

    /// Global edge index of each local edge of triangle `t`.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }

    pub fn edge_midpoint_nodes(&self) -> Option<&[Vec3]> {
        self.edge_midpoint_nodes.as_deref()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// 1 for straight-sided triangles, 2 when curved edge nodes are present.
    pub fn geometry_order(&self) -> usize {
        if self.edge_midpoint_nodes.is_some() {
            2
        } else {
            1
        }
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.triangles.len() as i64
    }

    /// Reference position of the geometry node on edge `e`: the curved node
    /// when present, the chord midpoint otherwise.
    pub fn edge_node(&self, e: usize) -> Vec3 {
        match &self.edge_midpoint_nodes {
            Some(nodes) => nodes[e],
            None => {
                let [a, b] = self.edges[e].vertices;
                (self.vertices[a] + self.vertices[b]) * 0.5
            }
        }
    }

    /// True when local edge `i` of triangle `t` runs in the edge's endpoint order.
    pub fn edge_is_forward(&self, t: usize, i: usize) -> bool {
        let e = &self.edges[self.triangle_edges[t][i]];
        e.left == t && e.left_local == i
    }

    /// Mean straight edge length of the reference mesh.
    pub fn mean_edge_length(&self) -> f64 {
        let total: f64 = self
            .edges
            .iter()
            .map(|e| (self.vertices[e.vertices[1]] - self.vertices[e.vertices[0]]).norm())
            .sum();
        total / self.edges.len() as f64
    }

    /// Returns the same connectivity with new vertex positions (curved nodes dropped).
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::InvalidArgument("vertex count mismatch".into()));
        }
        Ok(Self {
            vertices,
            triangles: self.triangles.clone(),
            edges: self.edges.clone(),
            triangle_edges: self.triangle_edges.clone(),
            edge_midpoint_nodes: None,
        })
    }

    /// Uniformly scales every vertex and curved node about the origin.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| v * factor).collect(),
            triangles: self.triangles.clone(),
            edges: self.edges.clone(),
            triangle_edges: self.triangle_edges.clone(),
            edge_midpoint_nodes: self
                .edge_midpoint_nodes
                .as_ref()
                .map(|n| n.iter().map(|v| v * factor).collect()),
        }
    }
}
