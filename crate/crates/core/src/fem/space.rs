//! Continuous Lagrange spaces of order 1–3 on a [`SurfaceMesh`].
//!
//! Global numbering: vertex dofs first, then edge dofs (one per edge for
//! order 2, two per edge for order 3, ordered from the edge's first to its
//! second endpoint), then one interior dof per triangle for order 3.
//! Order 3 only serves the auxiliary problem of the H⁻¹ error norm.

use std::sync::{Arc, OnceLock};

use super::sparse::CsrMatrix;
use crate::mesh::SurfaceMesh;
use crate::{Error, Result};

/// Largest number of local basis functions (cubic triangle).
pub const MAX_LOCAL: usize = 10;

/// Number of local basis functions on a triangle.
pub fn n_local(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

/// Global dof indices of one element, in local basis order.
#[derive(Clone, Copy, Debug)]
pub struct LocalDofs {
    idx: [usize; MAX_LOCAL],
    len: usize,
}

impl LocalDofs {
    pub fn as_slice(&self) -> &[usize] {
        &self.idx[..self.len]
    }
}

/// Basis values and reference gradients at one reference point.
#[derive(Clone, Copy, Debug)]
pub struct BasisEval {
    pub values: [f64; MAX_LOCAL],
    pub grads: [[f64; 2]; MAX_LOCAL],
    pub len: usize,
}

const GRAD_LAMBDA: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

/// Evaluates the local Lagrange basis of the given order at ξ.
pub fn eval_basis(order: usize, xi: [f64; 2]) -> BasisEval {
    let l = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
    let g = GRAD_LAMBDA;
    let mut out = BasisEval {
        values: [0.0; MAX_LOCAL],
        grads: [[0.0; 2]; MAX_LOCAL],
        len: n_local(order),
    };
    let comb = |a: f64, ga: [f64; 2], b: f64, gb: [f64; 2]| [a * ga[0] + b * gb[0], a * ga[1] + b * gb[1]];
    match order {
        1 => {
            out.values[..3].copy_from_slice(&l);
            out.grads[..3].copy_from_slice(&g);
        }
        2 => {
            for i in 0..3 {
                out.values[i] = l[i] * (2.0 * l[i] - 1.0);
                out.grads[i] = comb(4.0 * l[i] - 1.0, g[i], 0.0, g[i]);
                let j = (i + 1) % 3;
                out.values[3 + i] = 4.0 * l[i] * l[j];
                out.grads[3 + i] = comb(4.0 * l[j], g[i], 4.0 * l[i], g[j]);
            }
        }
        3 => {
            for i in 0..3 {
                let li = l[i];
                out.values[i] = 0.5 * li * (3.0 * li - 1.0) * (3.0 * li - 2.0);
                out.grads[i] = comb(0.5 * (27.0 * li * li - 18.0 * li + 2.0), g[i], 0.0, g[i]);
                let j = (i + 1) % 3;
                let lj = l[j];
                // Node at (λᵢ, λⱼ) = (2/3, 1/3), then (1/3, 2/3).
                out.values[3 + 2 * i] = 4.5 * li * lj * (3.0 * li - 1.0);
                out.grads[3 + 2 * i] = comb(4.5 * lj * (6.0 * li - 1.0), g[i], 4.5 * li * (3.0 * li - 1.0), g[j]);
                out.values[4 + 2 * i] = 4.5 * li * lj * (3.0 * lj - 1.0);
                out.grads[4 + 2 * i] = comb(4.5 * lj * (3.0 * lj - 1.0), g[i], 4.5 * li * (6.0 * lj - 1.0), g[j]);
            }
            out.values[9] = 27.0 * l[0] * l[1] * l[2];
            let b = [27.0 * l[1] * l[2], 27.0 * l[0] * l[2], 27.0 * l[0] * l[1]];
            out.grads[9] = [
                b[0] * g[0][0] + b[1] * g[1][0] + b[2] * g[2][0],
                b[0] * g[0][1] + b[1] * g[1][1] + b[2] * g[2][1],
            ];
        }
        _ => unreachable!("order validated at space construction"),
    }
    out
}

/// Reference coordinates of the local Lagrange nodes.
pub fn local_nodes(order: usize) -> Vec<[f64; 2]> {
    let verts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let mut nodes = verts.to_vec();
    match order {
        1 => {}
        2 => (0..3).for_each(|i| nodes.push(lerp(verts[i], verts[(i + 1) % 3], 0.5))),
        3 => {
            for i in 0..3 {
                nodes.push(lerp(verts[i], verts[(i + 1) % 3], 1.0 / 3.0));
                nodes.push(lerp(verts[i], verts[(i + 1) % 3], 2.0 / 3.0));
            }
            nodes.push([1.0 / 3.0, 1.0 / 3.0]);
        }
        _ => unreachable!("order validated at space construction"),
    }
    nodes
}

/// Scalar continuous Lagrange space.
#[derive(Clone, Debug)]
pub struct ScalarSpace {
    mesh: Arc<SurfaceMesh>,
    order: usize,
    /// Sparsity pattern of the square element coupling, shared by clones.
    pattern: Arc<OnceLock<CsrMatrix>>,
}

impl ScalarSpace {
    pub fn new(mesh: Arc<SurfaceMesh>, order: usize) -> Result<Self> {
        if !(1..=3).contains(&order) {
            return Err(Error::InvalidArgument(format!("Lagrange order must be 1, 2 or 3, got {order}")));
        }
        Ok(Self {
            mesh,
            order,
            pattern: Arc::new(OnceLock::new()),
        })
    }

    pub fn mesh(&self) -> &Arc<SurfaceMesh> {
        &self.mesh
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn ndof(&self) -> usize {
        let m = &self.mesh;
        match self.order {
            1 => m.n_vertices(),
            2 => m.n_vertices() + m.n_edges(),
            _ => m.n_vertices() + 2 * m.n_edges() + m.n_triangles(),
        }
    }

    pub fn n_local(&self) -> usize {
        n_local(self.order)
    }

    pub fn element_dofs(&self, t: usize) -> LocalDofs {
        let m = &self.mesh;
        let tri = m.triangles()[t];
        let mut idx = [0; MAX_LOCAL];
        idx[..3].copy_from_slice(&tri);
        let nv = m.n_vertices();
        let edges = m.triangle_edges(t);
        match self.order {
            1 => {}
            2 => {
                for i in 0..3 {
                    idx[3 + i] = nv + edges[i];
                }
            }
            _ => {
                for i in 0..3 {
                    let base = nv + 2 * edges[i];
                    let forward = m.edges()[edges[i]].vertices[0] == tri[i];
                    idx[3 + 2 * i] = if forward { base } else { base + 1 };
                    idx[4 + 2 * i] = if forward { base + 1 } else { base };
                }
                idx[9] = nv + 2 * m.n_edges() + t;
            }
        }
        LocalDofs {
            idx,
            len: self.n_local(),
        }
    }

    /// Zero matrix coupling every pair of dofs that share an element.
    pub fn square_pattern(&self) -> CsrMatrix {
        self.pattern
            .get_or_init(|| {
                let dofs: Vec<_> = (0..self.mesh.n_triangles()).map(|t| self.element_dofs(t)).collect();
                CsrMatrix::from_element_pattern(
                    self.ndof(),
                    self.ndof(),
                    dofs.iter().map(|d| (d.as_slice(), d.as_slice())),
                )
            })
            .clone()
    }

    /// Same mesh (by identity) and order.
    pub fn same_as(&self, other: &ScalarSpace) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh) && self.order == other.order
    }
}

/// Three copies of a scalar space; coefficient of component c at scalar dof i is `c·n + i`.
#[derive(Clone, Debug)]
pub struct VectorSpace {
    scalar: ScalarSpace,
}

impl VectorSpace {
    pub fn new(mesh: Arc<SurfaceMesh>, order: usize) -> Result<Self> {
        if order > 2 {
            return Err(Error::InvalidArgument(format!("vector spaces support orders 1 and 2, got {order}")));
        }
        Ok(Self {
            scalar: ScalarSpace::new(mesh, order)?,
        })
    }

    pub fn scalar(&self) -> &ScalarSpace {
        &self.scalar
    }

    pub fn mesh(&self) -> &Arc<SurfaceMesh> {
        self.scalar.mesh()
    }

    pub fn order(&self) -> usize {
        self.scalar.order()
    }

    pub fn ndof(&self) -> usize {
        3 * self.scalar.ndof()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_icosphere;

    #[test]
    fn partition_of_unity_and_zero_gradient_sum() {
        for order in 1..=3 {
            for xi in [[0.1, 0.2], [0.7, 0.1], [1.0 / 3.0, 1.0 / 3.0], [0.0, 0.0]] {
                let b = eval_basis(order, xi);
                let s: f64 = b.values[..b.len].iter().sum();
                assert!((s - 1.0).abs() < 1e-14);
                let gx: f64 = b.grads[..b.len].iter().map(|g| g[0]).sum();
                let gy: f64 = b.grads[..b.len].iter().map(|g| g[1]).sum();
                assert!(gx.abs() < 1e-13 && gy.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn nodal_property() {
        for order in 1..=3 {
            let nodes = local_nodes(order);
            for (j, &x) in nodes.iter().enumerate() {
                let b = eval_basis(order, x);
                for i in 0..b.len {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((b.values[i] - expected).abs() < 1e-14, "order {order} basis {i} at node {j}");
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-5;
        for order in 1..=3 {
            let xi = [0.23, 0.41];
            let b = eval_basis(order, xi);
            for d in 0..2 {
                let mut p = xi;
                let mut m = xi;
                p[d] += h;
                m[d] -= h;
                let (bp, bm) = (eval_basis(order, p), eval_basis(order, m));
                for i in 0..b.len {
                    let fd = (bp.values[i] - bm.values[i]) / (2.0 * h);
                    assert!((fd - b.grads[i][d]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn dof_counts() {
        let mesh = Arc::new(generate_icosphere(1, 1.0).unwrap());
        assert_eq!(ScalarSpace::new(mesh.clone(), 1).unwrap().ndof(), 42);
        assert_eq!(ScalarSpace::new(mesh.clone(), 2).unwrap().ndof(), 42 + 120);
        assert_eq!(ScalarSpace::new(mesh.clone(), 3).unwrap().ndof(), 42 + 240 + 80);
        assert_eq!(VectorSpace::new(mesh.clone(), 2).unwrap().ndof(), 3 * 162);
        assert!(ScalarSpace::new(mesh, 4).is_err());
    }

    #[test]
    fn cubic_edge_dofs_are_shared_consistently() {
        // Each global edge dof must sit at the same physical point from both sides.
        let mesh = Arc::new(generate_icosphere(1, 1.0).unwrap());
        let space = ScalarSpace::new(mesh.clone(), 3).unwrap();
        let nodes = local_nodes(3);
        let mut position = vec![None; space.ndof()];
        for t in 0..mesh.n_triangles() {
            let tri = mesh.triangles()[t];
            let v = |x: [f64; 2]| {
                let p = mesh.vertices();
                p[tri[0]] * (1.0 - x[0] - x[1]) + p[tri[1]] * x[0] + p[tri[2]] * x[1]
            };
            for (k, &dof) in space.element_dofs(t).as_slice().iter().enumerate() {
                let x = v(nodes[k]);
                match position[dof] {
                    None => position[dof] = Some(x),
                    Some(prev) => assert!((prev - x).norm() < 1e-14),
                }
            }
        }
        assert!(position.iter().all(Option::is_some));
    }
}
