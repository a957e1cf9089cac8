//! Global matrices and loads on a deformed surface.

use std::sync::Arc;

use super::quadrature::{quadrature, Domain};
use super::space::{eval_basis, BasisEval, ScalarSpace, VectorSpace};
use super::sparse::CsrMatrix;
use crate::mesh::{DeformationState, SurfacePoint};
use crate::{Error, Result};

/// Default ε of the H¹ shape metric.
pub const DEFAULT_METRIC_EPSILON: f64 = 1e-10;

pub(crate) fn check_same_mesh(space: &ScalarSpace, deformation: &DeformationState) -> Result<()> {
    if Arc::ptr_eq(space.mesh(), deformation.mesh()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument("space and deformation live on different meshes".into()))
    }
}

/// Zero matrix with the coupling pattern of `rows` × `cols` on shared elements.
pub fn element_pattern(rows: &ScalarSpace, cols: &ScalarSpace) -> CsrMatrix {
    if rows.same_as(cols) {
        return rows.square_pattern();
    }
    let n = rows.mesh().n_triangles();
    let row_dofs: Vec<_> = (0..n).map(|t| rows.element_dofs(t)).collect();
    let col_dofs: Vec<_> = (0..n).map(|t| cols.element_dofs(t)).collect();
    CsrMatrix::from_element_pattern(
        rows.ndof(),
        cols.ndof(),
        row_dofs.iter().zip(&col_dofs).map(|(r, c)| (r.as_slice(), c.as_slice())),
    )
}

/// Visits every quadrature point of every element with the geometry, the
/// basis of `space` and the integration weight (reference weight × area density).
pub(crate) fn for_each_point(
    space: &ScalarSpace,
    deformation: &DeformationState,
    degree: usize,
    mut visit: impl FnMut(usize, &[usize], &SurfacePoint, &BasisEval, f64) -> Result<()>,
) -> Result<()> {
    check_same_mesh(space, deformation)?;
    let rule = quadrature(Domain::Triangle, degree)?;
    let basis: Vec<BasisEval> = rule.points.iter().map(|&xi| eval_basis(space.order(), xi)).collect();
    for t in 0..space.mesh().n_triangles() {
        let map = deformation.element(t);
        let dofs = space.element_dofs(t);
        for (q, (xi, w)) in rule.iter().enumerate() {
            let p = map.eval(xi)?;
            visit(t, dofs.as_slice(), &p, &basis[q], w * p.area_density)?;
        }
    }
    Ok(())
}

fn assemble_scalar_form(
    space: &ScalarSpace,
    deformation: &DeformationState,
    mass_weight: f64,
    stiffness_weight: f64,
) -> Result<CsrMatrix> {
    let mut m = element_pattern(space, space);
    let nl = space.n_local();
    let mut local = vec![0.0; nl * nl];
    let mut grads = vec![nalgebra::Vector3::zeros(); nl];
    let mut current = usize::MAX;
    let mut current_dofs = Vec::new();
    let degree = deformation.quadrature_degree(space.order());
    for_each_point(space, deformation, degree, |t, dofs, p, b, w| {
        if t != current {
            if current != usize::MAX {
                m.add_local(&current_dofs, &current_dofs, &local);
            }
            local.iter_mut().for_each(|v| *v = 0.0);
            current = t;
            current_dofs = dofs.to_vec();
        }
        for i in 0..nl {
            grads[i] = p.gradient(b.grads[i]);
        }
        for i in 0..nl {
            for j in 0..nl {
                local[i * nl + j] +=
                    w * (mass_weight * b.values[i] * b.values[j] + stiffness_weight * grads[i].dot(&grads[j]));
            }
        }
        Ok(())
    })?;
    if current != usize::MAX {
        m.add_local(&current_dofs, &current_dofs, &local);
    }
    Ok(m)
}

/// Mass matrix M_ij = ∫ φ_i φ_j on the deformed surface.
pub fn assemble_mass(space: &ScalarSpace, deformation: &DeformationState) -> Result<CsrMatrix> {
    assemble_scalar_form(space, deformation, 1.0, 0.0)
}

/// Scalar block K + εM of the H¹ product.
pub fn assemble_scalar_h1(space: &ScalarSpace, epsilon: f64, deformation: &DeformationState) -> Result<CsrMatrix> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("metric epsilon must be positive, got {epsilon}")));
    }
    assemble_scalar_form(space, deformation, epsilon, 1.0)
}

/// H¹ shape metric (V, W) = ∫ ∂^S V : ∂^S W + ε V·W on a vector space.
pub fn assemble_h1_metric(space: &VectorSpace, epsilon: f64, deformation: &DeformationState) -> Result<CsrMatrix> {
    Ok(assemble_scalar_h1(space.scalar(), epsilon, deformation)?.kron_identity3())
}

/// Load vector ∫ f φ_i for a density evaluated at quadrature points.
pub fn assemble_scalar_load(
    space: &ScalarSpace,
    deformation: &DeformationState,
    degree: usize,
    mut density: impl FnMut(usize, &SurfacePoint) -> f64,
) -> Result<Vec<f64>> {
    let mut load = vec![0.0; space.ndof()];
    for_each_point(space, deformation, degree, |t, dofs, p, b, w| {
        let f = density(t, p) * w;
        for (i, &dof) in dofs.iter().enumerate() {
            load[dof] += f * b.values[i];
        }
        Ok(())
    })?;
    Ok(load)
}

/// Divergence constraint B_qj = ∫ ψ_q Div^S φ_j (pressure rows, velocity columns).
pub fn assemble_divergence(
    pressure: &ScalarSpace,
    velocity: &VectorSpace,
    deformation: &DeformationState,
) -> Result<CsrMatrix> {
    check_same_mesh(pressure, deformation)?;
    let vs = velocity.scalar();
    check_same_mesh(vs, deformation)?;
    let nv = vs.ndof();
    let n_tri = vs.mesh().n_triangles();
    let p_dofs: Vec<_> = (0..n_tri).map(|t| pressure.element_dofs(t)).collect();
    let v_dofs: Vec<Vec<usize>> = (0..n_tri)
        .map(|t| {
            let d = vs.element_dofs(t);
            (0..3).flat_map(|c| d.as_slice().iter().map(move |&i| c * nv + i)).collect()
        })
        .collect();
    let mut b = CsrMatrix::from_element_pattern(
        pressure.ndof(),
        velocity.ndof(),
        p_dofs.iter().zip(&v_dofs).map(|(p, v)| (p.as_slice(), v.as_slice())),
    );
    let degree = deformation.quadrature_degree(vs.order());
    let rule = quadrature(Domain::Triangle, degree)?;
    let nlp = pressure.n_local();
    let nlv = vs.n_local();
    let mut local = vec![0.0; nlp * 3 * nlv];
    for t in 0..n_tri {
        let map = deformation.element(t);
        local.iter_mut().for_each(|v| *v = 0.0);
        for (xi, w) in rule.iter() {
            let p = map.eval(xi)?;
            let w = w * p.area_density;
            let bp = eval_basis(pressure.order(), xi);
            let bv = eval_basis(vs.order(), xi);
            for j in 0..nlv {
                let g = p.gradient(bv.grads[j]);
                for q in 0..nlp {
                    for c in 0..3 {
                        local[q * 3 * nlv + c * nlv + j] += w * bp.values[q] * g[c];
                    }
                }
            }
        }
        b.add_local(p_dofs[t].as_slice(), &v_dofs[t], &local);
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::solve::solve_spd;
    use crate::fem::sparse::dot;
    use crate::mesh::{curve_to_quadratic, generate_icosphere, measure, SphereProjector, SurfaceMesh};
    use crate::Vec3;

    fn zero_state(mesh: &Arc<SurfaceMesh>, order: usize) -> DeformationState {
        DeformationState::zero(VectorSpace::new(mesh.clone(), order).unwrap())
    }

    #[test]
    fn single_triangle_mass_matches_closed_form() {
        // Two copies of the same triangle glued back to back form a closed surface.
        let v = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.5, 1.5, 0.0)];
        let mesh = Arc::new(SurfaceMesh::new(v, vec![[0, 1, 2], [0, 2, 1]]).unwrap());
        let state = zero_state(&mesh, 1);
        let space = ScalarSpace::new(mesh, 1).unwrap();
        let m = assemble_mass(&space, &state).unwrap();
        let area = 1.5;
        for i in 0..3 {
            for j in 0..3 {
                let expected = 2.0 * area / 12.0 * if i == j { 2.0 } else { 1.0 };
                assert!((m.get(i, j) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_total_is_area_for_all_orders() {
        let base = generate_icosphere(2, 1.0).unwrap();
        let curved = Arc::new(curve_to_quadratic(&base, &SphereProjector { radius: 1.0 }).unwrap());
        let flat = Arc::new(base);
        for (mesh, vorder) in [(&flat, 1), (&curved, 2)] {
            let state = zero_state(mesh, vorder);
            let area = measure(&state).unwrap().total_area;
            for order in 1..=3 {
                let space = ScalarSpace::new(mesh.clone(), order).unwrap();
                let m = assemble_mass(&space, &state).unwrap();
                let ones = vec![1.0; space.ndof()];
                let total = dot(&ones, &m.mul_vec(&ones));
                // The cubic space integrates with a higher rule than the area measure.
                let tol = if order <= 2 { 1e-12 } else { 1e-9 };
                assert!((total - area).abs() < tol * area, "order {order}: {total} vs {area}");
                assert_eq!(m.max_asymmetry(), 0.0);
                let x = solve_spd(&m, &m.mul_vec(&ones), 1e-10).unwrap();
                assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-8));
            }
        }
    }

    #[test]
    fn identity_projector_curving_is_affine() {
        struct Identity;
        impl crate::mesh::SurfaceProjector for Identity {
            fn project(&self, p: Vec3) -> Result<Vec3> {
                Ok(p)
            }
            fn normal(&self, p: Vec3) -> Vec3 {
                p.normalize()
            }
        }
        let base = Arc::new(generate_icosphere(1, 1.0).unwrap());
        let curved = Arc::new(curve_to_quadratic(&base, &Identity).unwrap());
        let m1 = assemble_mass(&ScalarSpace::new(base.clone(), 1).unwrap(), &zero_state(&base, 1)).unwrap();
        let m2 = assemble_mass(&ScalarSpace::new(curved.clone(), 1).unwrap(), &zero_state(&curved, 1)).unwrap();
        for i in 0..base.n_vertices() {
            for j in 0..base.n_vertices() {
                assert!((m1.get(i, j) - m2.get(i, j)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn h1_metric_on_constants_and_rotations() {
        let mesh = Arc::new(generate_icosphere(2, 1.0).unwrap());
        let state = zero_state(&mesh, 1);
        let space = VectorSpace::new(mesh.clone(), 1).unwrap();
        let eps = 1e-3;
        let h = assemble_h1_metric(&space, eps, &state).unwrap();
        let n = space.scalar().ndof();
        let mut v = vec![0.0; 3 * n];
        let c = Vec3::new(1.0, -2.0, 0.5);
        for i in 0..n {
            for k in 0..3 {
                v[k * n + i] = c[k];
            }
        }
        let area = measure(&state).unwrap().total_area;
        assert!((dot(&v, &h.mul_vec(&v)) - eps * c.norm_squared() * area).abs() < 1e-12);

        let omega = Vec3::new(0.3, 0.1, -0.7);
        let mut r = vec![0.0; 3 * n];
        for (i, x) in mesh.vertices().iter().enumerate() {
            let w = omega.cross(x);
            for k in 0..3 {
                r[k * n + i] = w[k];
            }
        }
        assert!(dot(&r, &h.mul_vec(&r)) > 0.0);

        let bigger = assemble_h1_metric(&space, 2.0 * eps, &state).unwrap();
        for (a, b) in h.diagonal().iter().zip(bigger.diagonal()) {
            assert!(b > *a);
        }
        assert!(assemble_h1_metric(&space, 0.0, &state).is_err());
    }

    #[test]
    fn rigid_motion_leaves_mass_unchanged() {
        let base = generate_icosphere(1, 1.0).unwrap();
        let curved = Arc::new(curve_to_quadratic(&base, &SphereProjector { radius: 1.0 }).unwrap());
        let state = zero_state(&curved, 2);
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -0.5, 1.2);
        let moved = DeformationState::from_node_map(state.space().clone(), |x| rot * x + Vec3::new(0.5, 0.0, -1.0));
        let space = ScalarSpace::new(curved.clone(), 2).unwrap();
        let a = assemble_mass(&space, &state).unwrap();
        let b = assemble_mass(&space, &moved).unwrap();
        for i in 0..space.ndof() {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                assert!((v - b.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn divergence_of_identity_is_two() {
        // X = x has Div^S X = 2, so Σ_j B_qj x_j = ∫ 2 ψ_q.
        let base = generate_icosphere(1, 1.0).unwrap();
        let curved = Arc::new(curve_to_quadratic(&base, &SphereProjector { radius: 1.0 }).unwrap());
        let state = zero_state(&curved, 2);
        let vspace = state.space().clone();
        let pspace = ScalarSpace::new(curved.clone(), 1).unwrap();
        let b = assemble_divergence(&pspace, &vspace, &state).unwrap();
        let x = DeformationState::from_node_map(vspace.clone(), |x| x * 2.0);
        let bx = b.mul_vec(x.displacement());
        let m = assemble_mass(&pspace, &state).unwrap();
        let expected = m.mul_vec(&vec![2.0; pspace.ndof()]);
        for q in 0..pspace.ndof() {
            assert!((bx[q] - expected[q]).abs() < 1e-12);
        }
    }
}
