//! Lifted mean curvature κ, its adjoint multiplier σ, bending energy and error norms.
//!
//! Sign convention: outward normal ν and κ = 2H with H = −½ tr(∂^S ν), so the
//! unit sphere has κ = −2 and any convex surface has ∫κ < 0.
//!
//! κ solves M κ = rhs with
//! rhs_i = −Σ_T ∫_T tr(∂^S ν) φ_i − Σ_T ∫_{∂T} arcsin(μ·⟨ν⟩) φ_i,
//! where ⟨ν⟩ is the averaged normal of the two elements sharing an edge.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::fem::assembly::{assemble_scalar_h1, check_same_mesh, for_each_point};
use crate::fem::quadrature::{quadrature, Domain, QuadratureRule};
use crate::fem::solve::{solve_spd, DEFAULT_REL_TOL};
use crate::fem::space::{eval_basis, ScalarSpace};
use crate::fem::{assemble_mass, CsrMatrix};
use crate::mesh::{edge_reference, DeformationState, EdgePoint, SurfacePoint};
use crate::{Error, Result, Vec3};

static ARCSIN_CLAMPS: AtomicUsize = AtomicUsize::new(0);

/// Number of arcsin arguments so far that exceeded [−1, 1] by more than 1e−12.
pub fn arcsin_clamp_count() -> usize {
    ARCSIN_CLAMPS.load(Ordering::Relaxed)
}

/// arcsin with its argument clamped to [−1, 1].
pub fn clamped_arcsin(x: f64) -> f64 {
    if x.abs() > 1.0 + 1e-12 && ARCSIN_CLAMPS.fetch_add(1, Ordering::Relaxed) == 0 {
        log::warn!("arcsin argument {x} clamped to [-1, 1]");
    }
    x.clamp(-1.0, 1.0).asin()
}

/// Bending modulus κ_b and spontaneous curvature H₀.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalParams {
    pub bending_modulus: f64,
    pub spontaneous_curvature: f64,
}

impl PhysicalParams {
    pub fn new(bending_modulus: f64, spontaneous_curvature: f64) -> Result<Self> {
        if !(bending_modulus > 0.0 && bending_modulus.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bending modulus must be positive, got {bending_modulus}"
            )));
        }
        Ok(Self {
            bending_modulus,
            spontaneous_curvature,
        })
    }

    /// Energy density 2κ_b(½κ − H₀)².
    pub fn energy_density(&self, kappa: f64) -> f64 {
        2.0 * self.bending_modulus * (0.5 * kappa - self.spontaneous_curvature).powi(2)
    }

    /// ∂/∂κ of the energy density times 2: 2κ_b(½κ − H₀).
    pub fn adjoint_density(&self, kappa: f64) -> f64 {
        2.0 * self.bending_modulus * (0.5 * kappa - self.spontaneous_curvature)
    }
}

/// Options for the curvature lift.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftOptions {
    /// Project ⟨ν⟩ onto the plane orthogonal to the edge tangent before normalizing.
    pub tangent_projection: bool,
    /// Relative residual of the mass-matrix solves.
    pub rel_tol: f64,
}

impl Default for LiftOptions {
    fn default() -> Self {
        Self {
            tangent_projection: false,
            rel_tol: DEFAULT_REL_TOL,
        }
    }
}

/// Coefficients of a scalar finite-element field.
#[derive(Clone, Debug)]
pub struct ScalarField {
    pub space: ScalarSpace,
    pub values: Vec<f64>,
}

/// The lifted curvature κ.
pub type CurvatureField = ScalarField;
/// The adjoint multiplier σ.
pub type MultiplierField = ScalarField;

impl ScalarField {
    /// Value and reference gradient at a reference point of triangle `t`.
    pub fn eval_ref(&self, t: usize, xi: [f64; 2]) -> (f64, [f64; 2]) {
        let b = eval_basis(self.space.order(), xi);
        let dofs = self.space.element_dofs(t);
        let mut v = 0.0;
        let mut g = [0.0; 2];
        for (i, &d) in dofs.as_slice().iter().enumerate() {
            v += b.values[i] * self.values[d];
            g[0] += b.grads[i][0] * self.values[d];
            g[1] += b.grads[i][1] * self.values[d];
        }
        (v, g)
    }
}

/// Averaged normals of every edge, as polynomial coefficients of order k − 1
/// in the left element's edge parameter.
#[derive(Clone, Debug)]
pub struct AveragedNormals {
    coefficients: Vec<[Vec3; 2]>,
    tangent_projection: bool,
}

impl AveragedNormals {
    /// L² projection (arc length) of ν_L + ν_R onto P^{k−1} on each edge.
    pub fn compute(deformation: &DeformationState, order: usize, tangent_projection: bool) -> Result<Self> {
        let mesh = deformation.mesh();
        let rule = quadrature(Domain::Segment, 2 * order.max(deformation.geometry_order()) + 2)?;
        let coefficients = (0..mesh.n_edges())
            .map(|e| project_edge(deformation, e, order, &rule))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            coefficients,
            tangent_projection,
        })
    }

    /// Unit averaged normal on edge `e` at left parameter `s`; `tau` is the edge
    /// tangent used by the optional orthogonal projection.
    pub fn eval(&self, e: usize, s: f64, tau: Vec3) -> Result<Vec3> {
        let [c0, c1] = self.coefficients[e];
        let mut n = c0 + c1 * (s - 0.5);
        if self.tangent_projection {
            n -= tau * n.dot(&tau);
        }
        let len = n.norm();
        if !(len >= 1e-10) {
            return Err(Error::Degenerate(format!(
                "normals on edge {e} are nearly opposite (|ν_L + ν_R| = {len:e})"
            )));
        }
        Ok(n / len)
    }
}

fn edge_points(deformation: &DeformationState, e: usize, s: f64) -> Result<(EdgePoint, EdgePoint)> {
    let edge = deformation.mesh().edges()[e];
    let left = deformation.element(edge.left).eval_edge(edge.left_local, s)?;
    let right = deformation.element(edge.right).eval_edge(edge.right_local, 1.0 - s)?;
    Ok((left, right))
}

fn project_edge(deformation: &DeformationState, e: usize, order: usize, rule: &QuadratureRule) -> Result<[Vec3; 2]> {
    let mut gram = [[0.0; 2]; 2];
    let mut rhs = [Vec3::zeros(); 2];
    for (p, w) in rule.iter() {
        let s = p[0];
        let (l, r) = edge_points(deformation, e, s)?;
        let sum = l.frame.nu + r.frame.nu;
        let w = w * l.length_density;
        let basis = [1.0, s - 0.5];
        for a in 0..order.min(2) {
            rhs[a] += sum * (w * basis[a]);
            for b in 0..order.min(2) {
                gram[a][b] += w * basis[a] * basis[b];
            }
        }
    }
    if order == 1 {
        return Ok([rhs[0] / gram[0][0], Vec3::zeros()]);
    }
    let det = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
    Ok([
        (rhs[0] * gram[1][1] - rhs[1] * gram[0][1]) / det,
        (rhs[1] * gram[0][0] - rhs[0] * gram[1][0]) / det,
    ])
}

/// Unit averaged normal of edge `e` at left parameter `s` for fields of order `order`.
pub fn averaged_normal(deformation: &DeformationState, e: usize, s: f64, order: usize) -> Result<Vec3> {
    let rule = quadrature(Domain::Segment, 2 * order.max(deformation.geometry_order()) + 2)?;
    let c = project_edge(deformation, e, order, &rule)?;
    let normals = AveragedNormals {
        coefficients: vec![c; deformation.mesh().n_edges().max(e + 1)],
        tangent_projection: false,
    };
    normals.eval(e, s, Vec3::zeros())
}

/// Visits every edge quadrature point: (edge, left param, left point, right point, ⟨ν⟩, weight).
pub(crate) fn for_each_edge_point(
    deformation: &DeformationState,
    normals: &AveragedNormals,
    degree: usize,
    mut visit: impl FnMut(usize, f64, &EdgePoint, &EdgePoint, Vec3, f64) -> Result<()>,
) -> Result<()> {
    let rule = quadrature(Domain::Segment, degree)?;
    for e in 0..deformation.mesh().n_edges() {
        for (p, w) in rule.iter() {
            let s = p[0];
            let (l, r) = edge_points(deformation, e, s)?;
            let nav = normals.eval(e, s, l.frame.tau)?;
            visit(e, s, &l, &r, nav, w)?;
        }
    }
    Ok(())
}

/// Right-hand side of the curvature lift.
pub fn assemble_lift_rhs(space: &ScalarSpace, deformation: &DeformationState, options: &LiftOptions) -> Result<Vec<f64>> {
    check_same_mesh(space, deformation)?;
    let mesh = space.mesh().clone();
    let degree = deformation.quadrature_degree(space.order());
    let mut rhs = vec![0.0; space.ndof()];
    if !deformation.is_affine() {
        for_each_point(space, deformation, degree, |_, dofs, p, b, w| {
            let f = -p.normal_divergence() * w;
            for (i, &d) in dofs.iter().enumerate() {
                rhs[d] += f * b.values[i];
            }
            Ok(())
        })?;
    }
    let normals = AveragedNormals::compute(deformation, space.order(), options.tangent_projection)?;
    for_each_edge_point(deformation, &normals, degree, |e, s, l, r, nav, w| {
        let edge = mesh.edges()[e];
        for (t, local, param, point) in [
            (edge.left, edge.left_local, s, l),
            (edge.right, edge.right_local, 1.0 - s, r),
        ] {
            let angle = clamped_arcsin(point.frame.mu.dot(&nav));
            let basis = eval_basis(space.order(), edge_reference(local, param).0);
            let f = -angle * point.length_density * w;
            for (i, &d) in space.element_dofs(t).as_slice().iter().enumerate() {
                rhs[d] += f * basis.values[i];
            }
        }
        Ok(())
    })?;
    Ok(rhs)
}

/// Mass matrix and options for repeated state/adjoint solves on one geometry.
pub struct LiftSystem<'a> {
    space: &'a ScalarSpace,
    deformation: &'a DeformationState,
    mass: CsrMatrix,
    options: LiftOptions,
}

impl<'a> LiftSystem<'a> {
    pub fn new(space: &'a ScalarSpace, deformation: &'a DeformationState, options: LiftOptions) -> Result<Self> {
        Ok(Self {
            space,
            deformation,
            mass: assemble_mass(space, deformation)?,
            options,
        })
    }

    /// Reuses a mass matrix already assembled on `deformation`.
    pub fn with_mass(space: &'a ScalarSpace, deformation: &'a DeformationState, mass: CsrMatrix, options: LiftOptions) -> Self {
        Self {
            space,
            deformation,
            mass,
            options,
        }
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn into_mass(self) -> CsrMatrix {
        self.mass
    }

    pub fn solve_state(&self) -> Result<CurvatureField> {
        let rhs = assemble_lift_rhs(self.space, self.deformation, &self.options)?;
        Ok(ScalarField {
            space: self.space.clone(),
            values: solve_spd(&self.mass, &rhs, self.options.rel_tol)?,
        })
    }

    /// σ with M σ = −∫ 2κ_b(½κ − H₀) φ_i.
    pub fn solve_adjoint(&self, kappa: &CurvatureField, params: &PhysicalParams) -> Result<MultiplierField> {
        if !kappa.space.same_as(self.space) {
            return Err(Error::InvalidArgument("κ lives in a different space".into()));
        }
        let degree = self.deformation.quadrature_degree(self.space.order());
        let mut load = vec![0.0; self.space.ndof()];
        for_each_point(self.space, self.deformation, degree, |_, dofs, _, b, w| {
            let k: f64 = dofs.iter().enumerate().map(|(i, &d)| b.values[i] * kappa.values[d]).sum();
            let f = -params.adjoint_density(k) * w;
            for (i, &d) in dofs.iter().enumerate() {
                load[d] += f * b.values[i];
            }
            Ok(())
        })?;
        Ok(ScalarField {
            space: self.space.clone(),
            values: solve_spd(&self.mass, &load, self.options.rel_tol)?,
        })
    }
}

/// Solves for κ on the given geometry.
pub fn solve_state(space: &ScalarSpace, deformation: &DeformationState, options: &LiftOptions) -> Result<CurvatureField> {
    LiftSystem::new(space, deformation, *options)?.solve_state()
}

/// Solves for σ given κ on the same geometry.
pub fn solve_adjoint(
    space: &ScalarSpace,
    deformation: &DeformationState,
    kappa: &CurvatureField,
    params: &PhysicalParams,
    options: &LiftOptions,
) -> Result<MultiplierField> {
    LiftSystem::new(space, deformation, *options)?.solve_adjoint(kappa, params)
}

/// Bending energy W and its normalized value E* = W / (8π κ_b).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BendingEnergy {
    pub w: f64,
    pub e_star: f64,
}

pub fn bending_energy(kappa: &CurvatureField, deformation: &DeformationState, params: &PhysicalParams) -> Result<BendingEnergy> {
    let degree = deformation.quadrature_degree(kappa.space.order());
    let mut w = 0.0;
    for_each_point(&kappa.space, deformation, degree, |_, dofs, _, b, weight| {
        let k: f64 = dofs.iter().enumerate().map(|(i, &d)| b.values[i] * kappa.values[d]).sum();
        w += params.energy_density(k) * weight;
        Ok(())
    })?;
    Ok(BendingEnergy {
        w,
        e_star: w / (8.0 * std::f64::consts::PI * params.bending_modulus),
    })
}

/// L² and H⁻¹ norms of κ − κ_ref.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureErrors {
    pub l2: f64,
    pub h_minus1: f64,
}

/// ε of the auxiliary problem: 1 makes ‖u‖_{H¹} the exact dual norm of κ − κ_ref.
pub const HMINUS1_EPSILON: f64 = 1.0;

/// Errors against a reference evaluated at (triangle, reference point, physical point).
///
/// H⁻¹: u ∈ V^l solves (∇u, ∇v) + ε(u, v) = ⟨κ − κ_ref, v⟩ and the error is ‖u‖_{H¹}.
pub fn curvature_errors(
    kappa: &CurvatureField,
    reference: impl Fn(usize, [f64; 2], Vec3) -> f64,
    deformation: &DeformationState,
    aux_order: usize,
    epsilon: f64,
) -> Result<CurvatureErrors> {
    if aux_order <= kappa.space.order() {
        return Err(Error::InvalidArgument(format!(
            "auxiliary order {aux_order} must exceed the curvature order {}",
            kappa.space.order()
        )));
    }
    let aux = ScalarSpace::new(Arc::clone(kappa.space.mesh()), aux_order)?;
    let degree = (2 * aux_order + 2).min(crate::fem::quadrature::MAX_DEGREE);
    let rule = quadrature(Domain::Triangle, degree)?;
    let mut l2 = 0.0;
    let mut load = vec![0.0; aux.ndof()];
    for t in 0..aux.mesh().n_triangles() {
        let map = deformation.element(t);
        let dofs = aux.element_dofs(t);
        for (xi, w) in rule.iter() {
            let p: SurfacePoint = map.eval(xi)?;
            let w = w * p.area_density;
            let diff = kappa.eval_ref(t, xi).0 - reference(t, xi, p.x);
            l2 += diff * diff * w;
            let b = eval_basis(aux_order, xi);
            for (i, &d) in dofs.as_slice().iter().enumerate() {
                load[d] += diff * b.values[i] * w;
            }
        }
    }
    let a = assemble_scalar_h1(&aux, epsilon, deformation)?;
    let u = solve_spd(&a, &load, 1e-12)?;
    // ‖u‖²_{H¹} = (∇u,∇u) + (u,u); with ε = 1 this equals ⟨f, u⟩.
    let au = a.mul_vec(&u);
    let energy: f64 = u.iter().zip(&au).map(|(x, y)| x * y).sum();
    let mass = assemble_mass(&aux, deformation)?;
    let mu = mass.mul_vec(&u);
    let l2u: f64 = u.iter().zip(&mu).map(|(x, y)| x * y).sum();
    let h1_sq = energy + (1.0 - epsilon) * l2u;
    Ok(CurvatureErrors {
        l2: l2.sqrt(),
        h_minus1: h1_sq.max(0.0).sqrt(),
    })
}
