//! First shape derivative of the penalized bending energy as a linear
//! functional on the vector Lagrange space, plus a finite-difference validator.
//!
//! For a test field X the derivative is the sum of
//! - the equation part, obtained from the curvature lift with κ and the adjoint σ held fixed,
//! - the cost part: Div^S X times the energy density,
//! - the penalty parts for total area, enclosed volume and element areas.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curvature::{clamped_arcsin, for_each_edge_point, AveragedNormals, CurvatureField, LiftOptions, MultiplierField, PhysicalParams};
use crate::fem::quadrature::{quadrature, Domain};
use crate::fem::space::eval_basis;
use crate::mesh::{edge_reference, DeformationState, Measures};
use crate::{Error, Result, Vec3};

static DENOMINATOR_FLOORS: AtomicUsize = AtomicUsize::new(0);

/// Number of jump-term denominators so far that were floored at 1e−8.
pub fn denominator_floor_count() -> usize {
    DENOMINATOR_FLOORS.load(Ordering::Relaxed)
}

/// How penalty residuals are scaled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// c_A (A − A₀)², c_V (V − V₀)², c_loc (|T| − |T₀|)².
    Absolute,
    /// Each squared residual divided by its target: (A − A₀)²/A₀ and so on.
    Relative,
}

/// Penalty weights and targets.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintParams {
    pub c_area: f64,
    pub c_volume: f64,
    pub c_local: f64,
    pub area_target: f64,
    pub volume_target: f64,
    pub element_area_targets: Vec<f64>,
    pub normalization: Normalization,
}

impl ConstraintParams {
    /// No penalties at all.
    pub fn none(measures: &Measures) -> Self {
        Self {
            c_area: 0.0,
            c_volume: 0.0,
            c_local: 0.0,
            area_target: measures.total_area,
            volume_target: measures.enclosed_volume,
            element_area_targets: measures.element_areas.clone(),
            normalization: Normalization::Relative,
        }
    }

    pub fn validate(&self, n_triangles: usize) -> Result<()> {
        if [self.c_area, self.c_volume, self.c_local].iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::InvalidArgument("penalty weights must be non-negative".into()));
        }
        if !(self.area_target > 0.0 && self.volume_target > 0.0) {
            return Err(Error::InvalidArgument("area and volume targets must be positive".into()));
        }
        if self.element_area_targets.len() != n_triangles || self.element_area_targets.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "need {n_triangles} positive element area targets, got {}",
                self.element_area_targets.len()
            )));
        }
        Ok(())
    }

    pub fn area_scale(&self) -> f64 {
        match self.normalization {
            Normalization::Absolute => 1.0,
            Normalization::Relative => 1.0 / self.area_target,
        }
    }

    pub fn volume_scale(&self) -> f64 {
        match self.normalization {
            Normalization::Absolute => 1.0,
            Normalization::Relative => 1.0 / self.volume_target,
        }
    }

    pub fn local_scale(&self, t: usize) -> f64 {
        match self.normalization {
            Normalization::Absolute => 1.0,
            Normalization::Relative => 1.0 / self.element_area_targets[t],
        }
    }

    /// Penalty contributions (area, volume, local) for the given measures.
    pub fn penalties(&self, m: &Measures) -> [f64; 3] {
        let area = self.c_area * self.area_scale() * (m.total_area - self.area_target).powi(2);
        let volume = self.c_volume * self.volume_scale() * (m.enclosed_volume - self.volume_target).powi(2);
        let local = if self.c_local == 0.0 {
            0.0
        } else {
            m.element_areas
                .iter()
                .enumerate()
                .map(|(t, a)| self.c_local * self.local_scale(t) * (a - self.element_area_targets[t]).powi(2))
                .sum()
        };
        [area, volume, local]
    }
}

/// Full derivative, or the lowest-order form valid on affine k = 1 geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivativeForm {
    Full,
    LowestOrder,
}

/// Coefficients of X ↦ D𝒥(X) over the vector space (component-major).
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeGradientLoad {
    pub values: Vec<f64>,
    pub includes_equation: bool,
    pub includes_cost: bool,
    pub includes_constraints: bool,
}

impl ShapeGradientLoad {
    fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            includes_equation: false,
            includes_cost: false,
            includes_constraints: false,
        }
    }

    /// D𝒥(X) for a field X given by its coefficients.
    pub fn apply(&self, x: &[f64]) -> f64 {
        self.values.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn add(&mut self, other: &ShapeGradientLoad) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        self.includes_equation |= other.includes_equation;
        self.includes_cost |= other.includes_cost;
        self.includes_constraints |= other.includes_constraints;
    }
}

fn check_fields(kappa: &CurvatureField, deformation: &DeformationState) -> Result<()> {
    if !std::sync::Arc::ptr_eq(kappa.space.mesh(), deformation.mesh()) {
        return Err(Error::InvalidArgument("fields and deformation live on different meshes".into()));
    }
    Ok(())
}

/// Derivative of the curvature-lift constraint ∫κσ + Σ_T ∫ tr(∂^S ν)σ + Σ_T ∫_{∂T} arcsin(μ·⟨ν⟩)σ.
pub fn assemble_equation_diff(
    kappa: &CurvatureField,
    sigma: &MultiplierField,
    deformation: &DeformationState,
    form: DerivativeForm,
    options: &LiftOptions,
) -> Result<ShapeGradientLoad> {
    check_fields(kappa, deformation)?;
    if !sigma.space.same_as(&kappa.space) {
        return Err(Error::InvalidArgument("κ and σ must share a space".into()));
    }
    if form == DerivativeForm::LowestOrder && !deformation.is_affine() {
        return Err(Error::InvalidArgument(
            "the lowest-order derivative requires affine geometry and k = 1".into(),
        ));
    }
    let full = form == DerivativeForm::Full;
    let vspace = deformation.space().scalar().clone();
    let n = vspace.ndof();
    let mesh = deformation.mesh().clone();
    let mut load = ShapeGradientLoad::zeros(3 * n);
    load.includes_equation = true;
    let degree = deformation.quadrature_degree(kappa.space.order());

    let rule = quadrature(Domain::Triangle, degree)?;
    for t in 0..mesh.n_triangles() {
        let map = deformation.element(t);
        let dofs = vspace.element_dofs(t);
        for (xi, w) in rule.iter() {
            let p = map.eval(xi)?;
            let w = w * p.area_density;
            let (k, _) = kappa.eval_ref(t, xi);
            let (s, sg) = sigma.eval_ref(t, xi);
            let grad_s = p.gradient(sg);
            let tr = p.normal_divergence();
            let b = eval_basis(vspace.order(), xi);
            for (i, &d) in dofs.as_slice().iter().enumerate() {
                let g = p.gradient(b.grads[i]);
                let sg_dot = p.shape_operator * g;
                for c in 0..3 {
                    let mut v = g[c] * s * k;
                    if full {
                        v += g[c] * tr * s + p.normal[c] * g.dot(&grad_s) - sg_dot[c] * s;
                    }
                    load.values[c * n + d] += w * v;
                }
            }
        }
    }

    let normals = AveragedNormals::compute(deformation, kappa.space.order(), options.tangent_projection)?;
    for_each_edge_point(deformation, &normals, degree, |e, s, l, r, nav, w| {
        let edge = mesh.edges()[e];
        for (t, local, param, point) in [
            (edge.left, edge.left_local, s, l),
            (edge.right, edge.right_local, 1.0 - s, r),
        ] {
            let f = point.frame;
            let x = f.mu.dot(&nav);
            if x.abs() >= 1.0 - 1e-10 {
                return Err(Error::Degenerate(format!(
                    "edge {e}: co-normal nearly parallel to the averaged normal (μ·⟨ν⟩ = {x})"
                )));
            }
            let mut root = (1.0 - x * x).sqrt();
            if root < 1e-8 {
                if DENOMINATOR_FLOORS.fetch_add(1, Ordering::Relaxed) == 0 {
                    log::warn!("jump denominator {root:e} floored at 1e-8 on edge {e}");
                }
                root = 1e-8;
            }
            let angle = clamped_arcsin(x);
            let xi = edge_reference(local, param).0;
            let (sv, _) = sigma.eval_ref(t, xi);
            let weight = w * point.length_density * sv;
            let b = eval_basis(vspace.order(), xi);
            for (i, &d) in vspace.element_dofs(t).as_slice().iter().enumerate() {
                let g = point.surface.gradient(b.grads[i]);
                let (g_mu, g_tau, g_nav) = (g.dot(&f.mu), g.dot(&f.tau), g.dot(&nav));
                for c in 0..3 {
                    let mut v = f.tau[c] * g_tau * angle + (nav[c] * g_mu - f.mu[c] * g_nav) / root;
                    if full {
                        v -= f.nu[c] * g_mu;
                    }
                    load.values[c * n + d] += weight * v;
                }
            }
        }
        Ok(())
    })?;
    Ok(load)
}

/// Derivative of the bending energy (κ held fixed) and of the penalty terms.
pub fn assemble_cost_diff(
    kappa: &CurvatureField,
    deformation: &DeformationState,
    params: &PhysicalParams,
    constraints: &ConstraintParams,
    measures: &Measures,
) -> Result<ShapeGradientLoad> {
    check_fields(kappa, deformation)?;
    let mesh = deformation.mesh().clone();
    constraints.validate(mesh.n_triangles())?;
    let vspace = deformation.space().scalar().clone();
    let n = vspace.ndof();
    let mut load = ShapeGradientLoad::zeros(3 * n);
    load.includes_cost = true;
    load.includes_constraints = true;
    let area_factor = 2.0 * constraints.c_area * constraints.area_scale() * (measures.total_area - constraints.area_target);
    let volume_factor =
        2.0 * constraints.c_volume * constraints.volume_scale() * (measures.enclosed_volume - constraints.volume_target);
    let degree = deformation.quadrature_degree(kappa.space.order());
    let rule = quadrature(Domain::Triangle, degree)?;
    for t in 0..mesh.n_triangles() {
        let map = deformation.element(t);
        let dofs = vspace.element_dofs(t);
        let local_factor = 2.0
            * constraints.c_local
            * constraints.local_scale(t)
            * (measures.element_areas[t] - constraints.element_area_targets[t]);
        for (xi, w) in rule.iter() {
            let p = map.eval(xi)?;
            let w = w * p.area_density;
            let (k, _) = kappa.eval_ref(t, xi);
            let div_factor = params.energy_density(k) + area_factor + local_factor;
            let b = eval_basis(vspace.order(), xi);
            for (i, &d) in dofs.as_slice().iter().enumerate() {
                let g = p.gradient(b.grads[i]);
                for c in 0..3 {
                    load.values[c * n + d] += w * (div_factor * g[c] + volume_factor * b.values[i] * p.normal[c]);
                }
            }
        }
    }
    Ok(load)
}

/// Sum of the equation and cost parts.
#[allow(clippy::too_many_arguments)]
pub fn shape_derivative_total(
    kappa: &CurvatureField,
    sigma: &MultiplierField,
    deformation: &DeformationState,
    params: &PhysicalParams,
    constraints: &ConstraintParams,
    measures: &Measures,
    form: DerivativeForm,
    options: &LiftOptions,
) -> Result<ShapeGradientLoad> {
    let mut load = assemble_equation_diff(kappa, sigma, deformation, form, options)?;
    load.add(&assemble_cost_diff(kappa, deformation, params, constraints, measures)?);
    Ok(load)
}

/// Deformed position of every vector-space node.
fn deformed_nodes(deformation: &DeformationState) -> Vec<Vec3> {
    let space = deformation.space();
    let n = space.scalar().ndof();
    let d = deformation.displacement();
    crate::mesh::dof_reference_positions(space)
        .into_iter()
        .enumerate()
        .map(|(i, x)| x + Vec3::new(d[i], d[n + i], d[2 * n + i]))
        .collect()
}

/// Interpolates a vector field given at deformed node positions.
pub fn interpolate_field(deformation: &DeformationState, f: impl Fn(Vec3) -> Vec3) -> Vec<f64> {
    let nodes = deformed_nodes(deformation);
    let n = nodes.len();
    let mut out = vec![0.0; 3 * n];
    for (i, &x) in nodes.iter().enumerate() {
        let v = f(x);
        for c in 0..3 {
            out[c * n + i] = v[c];
        }
    }
    out
}

/// The six infinitesimal rigid motions (three translations, three rotations).
pub fn rigid_motion_fields(deformation: &DeformationState) -> Vec<Vec<f64>> {
    let mut fields = Vec::with_capacity(6);
    for axis in [Vec3::x(), Vec3::y(), Vec3::z()] {
        fields.push(interpolate_field(deformation, |_| axis));
    }
    for axis in [Vec3::x(), Vec3::y(), Vec3::z()] {
        fields.push(interpolate_field(deformation, |x| axis.cross(&x)));
    }
    fields
}

/// Smooth pseudo-random field: a few low-frequency sinusoids per component.
pub fn smooth_random_probe(deformation: &DeformationState, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(Vec3, Vec3, f64)> = (0..4)
        .map(|_| {
            let amplitude = Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let wave = Vec3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 3.0;
            (amplitude, wave, rng.random::<f64>() * std::f64::consts::TAU)
        })
        .collect();
    interpolate_field(deformation, |x| {
        modes
            .iter()
            .map(|(a, k, phase)| a * (k.dot(&x) + phase).sin())
            .fold(Vec3::zeros(), |s, v| s + v)
    })
}

/// One line of a finite-difference ladder.
#[derive(Clone, Debug, PartialEq)]
pub struct FdRow {
    pub t: f64,
    pub fd_value: f64,
    pub analytic_value: f64,
    pub abs_err: f64,
    /// log10(err_prev / err) / log10(t_prev / t) against the previous evaluated entry.
    pub observed_order: Option<f64>,
    /// Set when a perturbed geometry was degenerate; the other fields are NaN.
    pub skipped: Option<String>,
}

/// Compares the analytic derivative with central differences (J(+t) − J(−t)) / 2t.
pub fn finite_difference_check(
    load: &ShapeGradientLoad,
    evaluate: impl Fn(&DeformationState) -> Result<f64>,
    base: &DeformationState,
    probe: &[f64],
    ladder: &[f64],
) -> Result<Vec<FdRow>> {
    if ladder.windows(2).any(|w| w[1] >= w[0]) || ladder.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidArgument("step ladder must be positive and decreasing".into()));
    }
    let analytic = load.apply(probe);
    let mut rows: Vec<FdRow> = Vec::with_capacity(ladder.len());
    let mut previous: Option<(f64, f64)> = None;
    for &t in ladder {
        let plus = evaluate(&base.displaced(probe, t));
        let minus = evaluate(&base.displaced(probe, -t));
        match (plus, minus) {
            (Ok(jp), Ok(jm)) => {
                let fd = (jp - jm) / (2.0 * t);
                let err = (fd - analytic).abs();
                let observed_order = previous.map(|(tp, ep)| (ep / err).log10() / (tp / t).log10());
                previous = Some((t, err));
                rows.push(FdRow {
                    t,
                    fd_value: fd,
                    analytic_value: analytic,
                    abs_err: err,
                    observed_order,
                    skipped: None,
                });
            }
            (Err(e), _) | (_, Err(e)) if e.is_degenerate() => {
                log::warn!("finite-difference step {t:e} skipped: {e}");
                rows.push(FdRow {
                    t,
                    fd_value: f64::NAN,
                    analytic_value: analytic,
                    abs_err: f64::NAN,
                    observed_order: None,
                    skipped: Some(e.to_string()),
                });
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    Ok(rows)
}
