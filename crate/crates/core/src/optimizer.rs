//! Penalized cost, Riesz shape gradients and the line-search descent loop.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::curvature::{bending_energy, CurvatureField, LiftOptions, LiftSystem, PhysicalParams};
use crate::fem::sparse::dot;
use crate::fem::{
    assemble_divergence, assemble_h1_metric, assemble_scalar_h1, solve_saddle_block3, solve_spd, CsrMatrix, ScalarSpace,
    VectorSpace, DEFAULT_METRIC_EPSILON,
};
use crate::mesh::{measure, DeformationState, Measures, SurfaceMesh};
use crate::shape_derivative::{shape_derivative_total, ConstraintParams, DerivativeForm, Normalization, ShapeGradientLoad};
use crate::{Error, Result, Vec3};

const GRADIENT_REL_TOL: f64 = 1e-10;

/// Reduced volume V / ((4π/3)(A/4π)^{3/2}); 1 for a round sphere.
pub fn reduced_volume(area: f64, volume: f64) -> f64 {
    volume / (4.0 * PI / 3.0 * (area / (4.0 * PI)).powf(1.5))
}

/// Cost value and its parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostBreakdown {
    pub total: f64,
    pub bending: f64,
    pub e_star: f64,
    pub area_penalty: f64,
    pub volume_penalty: f64,
    pub local_penalty: f64,
    pub area: f64,
    pub volume: f64,
    pub reduced_volume: f64,
}

/// J = W + penalty terms for a κ solved on `deformation`.
pub fn cost(
    deformation: &DeformationState,
    kappa: &CurvatureField,
    params: &PhysicalParams,
    constraints: &ConstraintParams,
) -> Result<(CostBreakdown, Measures)> {
    let m = measure(deformation)?;
    let energy = bending_energy(kappa, deformation, params)?;
    let [area_penalty, volume_penalty, local_penalty] = constraints.penalties(&m);
    let breakdown = CostBreakdown {
        total: energy.w + area_penalty + volume_penalty + local_penalty,
        bending: energy.w,
        e_star: energy.e_star,
        area_penalty,
        volume_penalty,
        local_penalty,
        area: m.total_area,
        volume: m.enclosed_volume,
        reduced_volume: reduced_volume(m.total_area, m.enclosed_volume),
    };
    Ok((breakdown, m))
}

/// Solves (X, W)_H = D𝒥(W) for all W in the vector space with the given metric.
pub fn riesz_gradient(load: &ShapeGradientLoad, metric: &CsrMatrix) -> Result<Vec<f64>> {
    if metric.n_rows() != load.values.len() {
        return Err(Error::InvalidArgument("metric and load sizes differ".into()));
    }
    solve_spd(metric, &load.values, GRADIENT_REL_TOL)
}

/// Riesz representative constrained by (q, Div^S X) = 0 for every pressure test function.
///
/// `scalar_metric` is one scalar block of the H¹ metric; `divergence` is B_qj = ∫ ψ_q Div^S φ_j.
/// Returns (X, pressure).
pub fn riesz_gradient_div_free(
    load: &ShapeGradientLoad,
    scalar_metric: &CsrMatrix,
    divergence: &CsrMatrix,
) -> Result<(Vec<f64>, Vec<f64>)> {
    solve_saddle_block3(scalar_metric, divergence, &load.values)
}

/// How the descent direction is represented.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientMode {
    H1,
    /// Divergence-free H¹ gradient with Taylor–Hood P2/P1 (needs order 2).
    Stokes,
}

/// Penalty weights; targets default to the measures of the initial geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltySettings {
    pub c_area: f64,
    pub c_volume: f64,
    pub c_local: f64,
    pub area_target: Option<f64>,
    pub volume_target: Option<f64>,
    pub normalization: Normalization,
}

impl Default for PenaltySettings {
    fn default() -> Self {
        Self {
            c_area: 2.0,
            c_volume: 1.0,
            c_local: 1.0,
            area_target: None,
            volume_target: None,
            normalization: Normalization::Relative,
        }
    }
}

impl PenaltySettings {
    /// Resolves targets against the initial measures; per-element targets are always the initial areas.
    pub fn resolve(&self, initial: &Measures) -> ConstraintParams {
        ConstraintParams {
            c_area: self.c_area,
            c_volume: self.c_volume,
            c_local: self.c_local,
            area_target: self.area_target.unwrap_or(initial.total_area),
            volume_target: self.volume_target.unwrap_or(initial.enclosed_volume),
            element_area_targets: initial.element_areas.clone(),
            normalization: self.normalization,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub params: PhysicalParams,
    pub penalties: PenaltySettings,
    pub alpha_init: f64,
    pub alpha_max: f64,
    pub alpha_factor: f64,
    pub max_iter: usize,
    /// Stop when ‖X‖_H < tol_grad · ‖X₀‖_H.
    pub tol_grad: f64,
    /// Stop when ‖X‖_H < tol_grad_abs.
    pub tol_grad_abs: f64,
    pub tol_step: f64,
    pub tol_cost: f64,
    /// Stop when J decreased by less than tol_stall · |J| over the last `stall_window` steps (0 disables).
    pub stall_window: usize,
    pub tol_stall: f64,
    /// 0 compares against the current cost; M > 0 against the max of the last M accepted costs.
    pub nonmonotone_window: usize,
    pub gradient_mode: GradientMode,
    pub metric_epsilon: f64,
    /// Compare H₀ against −½κ instead of ½κ.
    pub spontaneous_sign_flip: bool,
    pub form: DerivativeForm,
    pub lift: LiftOptions,
    pub continuation_rounds: usize,
    pub continuation_factor: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            params: PhysicalParams {
                bending_modulus: 0.01,
                spontaneous_curvature: 0.0,
            },
            penalties: PenaltySettings::default(),
            alpha_init: 0.025,
            alpha_max: 0.1,
            alpha_factor: 1.0,
            max_iter: 100_000,
            tol_grad: 1e-12,
            tol_grad_abs: 1e-7,
            tol_step: 1e-11,
            tol_cost: 1e-10,
            stall_window: 0,
            tol_stall: 1e-4,
            nonmonotone_window: 0,
            gradient_mode: GradientMode::H1,
            metric_epsilon: DEFAULT_METRIC_EPSILON,
            spontaneous_sign_flip: false,
            form: DerivativeForm::Full,
            lift: LiftOptions::default(),
            continuation_rounds: 1,
            continuation_factor: 10.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        PhysicalParams::new(self.params.bending_modulus, self.params.spontaneous_curvature)?;
        if !(self.alpha_init > 0.0 && self.alpha_init <= self.alpha_max && self.alpha_max.is_finite()) {
            return bad(format!("need 0 < alpha ({}) <= alpha_max ({})", self.alpha_init, self.alpha_max));
        }
        if !(self.alpha_factor >= 1.0 && self.alpha_factor.is_finite()) {
            return bad(format!("alpha_factor must be >= 1, got {}", self.alpha_factor));
        }
        for (name, v) in [
            ("tol_grad", self.tol_grad),
            ("tol_grad_abs", self.tol_grad_abs),
            ("tol_step", self.tol_step),
            ("tol_cost", self.tol_cost),
            ("tol_stall", self.tol_stall),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        let p = &self.penalties;
        if [p.c_area, p.c_volume, p.c_local].iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return bad("penalty weights must be non-negative".into());
        }
        if p.area_target.is_some_and(|a| !(a > 0.0)) || p.volume_target.is_some_and(|v| !(v > 0.0)) {
            return bad("area and volume targets must be positive".into());
        }
        if !(self.metric_epsilon > 0.0) {
            return bad(format!("metric epsilon must be positive, got {}", self.metric_epsilon));
        }
        if self.continuation_rounds == 0 || !(self.continuation_factor > 0.0) {
            return bad("continuation needs at least one round and a positive factor".into());
        }
        Ok(())
    }

    /// Physical parameters as used in the energy, after the optional sign flip of H₀.
    pub fn effective_params(&self) -> PhysicalParams {
        let mut p = self.params;
        if self.spontaneous_sign_flip {
            p.spontaneous_curvature = -p.spontaneous_curvature;
        }
        p
    }
}

/// Cost, κ and measures at one geometry.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub kappa: CurvatureField,
    pub measures: Measures,
    pub cost: CostBreakdown,
    /// Mass matrix of the κ space on this geometry.
    pub mass: CsrMatrix,
}

/// Everything needed to evaluate and differentiate J on one reference mesh.
pub struct Problem {
    pub space: ScalarSpace,
    pub params: PhysicalParams,
    pub constraints: ConstraintParams,
    pub lift: LiftOptions,
    pub form: DerivativeForm,
    pub gradient_mode: GradientMode,
    pub metric_epsilon: f64,
    pressure: Option<ScalarSpace>,
}

impl Problem {
    pub fn new(initial: &DeformationState, config: &OptimizerConfig) -> Result<Self> {
        config.validate()?;
        let order = initial.space().order();
        if config.gradient_mode == GradientMode::Stokes && order != 2 {
            return Err(Error::InvalidArgument(
                "the divergence-free gradient needs quadratic deformation fields (order 2)".into(),
            ));
        }
        let mesh = initial.mesh().clone();
        let pressure = match config.gradient_mode {
            GradientMode::Stokes => Some(ScalarSpace::new(mesh.clone(), 1)?),
            GradientMode::H1 => None,
        };
        Ok(Self {
            space: ScalarSpace::new(mesh, order)?,
            params: config.effective_params(),
            constraints: config.penalties.resolve(&measure(initial)?),
            lift: config.lift,
            form: config.form,
            gradient_mode: config.gradient_mode,
            metric_epsilon: config.metric_epsilon,
            pressure,
        })
    }

    /// Solves κ on `deformation` and evaluates J.
    pub fn evaluate(&self, deformation: &DeformationState) -> Result<Evaluation> {
        let system = LiftSystem::new(&self.space, deformation, self.lift)?;
        let kappa = system.solve_state()?;
        let (cost, measures) = cost(deformation, &kappa, &self.params, &self.constraints)?;
        Ok(Evaluation {
            kappa,
            measures,
            cost,
            mass: system.into_mass(),
        })
    }

    /// Shape-derivative load at an evaluated geometry (solves the adjoint).
    pub fn load(&self, deformation: &DeformationState, eval: &Evaluation) -> Result<ShapeGradientLoad> {
        let sigma = LiftSystem::with_mass(&self.space, deformation, eval.mass.clone(), self.lift)
            .solve_adjoint(&eval.kappa, &self.params)?;
        shape_derivative_total(
            &eval.kappa,
            &sigma,
            deformation,
            &self.params,
            &self.constraints,
            &eval.measures,
            self.form,
            &self.lift,
        )
    }

    /// Riesz gradient of a load.
    pub fn gradient(&self, deformation: &DeformationState, load: &ShapeGradientLoad) -> Result<Gradient> {
        let (x, total_divergence) = match &self.pressure {
            None => (
                riesz_gradient(load, &assemble_h1_metric(deformation.space(), self.metric_epsilon, deformation)?)?,
                None,
            ),
            Some(pressure) => {
                let k = assemble_scalar_h1(deformation.space().scalar(), self.metric_epsilon, deformation)?;
                let b = assemble_divergence(pressure, deformation.space(), deformation)?;
                let x = riesz_gradient_div_free(load, &k, &b)?.0;
                // The P1 hat functions sum to one, so the row sum of B X is ∫ Div^S X.
                let total = b.mul_vec(&x).iter().sum::<f64>();
                (x, Some(total))
            }
        };
        let norm = dot(&load.values, &x).max(0.0).sqrt();
        Ok(Gradient {
            x,
            norm,
            total_divergence,
        })
    }
}

/// Riesz representative X, its norm ‖X‖_H = √(D𝒥(X)) and, in Stokes mode, ∫ Div^S X.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub x: Vec<f64>,
    pub norm: f64,
    pub total_divergence: Option<f64>,
}

/// One logged state (the initial geometry or the result of an accepted step).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunRow {
    pub iter: usize,
    pub cost: CostBreakdown,
    pub gradient_norm: f64,
    /// Step size that produced this state (the initial α for row 0 of a round).
    pub alpha: f64,
    /// Rejected candidates since the previous accepted state.
    pub rejects: usize,
    pub round: usize,
    /// ∫ Div^S X of the gradient at this state (Stokes mode only).
    pub total_divergence: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    MaxIterations,
    GradientTolerance,
    StepTolerance,
    CostTolerance,
    Stalled,
}

impl Termination {
    pub fn converged(self) -> bool {
        self != Termination::MaxIterations
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLog {
    pub rows: Vec<RunRow>,
}

impl RunLog {
    pub const CSV_HEADER: &'static str = "iter,J,W,Estar,A,V,v,gradnorm,alpha,rejects";

    /// Checks the acceptance rule between consecutive rows of each round.
    pub fn check_acceptance_rule(&self, window: usize) -> std::result::Result<(), String> {
        let mut history: Vec<f64> = Vec::new();
        let mut round = usize::MAX;
        for row in &self.rows {
            if row.round != round {
                round = row.round;
                history.clear();
            } else {
                let reference = acceptance_reference(&history, window);
                if row.cost.total > reference {
                    return Err(format!(
                        "iteration {}: accepted J = {} exceeds reference {}",
                        row.iter, row.cost.total, reference
                    ));
                }
            }
            history.push(row.cost.total);
        }
        Ok(())
    }
}

fn acceptance_reference(history: &[f64], window: usize) -> f64 {
    let last = *history.last().expect("history holds the current cost");
    if window == 0 {
        last
    } else {
        history.iter().rev().take(window).cloned().fold(last, f64::max)
    }
}

/// Outcome of one line search.
pub struct LineSearchOutcome {
    pub accepted: Option<(DeformationState, Evaluation)>,
    pub alpha_used: f64,
    pub next_alpha: f64,
    pub rejects: usize,
}

/// Halves α from `alpha` until d − αX satisfies J ≤ reference or α drops below `tol_step`.
pub fn line_search_step(
    problem: &Problem,
    current: &DeformationState,
    direction: &[f64],
    alpha: f64,
    reference: f64,
    config: &OptimizerConfig,
) -> LineSearchOutcome {
    let mut alpha = alpha;
    let mut rejects = 0;
    while alpha >= config.tol_step {
        let candidate = current.displaced(direction, -alpha);
        match problem.evaluate(&candidate) {
            Ok(eval) if eval.cost.total <= reference => {
                return LineSearchOutcome {
                    accepted: Some((candidate, eval)),
                    alpha_used: alpha,
                    next_alpha: (alpha * config.alpha_factor).min(config.alpha_max),
                    rejects,
                };
            }
            Ok(_) => {}
            Err(e) if e.is_degenerate() => log::debug!("candidate at alpha {alpha:e} degenerate: {e}"),
            Err(e) => log::debug!("candidate at alpha {alpha:e} failed: {e}"),
        }
        rejects += 1;
        alpha *= 0.5;
    }
    LineSearchOutcome {
        accepted: None,
        alpha_used: alpha,
        next_alpha: alpha,
        rejects,
    }
}

/// Final state of a run.
pub struct OptimizeResult {
    pub log: RunLog,
    pub deformation: DeformationState,
    pub kappa: CurvatureField,
    pub termination: Termination,
}

/// Runs the descent loop from `initial`; `observer` sees every logged state.
pub fn optimize(
    initial: DeformationState,
    config: &OptimizerConfig,
    mut observer: impl FnMut(&RunRow, &DeformationState, &CurvatureField),
) -> Result<OptimizeResult> {
    let mut problem = Problem::new(&initial, config)?;
    let mut log = RunLog::default();
    let mut current = initial;
    let mut eval = problem
        .evaluate(&current)
        .map_err(|e| annotate(e, 0))?;
    let mut iter = 0;
    let mut termination = Termination::MaxIterations;
    for round in 0..config.continuation_rounds {
        if round > 0 {
            problem.constraints.c_area *= config.continuation_factor;
            problem.constraints.c_volume *= config.continuation_factor;
            problem.constraints.c_local *= config.continuation_factor;
            eval = problem.evaluate(&current).map_err(|e| annotate(e, iter))?;
            log::info!("continuation round {round}: penalty weights scaled by {}", config.continuation_factor);
        }
        let mut alpha = config.alpha_init;
        let mut alpha_used = alpha;
        let mut rejects = 0;
        let mut initial_norm = None;
        let mut history = Vec::new();
        let mut round_steps = 0;
        termination = loop {
            let load = problem.load(&current, &eval).map_err(|e| annotate(e, iter))?;
            let gradient = problem.gradient(&current, &load).map_err(|e| annotate(e, iter))?;
            let norm = gradient.norm;
            let g0 = *initial_norm.get_or_insert(norm);
            let row = RunRow {
                iter,
                cost: eval.cost,
                gradient_norm: norm,
                alpha: alpha_used,
                rejects,
                round,
                total_divergence: gradient.total_divergence,
            };
            observer(&row, &current, &eval.kappa);
            log.rows.push(row);
            history.push(eval.cost.total);

            if norm < config.tol_grad * g0 || norm < config.tol_grad_abs {
                break Termination::GradientTolerance;
            }
            if eval.cost.total < config.tol_cost {
                break Termination::CostTolerance;
            }
            if config.stall_window > 0 && history.len() > config.stall_window {
                let old = history[history.len() - 1 - config.stall_window];
                if old - eval.cost.total < config.tol_stall * eval.cost.total.abs() {
                    break Termination::Stalled;
                }
            }
            if round_steps >= config.max_iter {
                break Termination::MaxIterations;
            }
            let reference = acceptance_reference(&history, config.nonmonotone_window);
            let outcome = line_search_step(&problem, &current, &gradient.x, alpha, reference, config);
            rejects = outcome.rejects;
            match outcome.accepted {
                Some((next, next_eval)) => {
                    current = next;
                    eval = next_eval;
                    alpha_used = outcome.alpha_used;
                    alpha = outcome.next_alpha;
                    iter += 1;
                    round_steps += 1;
                }
                None => break Termination::StepTolerance,
            }
        };
        log::info!("round {round} finished after {round_steps} steps: {termination:?}");
    }
    Ok(OptimizeResult {
        log,
        deformation: current,
        kappa: eval.kappa,
        termination,
    })
}

fn annotate(e: Error, iter: usize) -> Error {
    match e {
        Error::Degenerate(m) => Error::Degenerate(format!("iteration {iter}: {m}")),
        other => other,
    }
}

/// Ratio of the largest to the smallest principal axis of the area-weighted point covariance.
pub fn principal_axis_ratio(deformation: &DeformationState) -> Result<f64> {
    let mesh = deformation.mesh();
    let rule = crate::fem::quadrature(crate::fem::Domain::Triangle, 4)?;
    let mut area = 0.0;
    let mut first = Vec3::zeros();
    let mut second = crate::Mat3::zeros();
    for t in 0..mesh.n_triangles() {
        let map = deformation.element(t);
        for (xi, w) in rule.iter() {
            let p = map.eval(xi)?;
            let w = w * p.area_density;
            area += w;
            first += w * p.x;
            second += w * p.x * p.x.transpose();
        }
    }
    let mean = first / area;
    let cov = second / area - mean * mean.transpose();
    let eig = cov.symmetric_eigenvalues();
    let (max, min) = (eig.max(), eig.min());
    if !(min > 0.0) {
        return Err(Error::Degenerate("flat point cloud has no principal-axis ratio".into()));
    }
    Ok((max / min).sqrt())
}

/// Area of 4π and volume target v·4π/3, starting from a mesh rescaled to that area.
pub struct SweepStart {
    pub deformation: DeformationState,
    pub area_target: f64,
    pub volume_target: f64,
}

/// Rescales `mesh` to area 4π and returns the start state for reduced volume `v`.
pub fn sweep_start(mesh: SurfaceMesh, order: usize, v: f64) -> Result<SweepStart> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::InvalidArgument(format!("reduced volume must lie in (0, 1], got {v}")));
    }
    let probe = DeformationState::zero(VectorSpace::new(Arc::new(mesh.clone()), order)?);
    let area = measure(&probe)?.total_area;
    let scaled = Arc::new(mesh.scaled((4.0 * PI / area).sqrt()));
    Ok(SweepStart {
        deformation: DeformationState::zero(VectorSpace::new(scaled, order)?),
        area_target: 4.0 * PI,
        volume_target: v * 4.0 * PI / 3.0,
    })
}
