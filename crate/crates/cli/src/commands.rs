use std::f64::consts::PI;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use helfrich::curvature::{bending_energy, curvature_errors, solve_adjoint, solve_state, PhysicalParams, HMINUS1_EPSILON};
use helfrich::fem::ScalarSpace;
use helfrich::io::{write_obj, write_vtk, CsvLogWriter, RunConfig, ShapeKind};
use helfrich::mesh::{measure, DeformationState};
use helfrich::optimizer::{optimize as run_optimizer, principal_axis_ratio, reduced_volume, sweep_start, OptimizeResult, Problem, Termination};
use helfrich::shape_derivative::{finite_difference_check, smooth_random_probe};
use helfrich::{Error, Result};

use crate::Outcome;

/// Stall window used by `sweep` when the configuration leaves it at 0.
pub const SWEEP_STALL_WINDOW: usize = 1000;

pub const FD_MIN_ORDER: f64 = 1.9;

pub fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim().parse::<f64>().map_err(|_| Error::Config {
                line: None,
                message: format!("--{what}: cannot parse '{s}'"),
            })
        })
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn mesh(config: &RunConfig, output: Option<&PathBuf>) -> Result<Outcome> {
    let mesh = config.geometry.build_mesh()?;
    let path = match output {
        Some(p) => p.clone(),
        None => {
            create_dir(&config.output.directory)?;
            config.output.directory.join("mesh.obj")
        }
    };
    write_obj(&path, &mesh)?;
    println!("vertices = {}", mesh.n_vertices());
    println!("triangles = {}", mesh.n_triangles());
    println!("edges = {}", mesh.n_edges());
    println!("geometry_order = {}", mesh.geometry_order());
    println!("written = {}", path.display());
    Ok(Outcome::Success)
}

/// Energy per unit bending modulus, so the sphere reads 8π whatever `kb` is.
fn unit_params(config: &RunConfig) -> Result<PhysicalParams> {
    PhysicalParams::new(1.0, config.optimizer.effective_params().spontaneous_curvature)
}

pub fn curvature(config: &RunConfig, vtk: Option<&PathBuf>) -> Result<Outcome> {
    let g = &config.geometry;
    let state = g.build_state()?;
    let space = ScalarSpace::new(state.mesh().clone(), g.order)?;
    let lift = config.optimizer.lift;
    let kappa = solve_state(&space, &state, &lift)?;
    let params = unit_params(config)?;
    let energy = bending_energy(&kappa, &state, &params)?;
    let m = measure(&state)?;
    println!("shape = {}", g.shape.name());
    println!("subdivisions = {}", g.subdivisions);
    println!("order = {}", g.order);
    println!("W = {:.12}", energy.w);
    println!("Estar = {:.12}", energy.e_star);
    println!("A = {:.12}", m.total_area);
    println!("V = {:.12}", m.enclosed_volume);
    println!("v = {:.12}", reduced_volume(m.total_area, m.enclosed_volume));
    let shape = g.benchmark_shape();
    let projector = shape.projector();
    if shape.reference_curvature(projector.project(state.mesh().vertices()[0])?).is_some() {
        let reference = |_: usize, _: [f64; 2], x| {
            let p = projector.project(x).unwrap_or(x);
            shape.reference_curvature(p).unwrap_or(f64::NAN)
        };
        let errors = curvature_errors(&kappa, reference, &state, g.order + 1, HMINUS1_EPSILON)?;
        println!("L2_error = {:.6e}", errors.l2);
        println!("Hminus1_error = {:.6e}", errors.h_minus1);
    } else {
        println!("L2_error = n/a");
        println!("Hminus1_error = n/a");
    }
    if let Some(path) = vtk {
        let sigma = solve_adjoint(&space, &state, &kappa, &params, &lift)?;
        write_vtk(path, &state, &kappa, Some(&sigma))?;
    }
    Ok(Outcome::Success)
}

pub fn fdcheck(config: &RunConfig, ladder: &[f64], probe_seed: u64) -> Result<Outcome> {
    let state = config.geometry.build_state()?;
    let optimizer = config.resolved_optimizer(&measure(&state)?);
    let problem = Problem::new(&state, &optimizer)?;
    let eval = problem.evaluate(&state)?;
    let load = problem.load(&state, &eval)?;
    let probe = smooth_random_probe(&state, probe_seed);
    let rows = finite_difference_check(&load, |d| Ok(problem.evaluate(d)?.cost.total), &state, &probe, ladder)?;
    println!("t,fd_value,analytic_value,abs_err,observed_order");
    for r in &rows {
        let order = r.observed_order.map_or(String::new(), |o| format!("{o:.6}"));
        println!("{:e},{:.16e},{:.16e},{:.6e},{order}", r.t, r.fd_value, r.analytic_value, r.abs_err);
    }
    let last = rows.iter().rev().find_map(|r| r.observed_order);
    match last {
        Some(o) if o >= FD_MIN_ORDER => Ok(Outcome::Success),
        Some(o) => {
            eprintln!("observed order {o:.3} is below {FD_MIN_ORDER}");
            Ok(Outcome::NotConverged)
        }
        None => {
            eprintln!("no observed order: the ladder needs at least two evaluated steps");
            Ok(Outcome::NotConverged)
        }
    }
}

/// Runs one optimization writing the config echo, CSV log, snapshots and final geometry to `dir`.
fn run_job(config: &RunConfig, initial: DeformationState, dir: &Path) -> Result<OptimizeResult> {
    create_dir(dir)?;
    let optimizer = config.resolved_optimizer(&measure(&initial)?);
    write_text(&dir.join("config.cfg"), &config.echo())?;
    let mut csv = CsvLogWriter::create(&dir.join(&config.output.log_file))?;
    let interval = config.output.snapshot_interval;
    let params = optimizer.effective_params();
    let mut failure: Option<Error> = None;
    let result = run_optimizer(initial, &optimizer, |row, state, kappa| {
        if failure.is_some() {
            return;
        }
        if row.iter % 100 == 0 {
            log::info!(
                "iter {} J {:.8e} E* {:.6} v {:.6} |g| {:.3e}",
                row.iter,
                row.cost.total,
                row.cost.e_star,
                row.cost.reduced_volume,
                row.gradient_norm
            );
        }
        let mut step = || -> Result<()> {
            csv.append(row)?;
            if interval > 0 && row.iter % interval == 0 {
                let sigma = solve_adjoint(&kappa.space, state, kappa, &params, &optimizer.lift)?;
                write_vtk(&dir.join(format!("snapshot_{:06}.vtk", row.iter)), state, kappa, Some(&sigma))?;
            }
            Ok(())
        };
        failure = step().err();
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    csv.finish()?;
    let sigma = solve_adjoint(&result.kappa.space, &result.deformation, &result.kappa, &params, &optimizer.lift)?;
    write_vtk(&dir.join("final.vtk"), &result.deformation, &result.kappa, Some(&sigma))?;
    write_obj(&dir.join("final.obj"), &result.deformation.deformed_mesh()?)?;
    Ok(result)
}

fn outcome(t: Termination) -> Outcome {
    if t.converged() {
        Outcome::Success
    } else {
        Outcome::NotConverged
    }
}

pub fn optimize(config: &RunConfig) -> Result<Outcome> {
    let initial = config.geometry.build_state()?;
    let result = run_job(config, initial, &config.output.directory)?;
    let last = result.log.rows.last().expect("the log holds the initial state");
    println!("termination = {:?}", result.termination);
    println!("iterations = {}", last.iter);
    println!("J = {:.12e}", last.cost.total);
    println!("W = {:.12e}", last.cost.bending);
    println!("Estar = {:.12}", last.cost.e_star);
    println!("A = {:.12}", last.cost.area);
    println!("V = {:.12}", last.cost.volume);
    println!("v = {:.12}", last.cost.reduced_volume);
    println!("axis_ratio = {:.6}", principal_axis_ratio(&result.deformation)?);
    Ok(outcome(result.termination))
}

pub const SWEEP_HEADER: &str = "v_target,v,Estar,W,A,V,axis_ratio,iterations,termination";

pub fn sweep(config: &RunConfig, volumes: &[f64]) -> Result<Outcome> {
    if !matches!(config.geometry.shape, ShapeKind::Prolate | ShapeKind::Oblate) {
        return Err(Error::Config {
            line: None,
            message: format!("sweep starts from prolate or oblate shapes, not {}", config.geometry.shape.name()),
        });
    }
    let p = &config.optimizer.penalties;
    if p.area_target.is_some() || p.volume_target.is_some() || config.reduced_volume.is_some() {
        return Err(Error::Config {
            line: None,
            message: "sweep sets A0 and the reduced volume itself; leave A0, V0 and reduced_volume on auto".into(),
        });
    }
    if let Some(v) = volumes.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
        return Err(Error::Config {
            line: None,
            message: format!("--volumes: reduced volume {v} outside (0, 1]"),
        });
    }
    let root = &config.output.directory;
    create_dir(root)?;
    let summary_path = root.join("sweep.csv");
    let mut summary = format!("{SWEEP_HEADER}\n");
    let mut all_converged = true;
    for &v in volumes {
        let mut job = config.clone();
        if job.optimizer.stall_window == 0 {
            job.optimizer.stall_window = SWEEP_STALL_WINDOW;
        }
        job.reduced_volume = Some(v);
        job.optimizer.penalties.area_target = Some(4.0 * PI);
        let start = sweep_start(config.geometry.build_mesh()?, config.geometry.order, v)?;
        let dir = root.join(format!("v{v:.4}"));
        job.output.directory = dir.clone();
        log::info!("sweep: v = {v}");
        let result = run_job(&job, start.deformation, &dir)?;
        let last = result.log.rows.last().expect("the log holds the initial state");
        let ratio = principal_axis_ratio(&result.deformation)?;
        all_converged &= result.termination.converged();
        let line = format!(
            "{v:?},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:?}",
            last.cost.reduced_volume,
            last.cost.e_star,
            last.cost.bending,
            last.cost.area,
            last.cost.volume,
            ratio,
            last.iter,
            result.termination
        );
        println!("{line}");
        let _ = std::io::stdout().flush();
        summary.push_str(&line);
        summary.push('\n');
        write_text(&summary_path, &summary)?;
    }
    Ok(if all_converged { Outcome::Success } else { Outcome::NotConverged })
}
