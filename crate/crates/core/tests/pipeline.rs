use std::f64::consts::PI;
use std::sync::Arc;

use helfrich::curvature::{curvature_errors, solve_state, LiftOptions, PhysicalParams, HMINUS1_EPSILON};
use helfrich::fem::{ScalarSpace, VectorSpace};
use helfrich::io::{parse_config_str, read_obj, write_csv_log, write_obj, write_vtk};
use helfrich::mesh::{curve_to_quadratic, generate_icosphere, measure, DeformationState, SphereProjector};
use helfrich::optimizer::{optimize, OptimizerConfig, Problem};

fn gradient_norm_at_rest(subdivisions: usize, order: usize) -> f64 {
    let mut mesh = generate_icosphere(subdivisions, 1.0).unwrap();
    if order == 2 {
        mesh = curve_to_quadratic(&mesh, &SphereProjector { radius: 1.0 }).unwrap();
    }
    let d = DeformationState::zero(VectorSpace::new(Arc::new(mesh), order).unwrap());
    let config = OptimizerConfig {
        params: PhysicalParams::new(1.0, 0.0).unwrap(),
        ..OptimizerConfig::default()
    };
    let p = Problem::new(&d, &config).unwrap();
    let eval = p.evaluate(&d).unwrap();
    let load = p.load(&d, &eval).unwrap();
    p.gradient(&d, &load).unwrap().norm
}

#[test]
fn curved_sphere_gradient_vanishes_under_refinement() {
    // Curved k = 2 only: linear elements carry an O(1) curvature error, so their
    // discrete sphere is not close to stationary.
    let norms: Vec<f64> = (1..=3).map(|s| gradient_norm_at_rest(s, 2)).collect();
    assert!(norms.windows(2).all(|w| w[1] < 0.6 * w[0]), "{norms:?}");
}

fn curved_sphere_errors(subdivisions: usize, extra_quadrature: usize) -> (f64, f64) {
    let mesh = curve_to_quadratic(&generate_icosphere(subdivisions, 1.0).unwrap(), &SphereProjector { radius: 1.0 }).unwrap();
    let d = DeformationState::zero(VectorSpace::new(Arc::new(mesh), 2).unwrap())
        .with_extra_quadrature(extra_quadrature)
        .unwrap();
    let space = ScalarSpace::new(d.mesh().clone(), 2).unwrap();
    let kappa = solve_state(&space, &d, &LiftOptions::default()).unwrap();
    let e = curvature_errors(&kappa, |_, _, _| -2.0, &d, 3, HMINUS1_EPSILON).unwrap();
    (e.l2, e.h_minus1)
}

#[test]
fn convergence_rates_do_not_depend_on_quadrature_degree() {
    let rates = |extra: usize| -> Vec<f64> {
        let e: Vec<(f64, f64)> = (1..=3).map(|s| curved_sphere_errors(s, extra)).collect();
        e.windows(2)
            .flat_map(|w| [(w[0].0 / w[1].0).log2(), (w[0].1 / w[1].1).log2()])
            .collect()
    };
    let (base, raised) = (rates(0), rates(2));
    for (a, b) in base.iter().zip(&raised) {
        assert!((a - b).abs() < 0.05, "{base:?} vs {raised:?}");
    }
}

#[test]
fn configured_run_writes_consistent_artifacts() {
    let config = parse_config_str(
        "[physics]\nkb = 0.01\n[constraints]\nreduced_volume = 0.9\n[algorithm]\nNmax = 25\n[geometry]\nshape = prolate\nsubdivisions = 1\norder = 2\n",
    )
    .unwrap();
    let initial = config.geometry.build_state().unwrap();
    assert_eq!(initial.mesh().geometry_order(), 2);
    let optimizer = config.resolved_optimizer(&measure(&initial).unwrap());
    let a0 = optimizer.penalties.area_target.unwrap();
    let v0 = optimizer.penalties.volume_target.unwrap();
    assert!((v0 / (4.0 / 3.0 * PI * (a0 / (4.0 * PI)).powf(1.5)) - 0.9).abs() < 1e-14);

    let r = optimize(initial, &optimizer, |_, _, _| {}).unwrap();
    assert_eq!(r.log.rows.len(), 26);
    let dir = tempfile::tempdir().unwrap();
    write_csv_log(&dir.path().join("log.csv"), &r.log).unwrap();
    write_vtk(&dir.path().join("final.vtk"), &r.deformation, &r.kappa, None).unwrap();
    let obj = dir.path().join("final.obj");
    write_obj(&obj, &r.deformation.deformed_mesh().unwrap()).unwrap();

    // The written geometry reproduces the optimized surface's measures.
    let back = read_obj(&obj).unwrap();
    let reread = DeformationState::zero(VectorSpace::new(Arc::new(back), 2).unwrap());
    let (a, b) = (measure(&r.deformation).unwrap(), measure(&reread).unwrap());
    assert!((a.total_area - b.total_area).abs() < 1e-12 * a.total_area);
    assert!((a.enclosed_volume - b.enclosed_volume).abs() < 1e-12 * a.enclosed_volume);
    let last = r.log.rows.last().unwrap();
    assert!((last.cost.area - a.total_area).abs() < 1e-12 * a.total_area);

    let log = std::fs::read_to_string(dir.path().join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 27);
}
