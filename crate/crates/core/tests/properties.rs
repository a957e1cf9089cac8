use std::sync::Arc;

use helfrich::curvature::{bending_energy, clamped_arcsin, solve_state, LiftOptions, PhysicalParams};
use helfrich::fem::{assemble_mass, quadrature, Domain, ScalarSpace, VectorSpace};
use helfrich::io::{parse_config_str, RunConfig};
use helfrich::mesh::{curve_to_quadratic, generate_benchmark_shape, measure, BenchmarkShape, DeformationState, Jitter};
use helfrich::optimizer::{OptimizerConfig, PenaltySettings, Problem};
use helfrich::shape_derivative::{rigid_motion_fields, smooth_random_probe, DerivativeForm};
use helfrich::{Mat3, Vec3};
use proptest::prelude::*;

fn shapes() -> impl Strategy<Value = BenchmarkShape> {
    prop_oneof![
        (0.5..2.0f64).prop_map(|radius| BenchmarkShape::Sphere { radius }),
        Just(BenchmarkShape::prolate()),
        Just(BenchmarkShape::oblate()),
        Just(BenchmarkShape::Biconcave),
    ]
}

/// A jittered benchmark surface of order 1 or 2, optionally with a small smooth displacement.
fn surfaces(max_subdivisions: usize) -> impl Strategy<Value = DeformationState> {
    (shapes(), 0..=max_subdivisions, 0.0..0.35f64, any::<u64>(), 1..=2usize, any::<bool>()).prop_map(
        |(shape, subdivisions, magnitude, seed, order, displace)| {
            let mut mesh = generate_benchmark_shape(shape, subdivisions, Some(Jitter { magnitude, seed })).unwrap();
            if order == 2 {
                mesh = curve_to_quadratic(&mesh, shape.projector().as_ref()).unwrap();
            }
            let d = DeformationState::zero(VectorSpace::new(Arc::new(mesh), order).unwrap());
            if displace {
                let probe = smooth_random_probe(&d, seed);
                d.displaced(&probe, 0.05)
            } else {
                d
            }
        },
    )
}

fn unit_vectors() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-zero", |(x, y, z)| x * x + y * y + z * z > 1e-2)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
}

fn rotation(axis: Vec3, angle: f64) -> Mat3 {
    *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
}

fn angle(a: Vec3, b: Vec3) -> f64 {
    a.cross(&b).norm().atan2(a.dot(&b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn angle_between_is_additive(a in unit_vectors(), b in unit_vectors(), t in 0.0..=1.0f64) {
        prop_assume!((a + b).norm() > 1e-3);
        let c = (a * t + b * (1.0 - t)).normalize();
        prop_assert!((angle(a, b) - angle(a, c) - angle(c, b)).abs() <= 1e-10);
    }

    #[test]
    fn arcsin_matches_complementary_arccos(x in -1.0 + 1e-9..=1.0 - 1e-9f64) {
        let lhs = std::f64::consts::FRAC_PI_2 - x.acos();
        prop_assert!((lhs - clamped_arcsin(x)).abs() <= 1e-14 * 4.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closed_surfaces_have_zero_normal_integral(d in surfaces(2)) {
        prop_assert_eq!(d.mesh().euler_characteristic(), 2);
        let rule = quadrature(Domain::Triangle, 6).unwrap();
        let mut total = Vec3::zeros();
        let mut area = 0.0;
        for t in 0..d.mesh().n_triangles() {
            let map = d.element(t);
            for (xi, w) in rule.iter() {
                let p = map.eval(xi).unwrap();
                total += p.normal * (w * p.area_density);
                area += w * p.area_density;
            }
        }
        prop_assert!(total.norm() <= 1e-10 * area, "{} vs {}", total.norm(), area);
    }

    #[test]
    fn edge_frames_are_orthonormal_and_agree(d in surfaces(1)) {
        for e in d.mesh().edges() {
            for u in [0.0, 0.2113, 0.5, 0.7887, 1.0] {
                let l = d.element(e.left).eval_edge(e.left_local, u).unwrap();
                let r = d.element(e.right).eval_edge(e.right_local, 1.0 - u).unwrap();
                prop_assert!((l.frame.tau + r.frame.tau).norm() <= 1e-12);
                for f in [l.frame, r.frame] {
                    let worst = [f.nu.dot(&f.tau), f.nu.dot(&f.mu), f.tau.dot(&f.mu), f.nu.norm() - 1.0]
                        .iter()
                        .fold(0.0f64, |m, v| m.max(v.abs()));
                    prop_assert!(worst <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn rigid_motions_preserve_mass_energy_and_measures(
        d in surfaces(1),
        axis in unit_vectors(),
        turn in -3.0..3.0f64,
        shift in (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64),
    ) {
        let r = rotation(axis, turn);
        let b = Vec3::new(shift.0, shift.1, shift.2);
        let base = d.deformed_mesh().unwrap();
        let order = d.space().order();
        let before = DeformationState::zero(VectorSpace::new(Arc::new(base), order).unwrap());
        let moved = DeformationState::from_node_map(before.space().clone(), |x| r * x + b);
        let space = ScalarSpace::new(before.mesh().clone(), order).unwrap();
        let m0 = assemble_mass(&space, &before).unwrap();
        let m1 = assemble_mass(&space, &moved).unwrap();
        let ones = vec![1.0; space.ndof()];
        let diff: f64 = m0.mul_vec(&ones).iter().zip(m1.mul_vec(&ones)).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!(diff <= 1e-12 * space.ndof() as f64);

        let params = PhysicalParams::new(1.0, 0.4).unwrap();
        let w0 = bending_energy(&solve_state(&space, &before, &LiftOptions::default()).unwrap(), &before, &params).unwrap().w;
        let w1 = bending_energy(&solve_state(&space, &moved, &LiftOptions::default()).unwrap(), &moved, &params).unwrap().w;
        prop_assert!((w0 - w1).abs() <= 1e-9 * w0.abs().max(1.0));
        let (a, c) = (measure(&before).unwrap(), measure(&moved).unwrap());
        prop_assert!((a.total_area - c.total_area).abs() <= 1e-12 * a.total_area);
        prop_assert!((a.enclosed_volume - c.enclosed_volume).abs() <= 1e-11 * a.total_area.powf(1.5));
    }
}

fn affine_surfaces() -> impl Strategy<Value = DeformationState> {
    (shapes(), 0..=2usize, 0.0..0.35f64, any::<u64>()).prop_map(|(shape, subdivisions, magnitude, seed)| {
        let mesh = generate_benchmark_shape(shape, subdivisions, Some(Jitter { magnitude, seed })).unwrap();
        DeformationState::zero(VectorSpace::new(Arc::new(mesh), 1).unwrap())
    })
}

/// For k = 2 the edge normal is projected orthogonally to τ; without it rotations
/// leave an O(h⁴) residual on non-symmetric curved geometry.
fn derivative_problem(d: &DeformationState, form: DerivativeForm, h0: f64) -> Problem {
    let m = measure(d).unwrap();
    let mut config = OptimizerConfig {
        params: PhysicalParams::new(1.0, h0).unwrap(),
        penalties: PenaltySettings {
            area_target: Some(0.95 * m.total_area),
            volume_target: Some(1.05 * m.enclosed_volume),
            ..PenaltySettings::default()
        },
        form,
        ..OptimizerConfig::default()
    };
    config.lift.tangent_projection = d.space().order() == 2;
    Problem::new(d, &config).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lowest_order_form_equals_full_form(d in affine_surfaces(), h0 in -1.0..1.0f64) {
        let mut loads = Vec::new();
        for form in [DerivativeForm::Full, DerivativeForm::LowestOrder] {
            let p = derivative_problem(&d, form, h0);
            let eval = p.evaluate(&d).unwrap();
            loads.push(p.load(&d, &eval).unwrap().values);
        }
        for (a, b) in loads[0].iter().zip(&loads[1]) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn rigid_motions_are_in_the_derivative_kernel(d in surfaces(1), h0 in -1.0..1.0f64) {
        let p = derivative_problem(&d, DerivativeForm::Full, h0);
        let eval = p.evaluate(&d).unwrap();
        let load = p.load(&d, &eval).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let space = ScalarSpace::new(d.mesh().clone(), d.space().order()).unwrap();
        let sigma = helfrich::curvature::solve_adjoint(&space, &d, &eval.kappa, &p.params, &p.lift).unwrap();
        let scale = norm(&eval.kappa.values) + norm(&sigma.values) + 1.0;
        for x in rigid_motion_fields(&d) {
            prop_assert!(load.apply(&x).abs() <= 1e-9 * scale * norm(&x), "{}", load.apply(&x));
        }
    }

    #[test]
    fn config_echo_round_trips(
        kb in 1e-4..10.0f64,
        h0 in -5.0..5.0f64,
        c in (0.0..100.0f64, 0.0..100.0f64, 0.0..100.0f64),
        alpha in 1e-4..0.1f64,
        nmax in 0usize..1_000_000,
        window in 0usize..20,
        v in proptest::option::of(0.5..=1.0f64),
        shape in prop_oneof![Just("sphere"), Just("prolate"), Just("oblate"), Just("biconcave")],
        geometry in (0usize..=5, 1usize..=2, 0.0..0.49f64, any::<u64>()),
        stokes in any::<bool>(),
    ) {
        let mut config = RunConfig::default();
        let (subdivisions, order, jitter, seed) = geometry;
        let stokes = stokes && order == 2;
        let pairs = [
            ("kb", format!("{kb:?}")),
            ("H0", format!("{h0:?}")),
            ("cA", format!("{:?}", c.0)),
            ("cV", format!("{:?}", c.1)),
            ("cAloc", format!("{:?}", c.2)),
            ("alpha", format!("{alpha:?}")),
            ("Nmax", nmax.to_string()),
            ("M", window.to_string()),
            ("reduced_volume", v.map_or("auto".into(), |v| format!("{v:?}"))),
            ("shape", shape.to_string()),
            ("subdivisions", subdivisions.to_string()),
            ("order", order.to_string()),
            ("jitter", format!("{jitter:?}")),
            ("seed", seed.to_string()),
            ("gradient_mode", if stokes { "stokes" } else { "h1" }.to_string()),
        ];
        for (k, value) in &pairs {
            config.set(k, value).unwrap();
        }
        config.validate().unwrap();
        let echoed = parse_config_str(&config.echo()).unwrap();
        prop_assert_eq!(&echoed, &config);
        prop_assert_eq!(echoed.echo(), config.echo());
    }
}
