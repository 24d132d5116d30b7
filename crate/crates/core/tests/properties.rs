use std::f64::consts::PI;

use layerpot::degree::{brouwer_degree, degree_1d, leray_schauder_degree, FiniteMap, PhiFn};
use layerpot::funcspace::{mollify, negative_norm, negative_norm_bound_constant, GridFunction};
use layerpot::hammerstein::{picard_solve, residual, DomainSpec, KernelSpec, NonlinearitySpec, OffsetSpec, ProblemSpec};
use layerpot::potentials::solid_angle;
use layerpot::{make_unit_sphere, Point3};
use proptest::prelude::*;
use std::sync::Arc;

fn cube(values: Vec<f64>) -> GridFunction {
    GridFunction::new(Point3::new(-1.0, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0), [4, 4, 4], values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn certificates_respect_budget(amp in 0.2f64..3.0, length in 0.03f64..0.5, n in 0usize..3, c in -0.5f64..0.5) {
        let p = ProblemSpec {
            domain: DomainSpec::Interval { a: 0.0, b: 1.0, n: 17 },
            kernel: KernelSpec::Gaussian { amplitude: amp, length },
            psi: NonlinearitySpec::Sine { amplitude: 1.0 },
            offset: OffsetSpec::Constant { value: c },
            radius: 2.0,
        }
        .build()
        .unwrap();
        if let Ok(cert) = leray_schauder_degree(&p, n, 16, 5) {
            prop_assert!(cert.sup_error_kernel <= cert.tau_estimate / 3.0);
            prop_assert!(cert.sup_error_offset <= cert.tau_estimate / 3.0);
        }
    }

    #[test]
    fn negative_norm_is_bounded_and_monotone(values in prop::collection::vec(-2.0f64..2.0, 64)) {
        let f = cube(values);
        let bound = negative_norm_bound_constant(&f) * f.sup_norm();
        let mut last = f64::INFINITY;
        for m in 0..6 {
            let v = negative_norm(&f, m);
            prop_assert!(v <= bound + 1e-12);
            prop_assert!(v <= last + 1e-12);
            last = v;
        }
    }

    #[test]
    fn mollification_is_sup_nonexpansive(values in prop::collection::vec(-3.0f64..3.0, 64), eps in 0.01f64..0.5) {
        let f = cube(values);
        let g = mollify(&f, eps).unwrap();
        prop_assert!(g.sup_norm() <= f.sup_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn picard_fixed_points_have_small_residual(lambda in -0.9f64..0.9, g in -1.0f64..1.0) {
        let p = ProblemSpec {
            domain: DomainSpec::Interval { a: 0.0, b: 1.0, n: 9 },
            kernel: KernelSpec::Constant { lambda },
            psi: NonlinearitySpec::Saturating { amplitude: 1.0, scale: 1.0 },
            offset: OffsetSpec::Constant { value: g },
            radius: 3.0,
        }
        .build()
        .unwrap();
        let sol = picard_solve(&p, 1e-12, 500).unwrap();
        let r = residual(&p, &sol.values);
        prop_assert!(r.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn one_dimensional_degree_is_sign_change(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        prop_assume!(a.abs() > 1e-3 && b.abs() > 1e-3);
        let d = degree_1d(a, b);
        prop_assert_eq!(d, if a < 0.0 && b > 0.0 { 1 } else if a > 0.0 && b < 0.0 { -1 } else { 0 });
    }

    #[test]
    fn linear_maps_have_determinant_sign(m in prop::collection::vec(-2.0f64..2.0, 4)) {
        // field is D - φ(D)
        let det = (1.0 - m[0]) * (1.0 - m[3]) - m[1] * m[2];
        prop_assume!(det.abs() > 0.05);
        let phi: PhiFn = Arc::new(move |c: &[f64]| Ok(vec![m[0] * c[0] + m[1] * c[1], m[2] * c[0] + m[3] * c[1]]));
        let map = FiniteMap::on_box(2, 1.0, phi).unwrap();
        let out = brouwer_degree(&map, &[0.0, 0.0]).unwrap();
        prop_assert_eq!(out.degree, det.signum() as i64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn solid_angle_trichotomy(theta in 0.0f64..PI, phi in 0.0f64..2.0 * PI, r in 0.0f64..0.8, s in 1.3f64..4.0) {
        let mesh = make_unit_sphere(3);
        let d = Point3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
        let inside = solid_angle(&mesh, d * r).unwrap();
        let outside = solid_angle(&mesh, d * s).unwrap();
        prop_assert!((inside / (-4.0 * PI) - 1.0).abs() < 0.01, "{inside}");
        prop_assert!(outside.abs() < 0.05, "{outside}");
    }
}
