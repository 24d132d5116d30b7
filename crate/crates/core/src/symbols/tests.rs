use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_xi(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn numeric_det(b1: &PolyMatrix, xi: [f64; 3]) -> Complex64 {
    b1.eval_at_xi(xi).determinant()
}

/// Small dyadic values keep the exact arithmetic cheap.
fn random_params(rng: &mut ChaCha8Rng, m: usize) -> ParameterSet {
    let blocks = (0..9)
        .map(|_| DMatrix::from_fn(m, m, |_, _| rng.random_range(-8i32..=8) as f64 / 4.0))
        .collect();
    ParameterSet::new(blocks).unwrap()
}

#[test]
fn laplacian_determinant() {
    let (spec, params) = presets::laplacian();
    let an = analyze(&spec, &params).unwrap();
    let s = |i| Poly::var(i);
    let lap = &(&(&s(0) * &s(0)) + &(&s(1) * &s(1))) + &(&s(2) * &s(2));
    assert_eq!(an.factor.det, lap);
    assert_eq!(an.factor.route, DetRoute::Interpolation);
    let v = an.factor.det.eval_at_xi([1.0, 2.0, 2.0]);
    assert!((v.re + 9.0).abs() < 1e-12 && v.im.abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let xi = random_xi(&mut rng);
        let n2: f64 = xi.iter().map(|x| x * x).sum();
        let expect = Complex64::new(-n2, 0.0);
        assert!(rel(an.factor.det.eval_at_xi(xi), expect) < 1e-8);
        assert!(rel(numeric_det(&an.b1, xi), expect) < 1e-8);
    }
}

#[test]
fn u_resolved_determinant() {
    let (spec, params) = presets::ux_plus_u();
    let an = analyze(&spec, &params).unwrap();
    assert_eq!(an.factor.route, DetRoute::Reduction);
    let expect = -&(&Poly::one() + &Poly::var(0));
    assert_eq!(an.factor.det, expect);
    assert_eq!(an.factor.det.eval_at_xi([0.0; 3]), Complex64::new(-1.0, 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let xi = random_xi(&mut rng);
        assert!(rel(numeric_det(&an.b1, xi), Complex64::new(-1.0, -xi[0])) < 1e-8);
    }
}

#[test]
fn u_x_resolved_leading_block() {
    let (spec, params) = presets::ux_resolved();
    let (b1, _) = build_symbol_matrices(&spec, &params).unwrap();
    assert_eq!(*b1.get(0, 0), &Poly::var(0) + &Poly::one());
    let an = analyze(&spec, &params).unwrap();
    assert_eq!(an.factor.det, &Poly::var(0) + &Poly::one());
}

#[test]
fn u_resolved_structure() {
    // B₁ = α₀β₀ − E with β₀α₀ = −s₁.
    let (spec, params) = presets::ux_plus_u();
    let (b1, b2) = build_symbol_matrices(&spec, &params).unwrap();
    assert_eq!(b1.rows(), 9);
    assert_eq!(b2.cols(), 1);
    assert_eq!(*b1.get(0, 0), &Poly::monomial([1, 0, 0], rat(-1)) - &Poly::one());
    for i in 1..9 {
        assert_eq!(*b1.get(i, i), Poly::constant(rat(-1)));
    }
    // B₂ is the negated S column: α₀ times the E part of β.
    assert_eq!(*b2.get(0, 0), Poly::monomial([1, 0, 0], rat(-1)));
}

fn check_reduction(spec: &ResolutionSpec, params: &ParameterSet, seed: u64) {
    let an = analyze(spec, params).unwrap();
    assert_eq!(an.factor.route, DetRoute::Reduction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..50 {
        let xi = random_xi(&mut rng);
        let direct = numeric_det(&an.b1, xi);
        let reduced = an.factor.det.eval_at_xi(xi);
        assert!(rel(reduced, direct) < 1e-8, "{reduced} vs {direct} at {xi:?}");
    }
}

#[test]
fn reduction_matches_numeric_m1() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for name in ["u", "u_y"] {
        let spec = ResolutionSpec::single(name).unwrap();
        let mut params = random_params(&mut rng, 1);
        params.block_mut(1)[(0, 0)] = 1.5;
        check_reduction(&spec, &params, 10);
    }
}

#[test]
fn reduction_matches_numeric_m2() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let spec: ResolutionSpec = r#"{"m": 2, "resolved": ["u1", "u2"]}"#.parse().unwrap();
    check_reduction(&spec, &random_params(&mut rng, 2), 11);
    let spec: ResolutionSpec = r#"{"m": 2, "resolved": ["u1", "u2_x"]}"#.parse().unwrap();
    let mut params = random_params(&mut rng, 2);
    params.block_mut(1)[(1, 0)] = 2.0;
    check_reduction(&spec, &params, 12);
}

#[test]
fn interpolation_matches_numeric_m2() {
    let spec: ResolutionSpec = r#"{"m": 2, "resolved": ["u1_xx", "u2_x"]}"#.parse().unwrap();
    let mut params = ParameterSet::zeros(2);
    params.block_mut(7)[(0, 0)] = -1.0;
    params.block_mut(9)[(0, 0)] = -1.0;
    params.block_mut(1)[(1, 1)] = -1.0;
    params.block_mut(1)[(0, 1)] = 0.5;
    let an = analyze(&spec, &params).unwrap();
    assert_eq!(an.factor.route, DetRoute::Interpolation);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let xi = random_xi(&mut rng);
        assert!(rel(an.factor.det.eval_at_xi(xi), numeric_det(&an.b1, xi)) < 1e-8);
    }
}

#[test]
fn inverse_factor_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (spec, params) in [presets::laplacian(), presets::ux_plus_u(), presets::ux_resolved()] {
        let an = analyze(&spec, &params).unwrap();
        let n = an.b1.rows();
        for _ in 0..20 {
            let xi = random_xi(&mut rng);
            let prod = an.factor.a1_b1_inv.eval_at_xi(xi) * an.b1.eval_at_xi(xi);
            let a1 = an.factor.a1.eval_at_xi(xi);
            let expect = DMatrix::<Complex64>::identity(n, n) * a1;
            assert!((prod - &expect).norm() <= 1e-9 * expect.norm());
        }
    }
}

#[test]
fn a1_is_normalised() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let spec = ResolutionSpec::single("u").unwrap();
    let params = random_params(&mut rng, 1);
    let an = analyze(&spec, &params).unwrap();
    let lc = an.factor.a1.leading_coefficient().unwrap().clone();
    assert!(lc == rat(1) || lc == rat(-1));
}

#[test]
fn degree_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for m in [1, 2] {
        let spec = ResolutionSpec::new(m, (0..m).map(|c| Slot { kind: 0, component: c }).collect()).unwrap();
        let an = analyze(&spec, &random_params(&mut rng, m)).unwrap();
        assert!(an.b1.max_degree() <= 2 && an.b2.max_degree() <= 2);
        assert!(an.factor.a1_b1_inv.max_degree() <= an.factor.a1.degree() + 2 * (9 * m as i32 - 1));
        assert!(an.factor.det.degree() <= 2 * m as i32);
    }
}

#[test]
fn derive_parameters_worked_example() {
    let spec = ResolutionSpec::single("u").unwrap();
    let mut cp = vec![DMatrix::zeros(1, 1); 9];
    cp[0][(0, 0)] = -1.0;
    let params = derive_parameters(&spec, &cp).unwrap();
    assert_eq!(params.block(1)[(0, 0)], -1.0);
    for k in 2..=9 {
        assert_eq!(params.block(k)[(0, 0)], 0.0);
    }
}

#[test]
fn derive_parameters_singular() {
    let spec = ResolutionSpec::single("u_x").unwrap();
    let cp = vec![DMatrix::zeros(1, 1); 9];
    assert!(matches!(derive_parameters(&spec, &cp), Err(SymbolError::NotInvertible(_))));
}

#[test]
fn derive_parameters_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let spec: ResolutionSpec = r#"{"m": 2, "resolved": ["u2", "u1_z"]}"#.parse().unwrap();
    let cp: Vec<DMatrix<f64>> = (0..9)
        .map(|_| DMatrix::from_fn(2, 2, |_, _| rng.random_range(-8i32..=8) as f64 / 4.0))
        .collect();
    let params = derive_parameters(&spec, &cp).unwrap();
    let an = analyze(&spec, &params).unwrap();
    for _ in 0..50 {
        assert!(numeric_det(&an.b1, random_xi(&mut rng)).norm() > 1e-10);
    }
}

fn check_stack(spec: &ResolutionSpec, params: &ParameterSet) {
    let m = spec.m();
    let stack = parameter_stack(spec, params).unwrap();
    let sigma = stack_permutation(spec);
    let mut seen = vec![false; 10 * m];
    for (r, &t) in sigma.iter().enumerate() {
        assert!(!seen[t]);
        seen[t] = true;
        for col in 0..9 * m {
            let expect = if t < m {
                rat_from_f64(params.block(col / m + 1)[(t, col % m)])
            } else if col == t - m {
                rat(1)
            } else {
                rat(0)
            };
            assert_eq!(stack[(r, col)], expect);
        }
    }
}

#[test]
fn conditions_hold_for_worked_cases() {
    for (spec, params) in [presets::laplacian(), presets::ux_plus_u()] {
        let an = analyze(&spec, &params).unwrap();
        let (budget, report) = check_conditions(&an.factor.a1, &an.factor.a1_b1_inv, &an.a1_b1_inv_b2).unwrap();
        assert!(report.conditions.c316 && report.conditions.c317);
        assert_eq!(budget.m1, 6 + 2 * budget.a);
        assert_eq!(budget.a as i32, an.factor.a1_b1_inv.max_degree().max(an.a1_b1_inv_b2.max_degree()));
        assert!(report.integral.is_finite() && report.tail_bound.is_finite());
    }
}

#[test]
fn adversarial_parameters_fail() {
    let spec = ResolutionSpec::single("u_x").unwrap();
    let an = analyze(&spec, &ParameterSet::zeros(1)).unwrap();
    assert_eq!(an.factor.a1, Poly::var(0));
    match check_conditions(&an.factor.a1, &an.factor.a1_b1_inv, &an.a1_b1_inv_b2) {
        Err(SymbolError::ConditionFailed { condition, exponent, report }) => {
            assert_eq!(condition, Condition::LocalIntegrability);
            assert!((exponent - 1.0).abs() < 0.05);
            assert_eq!(report.zero_set_dimension, 2);
        }
        other => panic!("expected failure, got {other:?}"),
    }
}

#[test]
fn identically_singular() {
    let b1 = PolyMatrix::from_fn(2, 2, |i, _| if i == 0 { Poly::var(0) } else { Poly::constant(rat(-1)) });
    assert!(matches!(symbolic_det_and_inverse_factor(&b1), Err(SymbolError::SingularStructure)));
}

#[test]
fn spec_json() {
    let spec: ResolutionSpec = r#"{"m": 1, "resolved": ["u_zx"]}"#.parse().unwrap();
    assert_eq!(spec.resolved()[0], Slot { kind: 6, component: 0 });
    let text = serde_json::to_string(&spec).unwrap();
    assert_eq!(text, r#"{"m":1,"resolved":["u_xz"]}"#);
    assert!(r#"{"m": 2, "resolved": ["u1", "u1"]}"#.parse::<ResolutionSpec>().is_err());
    assert!(r#"{"m": 2, "resolved": ["u1"]}"#.parse::<ResolutionSpec>().is_err());
    assert!(r#"{"m": 1, "resolved": ["v_x"]}"#.parse::<ResolutionSpec>().is_err());
    assert!(r#"{"m": 1, "resolved": ["u"], "x": 1}"#.parse::<ResolutionSpec>().is_err());
    let p = presets::laplacian().1;
    let back: ParameterSet = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
    assert_eq!(back, p);
}

fn arb_spec() -> impl Strategy<Value = ResolutionSpec> {
    (1usize..=2).prop_flat_map(|m| {
        proptest::sample::subsequence((0..10 * m).collect::<Vec<_>>(), m)
            .prop_shuffle()
            .prop_map(move |idx| {
                let slots = idx.iter().map(|&i| Slot { kind: i / m, component: i % m }).collect();
                ResolutionSpec::new(m, slots).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn permutation_coherence(spec in arb_spec(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = random_params(&mut rng, spec.m());
        check_stack(&spec, &params);
    }

    #[test]
    fn b_matrices_have_degree_at_most_two(spec in arb_spec(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = random_params(&mut rng, spec.m());
        let (b1, b2) = build_symbol_matrices(&spec, &params).unwrap();
        prop_assert!(b1.max_degree() <= 2 && b2.max_degree() <= 2);
        prop_assert_eq!(b1.rows(), 9 * spec.m());
        prop_assert_eq!(b2.cols(), spec.m());
    }
}
