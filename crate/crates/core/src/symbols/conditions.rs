use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};
use num_complex::Complex64;
use num_traits::ToPrimitive;
use serde::Serialize;

use super::matrix::PolyMatrix;
use super::poly::Poly;
use super::SymbolError;

/// Which integrability requirement failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// |a₁|⁻¹ locally integrable.
    LocalIntegrability,
    /// (1+|ξ|²)^{−a−3}B₁⁻¹ integrable over ℝ³.
    SymbolDecay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SobolevBudget {
    pub a: u32,
    pub m1: u32,
}

impl SobolevBudget {
    pub fn new(a: u32) -> Self {
        Self { a, m1: 6 + 2 * a }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ConditionFlags {
    pub c316: bool,
    pub c317: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleEvaluation {
    pub xi: [f64; 3],
    pub a1: [f64; 2],
    pub b1_inv_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub det_degree: i32,
    pub a: u32,
    pub m1: u32,
    pub conditions: ConditionFlags,
    /// Lowest total degree of a₁, i.e. its vanishing order at ξ = 0.
    pub origin_order: i32,
    /// Local dimension of the real zero set of a₁ away from the origin; −1 if none was found.
    pub zero_set_dimension: i32,
    /// Measured growth exponent of |a₁|⁻¹ at the worst zero found (0 if none).
    pub zero_growth: f64,
    /// Measured growth exponent of ‖B₁⁻¹‖ at the worst singular point.
    pub inverse_growth: f64,
    /// Codimension available for that singular point.
    pub singular_codimension: u32,
    /// Power of |ξ| bounding the weighted integrand at infinity.
    pub decay_exponent: f64,
    pub quadrature_radius: f64,
    pub integral: f64,
    pub tail_bound: f64,
    pub sample_evaluations: Vec<SampleEvaluation>,
}

/// Float copy of a polynomial for fast evaluation at s = iξ.
#[derive(Clone, Debug)]
struct FloatPoly {
    terms: Vec<([u32; 3], f64)>,
}

impl FloatPoly {
    fn new(p: &Poly) -> Self {
        Self { terms: p.terms().map(|(e, c)| (*e, c.to_f64().unwrap_or(f64::NAN))).collect() }
    }

    fn eval(&self, xi: [f64; 3]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (e, c) in &self.terms {
            let deg = e[0] + e[1] + e[2];
            let mag = c * xi[0].powi(e[0] as i32) * xi[1].powi(e[1] as i32) * xi[2].powi(e[2] as i32);
            acc += Complex64::new(0.0, 1.0).powu(deg) * mag;
        }
        acc
    }

    /// |p(iξ)|² against Σ cₑ²(1+|ξ|²)^{|e|}, a size that does not vanish with p.
    fn relative(&self, xi: [f64; 3]) -> f64 {
        let w = 1.0 + xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
        let d: f64 = self.terms.iter().map(|(e, c)| c * c * w.powi((e[0] + e[1] + e[2]) as i32)).sum();
        self.eval(xi).norm_sqr() / d
    }
}

/// p and its ξ-gradient as real 2-vectors (Re, Im).
struct Field {
    p: FloatPoly,
    grad: [FloatPoly; 3],
}

impl Field {
    fn new(p: &Poly) -> Self {
        Self { p: FloatPoly::new(p), grad: [0, 1, 2].map(|i| FloatPoly::new(&p.derivative(i))) }
    }

    fn residual(&self, xi: [f64; 3]) -> Vector2<f64> {
        let v = self.p.eval(xi);
        Vector2::new(v.re, v.im)
    }

    /// ∂/∂ξⱼ p(iξ) = i·(∂p/∂sⱼ)(iξ).
    fn jacobian(&self, xi: [f64; 3]) -> Matrix2x3<f64> {
        let mut j = Matrix2x3::zeros();
        for (k, g) in self.grad.iter().enumerate() {
            let d = Complex64::new(0.0, 1.0) * g.eval(xi);
            j[(0, k)] = d.re;
            j[(1, k)] = d.im;
        }
        j
    }
}

fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            [r * t.cos(), r * t.sin(), z]
        })
        .collect()
}

fn norm(x: [f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

struct Zero {
    at: [f64; 3],
    dimension: i32,
    normal: [f64; 3],
}

/// Real zeros of p(iξ) in the ball |ξ| ≤ radius, located by damped
/// underdetermined Newton iteration from a spread of starts.
fn find_zeros(p: &Poly, radius: f64) -> Vec<Zero> {
    let field = Field::new(p);
    let mut zeros = Vec::new();
    if p.degree() <= 0 {
        return zeros;
    }
    for &r in &[0.2 * radius, 0.5 * radius, radius] {
        for dir in fibonacci_sphere(80) {
            let mut x = Vector3::new(dir[0] * r, dir[1] * r, dir[2] * r);
            let mut ok = false;
            for _ in 0..60 {
                let xi = [x[0], x[1], x[2]];
                let res = field.residual(xi);
                if field.p.relative(xi) < 1e-26 {
                    ok = true;
                    break;
                }
                let j = field.jacobian(xi);
                let jjt: Matrix2<f64> = j * j.transpose();
                let damp = 1e-14 * jjt.trace().max(1e-300);
                let Some(inv) = (jjt + Matrix2::identity() * damp).try_inverse() else { break };
                let step = j.transpose() * (inv * res);
                x -= step;
                if !x.iter().all(|v| v.is_finite()) || x.norm() > 2.0 * radius {
                    break;
                }
            }
            let xi = [x[0], x[1], x[2]];
            if !ok || norm(xi) < 1e-6 {
                continue;
            }
            if zeros.iter().any(|z: &Zero| norm([z.at[0] - xi[0], z.at[1] - xi[1], z.at[2] - xi[2]]) < 1e-3) {
                continue;
            }
            let j = field.jacobian(xi);
            let sv = j.svd(true, true);
            let top = sv.singular_values.max();
            let rank = sv.singular_values.iter().filter(|&&s| s > 1e-8 * top.max(1e-300)).count();
            let mut normal = [0.0; 3];
            if let Some(vt) = sv.v_t {
                let k = sv.singular_values.imax();
                normal = [vt[(k, 0)], vt[(k, 1)], vt[(k, 2)]];
            }
            if top == 0.0 {
                normal = dir;
            }
            zeros.push(Zero { at: xi, dimension: (3 - rank as i32).min(2), normal });
        }
    }
    zeros
}

fn offset(x: [f64; 3], n: [f64; 3], t: f64) -> [f64; 3] {
    [x[0] + t * n[0], x[1] + t * n[1], x[2] + t * n[2]]
}

/// Weighted integrability checks on a₁, a₁B₁⁻¹ and a₁B₁⁻¹B₂.
pub fn check_conditions(
    a1: &Poly,
    a1_b1_inv: &PolyMatrix,
    a1_b1_inv_b2: &PolyMatrix,
) -> Result<(SobolevBudget, ConditionReport), SymbolError> {
    if a1.is_zero() {
        return Err(SymbolError::SingularStructure);
    }
    let a = a1_b1_inv.max_degree().max(a1_b1_inv_b2.max_degree()).max(0) as u32;
    let budget = SobolevBudget::new(a);
    let det_degree = a1.degree();
    let fa1 = FloatPoly::new(a1);
    let adj: Vec<FloatPoly> = a1_b1_inv.entries().iter().map(FloatPoly::new).collect();
    let inv_norm = |xi: [f64; 3]| -> f64 {
        let d = fa1.eval(xi).norm();
        let s: f64 = adj.iter().map(|p| p.eval(xi).norm_sqr()).sum();
        s.sqrt() / d
    };

    // Local behaviour of |a₁|⁻¹ and B₁⁻¹ near the real zeros of a₁.
    let zeros = find_zeros(a1, 4.0);
    let origin_order = a1.order();
    let origin_zero = a1.coefficient([0, 0, 0]) == num_rational::BigRational::from_integer(0.into());
    let mut c316 = origin_order < 3;
    let mut zero_growth: f64 = 0.0;
    let mut inverse_growth: f64 = 0.0;
    let mut singular_codimension = 3;
    let mut local_317 = true;
    let t = 1e-3;
    for z in &zeros {
        let codim = (3 - z.dimension) as u32;
        let k = (fa1.eval(offset(z.at, z.normal, t)).norm() / fa1.eval(offset(z.at, z.normal, t / 2.0)).norm()).log2();
        let g = (inv_norm(offset(z.at, z.normal, t / 2.0)) / inv_norm(offset(z.at, z.normal, t))).log2();
        if k >= zero_growth {
            zero_growth = k;
        }
        if g >= inverse_growth {
            inverse_growth = g;
            singular_codimension = codim;
        }
        if k >= codim as f64 - 0.25 {
            c316 = false;
        }
        if g >= codim as f64 - 0.25 {
            local_317 = false;
        }
    }
    if origin_zero {
        zero_growth = zero_growth.max(origin_order as f64);
        for dir in fibonacci_sphere(12) {
            let g = (inv_norm(offset([0.0; 3], dir, 5e-4)) / inv_norm(offset([0.0; 3], dir, 1e-3))).log2();
            if g > inverse_growth {
                inverse_growth = g;
                singular_codimension = 3;
            }
            if g >= 2.75 {
                local_317 = false;
            }
        }
    }
    let zero_set_dimension = zeros.iter().map(|z| z.dimension).max().unwrap_or(-1);

    // Behaviour at infinity from degree counting; a top part that vanishes in
    // some direction gives no decay there.
    let top = a1.homogeneous_part(det_degree);
    let top_decays = find_zeros(&top, 1.0).is_empty();
    let a1_decay = if top_decays { det_degree } else { 0 };
    let decay_exponent = (a1_b1_inv.max_degree() - a1_decay) as f64 - 2.0 * a as f64 - 6.0;

    // Radial quadrature of the weighted norm over |ξ| ≤ R.
    let radius = 16.0;
    let (gx, gw) = gauss_legendre_8();
    let dirs = fibonacci_sphere(146);
    let wdir = 4.0 * PI / dirs.len() as f64;
    let mut integral = 0.0;
    let mut lo = 0.0;
    let mut hi = 0.5;
    while lo < radius {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (x, w) in gx.iter().zip(&gw) {
            let r = mid + half * x;
            let weight = (1.0 + r * r).powf(-(a as f64) - 3.0) * r * r * w * half * wdir;
            for d in &dirs {
                integral += weight * inv_norm([r * d[0], r * d[1], r * d[2]]);
            }
        }
        lo = hi;
        hi *= 2.0;
    }
    let k_inf = dirs
        .iter()
        .map(|d| inv_norm([radius * d[0], radius * d[1], radius * d[2]]) * (1.0 + radius * radius).powf(-(a as f64) - 3.0))
        .fold(0.0, f64::max)
        * radius.powf(-decay_exponent);
    let tail_bound = if decay_exponent < -3.0 {
        4.0 * PI * k_inf * radius.powf(decay_exponent + 3.0) / (-decay_exponent - 3.0)
    } else {
        f64::INFINITY
    };
    let c317 = local_317 && decay_exponent < -3.0 && integral.is_finite() && tail_bound.is_finite();

    let sample_evaluations = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 2.0, 2.0], [0.5, -0.3, 0.8], [2.0, -1.0, 0.5]]
        .into_iter()
        .map(|xi| {
            let v = fa1.eval(xi);
            SampleEvaluation { xi, a1: [v.re, v.im], b1_inv_norm: inv_norm(xi) }
        })
        .collect();
    let report = ConditionReport {
        det_degree,
        a,
        m1: budget.m1,
        conditions: ConditionFlags { c316, c317 },
        origin_order,
        zero_set_dimension,
        zero_growth,
        inverse_growth,
        singular_codimension,
        decay_exponent,
        quadrature_radius: radius,
        integral,
        tail_bound,
        sample_evaluations,
    };
    if !c316 {
        return Err(SymbolError::ConditionFailed {
            condition: Condition::LocalIntegrability,
            exponent: zero_growth,
            report: Box::new(report),
        });
    }
    if !c317 {
        let exponent = if local_317 { decay_exponent } else { inverse_growth };
        return Err(SymbolError::ConditionFailed { condition: Condition::SymbolDecay, exponent, report: Box::new(report) });
    }
    Ok((budget, report))
}

fn gauss_legendre_8() -> ([f64; 8], [f64; 8]) {
    let x = [
        -0.960_289_856_497_536_3,
        -0.796_666_477_413_626_7,
        -0.525_532_409_916_329_0,
        -0.183_434_642_495_649_8,
        0.183_434_642_495_649_8,
        0.525_532_409_916_329_0,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    let w = [
        0.101_228_536_290_376_3,
        0.222_381_034_453_374_5,
        0.313_706_645_877_887_3,
        0.362_683_783_378_362_0,
        0.362_683_783_378_362_0,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    (x, w)
}
