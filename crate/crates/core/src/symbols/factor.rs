use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;

use super::matrix::{PolyMatrix, RatMatrix};
use super::poly::{Exponent, Poly};
use super::SymbolError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DetRoute {
    /// Rank reduction through the invertible constant part.
    Reduction,
    /// Exact tensor interpolation of det and adjugate when the constant part is singular.
    Interpolation,
}

#[derive(Clone, Debug)]
pub struct SymbolFactor {
    pub det: Poly,
    /// det(B₁) with its leading coefficient scaled to ±1.
    pub a1: Poly,
    pub a1_b1_inv: PolyMatrix,
    pub route: DetRoute,
}

impl SymbolFactor {
    pub fn times(&self, b2: &PolyMatrix) -> PolyMatrix {
        self.a1_b1_inv.mul(b2)
    }
}

/// B₁ written as U·W − A with U carrying one monomial per row and W, A constant.
struct LowRank {
    u: PolyMatrix,
    w: RatMatrix,
    a: RatMatrix,
}

fn split(b1: &PolyMatrix) -> Result<LowRank, SymbolError> {
    let n = b1.rows();
    let mut a = RatMatrix::zeros(n, n);
    let mut v = RatMatrix::zeros(n, n);
    let mut mu: Vec<Option<Exponent>> = vec![None; n];
    for r in 0..n {
        let mut seen = BTreeSet::new();
        for c in 0..n {
            for (e, coef) in b1.get(r, c).terms() {
                if *e == [0, 0, 0] {
                    a[(r, c)] = -coef.clone();
                } else {
                    seen.insert(*e);
                    v[(r, c)] = coef.clone();
                }
            }
        }
        if seen.len() > 1 {
            return Err(SymbolError::Structure(format!("row {r} mixes several monomials")));
        }
        mu[r] = seen.into_iter().next();
    }
    let (basis, coords) = v.row_basis();
    let k = basis.len();
    let w = RatMatrix::from_fn(k, n, |t, c| v[(basis[t], c)].clone());
    let u = PolyMatrix::from_fn(n, k, |r, t| match mu[r] {
        Some(e) => Poly::monomial(e, coords[r][t].clone()),
        None => Poly::zero(),
    });
    Ok(LowRank { u, w, a })
}

/// det(B₁) and det(B₁)·B₁⁻¹ for B₁ = α₀A₀ − A, normalised so the leading
/// coefficient of a₁ is ±1. The adjugate identity is verified exactly.
pub fn symbolic_det_and_inverse_factor(b1: &PolyMatrix) -> Result<SymbolFactor, SymbolError> {
    let n = b1.rows();
    if n != b1.cols() {
        return Err(SymbolError::Structure("B₁ must be square".into()));
    }
    if b1.max_degree() > 2 {
        return Err(SymbolError::Structure("entries of B₁ exceed degree 2".into()));
    }
    let lr = split(b1)?;
    let k = lr.w.rows;
    let (det_a, a_inv) = lr.a.det_and_inverse();
    let (det, adj, route) = match a_inv {
        Some(a_inv) => {
            let wa = lr.w.mul(&a_inv);
            let wa_p = PolyMatrix::from_rational(&wa);
            let m = wa_p.mul(&lr.u).sub(&PolyMatrix::identity(k));
            let det_m = m.determinant();
            let adj_m = m.adjugate();
            let factor = if (n - k) % 2 == 0 { det_a.clone() } else { -det_a.clone() };
            let det = det_m.scale(&factor);
            let inner = lr.u.mul(&adj_m).mul(&wa_p).sub(&PolyMatrix::identity(n).scale(&det_m));
            let adj = PolyMatrix::from_rational(&a_inv).mul(&inner).scale_rational(&factor);
            (det, adj, DetRoute::Reduction)
        }
        None => {
            let (det, adj) = interpolate(b1, 2 * k as u32)?;
            (det, adj, DetRoute::Interpolation)
        }
    };
    if det.is_zero() {
        return Err(SymbolError::SingularStructure);
    }
    let lc = det.leading_coefficient().expect("nonzero").abs();
    let inv = lc.recip();
    let a1 = det.scale(&inv);
    let a1_b1_inv = adj.scale_rational(&inv);
    if a1_b1_inv.mul(b1) != PolyMatrix::identity(n).scale(&a1) {
        return Err(SymbolError::Verification("a₁B₁⁻¹·B₁ ≠ a₁E".into()));
    }
    Ok(SymbolFactor { det, a1, a1_b1_inv, route })
}

fn frac(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// Recovers det(B₁) and its adjugate exactly from values on a (d+1)³ tensor grid,
/// d being a bound on their total degree.
fn interpolate(b1: &PolyMatrix, d: u32) -> Result<(Poly, PolyMatrix), SymbolError> {
    let n = b1.rows();
    let probes = [
        [frac(7, 3), frac(-5, 11), frac(13, 17)],
        [frac(-19, 7), frac(23, 29), frac(3, 31)],
        [frac(41, 37), frac(2, 43), frac(-47, 13)],
    ];
    if probes.iter().all(|s| b1.eval_rational(s).det_and_inverse().0.is_zero()) {
        return Err(SymbolError::SingularStructure);
    }
    let npts = d as usize + 1;
    'offsets: for attempt in 1..=32i64 {
        let offset = frac(attempt, 2 * attempt + 1);
        let nodes: Vec<BigRational> =
            (0..npts).map(|a| BigRational::from_integer(BigInt::from(a as i64 - d as i64 / 2)) + &offset).collect();
        // values[f][(a·N + b)·N + c] for f = 0 (det) and 1 + i·n + j (adjugate entries)
        let mut values = vec![vec![BigRational::zero(); npts * npts * npts]; 1 + n * n];
        for ia in 0..npts {
            for ib in 0..npts {
                for ic in 0..npts {
                    let s = [nodes[ia].clone(), nodes[ib].clone(), nodes[ic].clone()];
                    let (det, inv) = b1.eval_rational(&s).det_and_inverse();
                    let Some(inv) = inv else { continue 'offsets };
                    let at = (ia * npts + ib) * npts + ic;
                    values[0][at] = det.clone();
                    for i in 0..n {
                        for j in 0..n {
                            values[1 + i * n + j][at] = &det * &inv[(i, j)];
                        }
                    }
                }
            }
        }
        let vander = RatMatrix::from_fn(npts, npts, |a, p| {
            let mut x = BigRational::one();
            for _ in 0..p {
                x *= &nodes[a];
            }
            x
        });
        let (_, vinv) = vander.det_and_inverse();
        let vinv = vinv.expect("distinct nodes");
        let polys: Vec<Poly> = values.iter().map(|v| tensor_fit(v, &vinv, npts)).collect();
        let det = polys[0].clone();
        let adj = PolyMatrix::from_fn(n, n, |i, j| polys[1 + i * n + j].clone());
        return Ok((det, adj));
    }
    Err(SymbolError::SingularStructure)
}

fn tensor_fit(values: &[BigRational], vinv: &RatMatrix, n: usize) -> Poly {
    let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let mut cur = values.to_vec();
    for axis in 0..3 {
        let mut next = vec![BigRational::zero(); cur.len()];
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let mut acc = BigRational::zero();
                    for t in 0..n {
                        let (src, p) = match axis {
                            0 => (idx(t, b, c), a),
                            1 => (idx(a, t, c), b),
                            _ => (idx(a, b, t), c),
                        };
                        if !cur[src].is_zero() {
                            acc += &vinv[(p, t)] * &cur[src];
                        }
                    }
                    next[idx(a, b, c)] = acc;
                }
            }
        }
        cur = next;
    }
    let mut poly = Poly::zero();
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let v = &cur[idx(a, b, c)];
                if !v.is_zero() {
                    poly = &poly + &Poly::monomial([a as u32, b as u32, c as u32], v.clone());
                }
            }
        }
    }
    poly
}
