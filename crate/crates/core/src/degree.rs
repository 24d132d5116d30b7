//! Finite-dimensional reduction of the Hammerstein equation and its degree.
//!
//! The kernel and offset are replaced by polynomials in X of total degree ≤ N,
//! which turns f = g + Tf into D = φ(D) + g_N on coefficient vectors. The
//! Brouwer degree of I − φ on Ω_{M,2} = {D : ‖X̃ᵀD‖∞ < M} is then computed
//! directly.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point3;
use crate::hammerstein::{
    estimate_tau, picard_best_effort, Domain, HammersteinError, HammersteinProblem, NystromSolution,
};

/// Largest coefficient dimension for which a degree is computed.
pub const MAX_DIMENSION: usize = 4;

#[derive(Debug, Error)]
pub enum DegreeError {
    #[error("field vanishes on the sampled boundary (min |F| = {min_field:e})")]
    BoundaryZero { min_field: f64 },
    #[error("dimension {0} exceeds the supported maximum of 4")]
    DimensionTooHigh(usize),
    #[error("fit errors exceed τ/3 = {budget:e}: kernel {kernel:e}, offset {offset:e}")]
    BudgetExceeded { budget: f64, kernel: f64, offset: f64 },
    #[error("τ estimate {0} is not positive")]
    TauNotPositive(f64),
    #[error("degenerate root with singular Jacobian near {0:?}")]
    DegenerateRoot(Vec<f64>),
    #[error("Jacobian sign sum {jacobian} disagrees with grid degree {grid}")]
    MethodsDisagree { jacobian: i64, grid: i64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(&'static str),
    #[error("degree {degree} is nonzero but no solution was found (best residual {residual:e})")]
    SolverInconsistent { degree: i64, residual: f64 },
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error(transparent)]
    Hammerstein(#[from] HammersteinError),
}

/// C(N+3, 3), the number of monomials in three variables of degree ≤ N.
pub fn basis_size(n: usize) -> usize {
    binomial(n + 3, 3)
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Monomials X^α with |α| ≤ N in graded lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonomialBasis {
    n: usize,
    vars: usize,
    multi_indices: Vec<[u32; 3]>,
}

impl MonomialBasis {
    /// Full basis in three variables.
    pub fn new(n: usize) -> Self {
        Self::with_vars(n, 3)
    }

    /// Basis in the first `vars` coordinates only; the rest carry exponent 0.
    pub fn with_vars(n: usize, vars: usize) -> Self {
        assert!((1..=3).contains(&vars));
        let mut multi_indices = Vec::new();
        for total in 0..=n as u32 {
            // graded lex: within a degree, larger leading exponents first
            for a in (0..=total).rev() {
                for b in (0..=total - a).rev() {
                    let c = total - a - b;
                    let alpha = [a, b, c];
                    if alpha[vars..].iter().all(|&e| e == 0) {
                        multi_indices.push(alpha);
                    }
                }
            }
        }
        Self { n, vars, multi_indices }
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn len(&self) -> usize {
        self.multi_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multi_indices.is_empty()
    }

    pub fn multi_indices(&self) -> &[[u32; 3]] {
        &self.multi_indices
    }

    /// X̃ = (X^α)_α.
    pub fn eval(&self, x: Point3) -> Vec<f64> {
        self.multi_indices
            .iter()
            .map(|a| x.x.powi(a[0] as i32) * x.y.powi(a[1] as i32) * x.z.powi(a[2] as i32))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialFit {
    pub coefficients: Vec<f64>,
    pub sup_error: f64,
}

/// Training and validation points per axis for a degree-N fit.
pub fn fit_resolution(n: usize, vars: usize) -> (usize, usize) {
    let train = (3 * (n + 1)).div_ceil(2) * 2;
    let valid = if vars == 3 { 4 * (n + 1) + 1 } else { 8 * (n + 1) + 1 };
    (train, valid.max(train + 1))
}

/// Least-squares fitter on a Chebyshev tensor grid, validated on a uniform
/// tensor grid that shares no points with it.
pub struct Fitter {
    basis: MonomialBasis,
    train: Vec<Point3>,
    valid: Vec<Point3>,
    pinv: DMatrix<f64>,
    valid_design: DMatrix<f64>,
}

fn tensor(axes: &[Vec<f64>], vars: usize, fixed: Point3) -> Vec<Point3> {
    let one = vec![0.0];
    let ax = |i: usize| if i < vars { &axes[i] } else { &one };
    let mut pts = Vec::new();
    for &a in ax(0) {
        for &b in ax(1) {
            for &c in ax(2) {
                let mut p = fixed;
                if vars > 0 {
                    p.x = a;
                }
                if vars > 1 {
                    p.y = b;
                }
                if vars > 2 {
                    p.z = c;
                }
                pts.push(p);
            }
        }
    }
    pts
}

impl Fitter {
    pub fn new(basis: MonomialBasis, lo: Point3, hi: Point3) -> Self {
        let vars = basis.vars();
        let (nt, nv) = fit_resolution(basis.degree(), vars);
        let cheb: Vec<Vec<f64>> = (0..3)
            .map(|a| {
                let (l, h) = (lo[a], hi[a]);
                (0..nt)
                    .map(|i| {
                        let t = (std::f64::consts::PI * (2 * i + 1) as f64 / (2 * nt) as f64).cos();
                        0.5 * (l + h) + 0.5 * (h - l) * t
                    })
                    .collect()
            })
            .collect();
        let uni: Vec<Vec<f64>> = (0..3)
            .map(|a| (0..nv).map(|i| lo[a] + (hi[a] - lo[a]) * i as f64 / (nv - 1) as f64).collect())
            .collect();
        let train = tensor(&cheb, vars, lo);
        let valid = tensor(&uni, vars, lo);
        let design = DMatrix::from_fn(train.len(), basis.len(), |i, j| basis.eval(train[i])[j]);
        let pinv = design.pseudo_inverse(1e-13).expect("pseudo-inverse");
        let valid_design = DMatrix::from_fn(valid.len(), basis.len(), |i, j| basis.eval(valid[i])[j]);
        Self { basis, train, valid, pinv, valid_design }
    }

    pub fn for_domain(n: usize, domain: &Domain) -> Self {
        let (lo, hi) = domain.bounds();
        Self::new(MonomialBasis::with_vars(n, domain.dim()), lo, hi)
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn points_per_axis(&self) -> (usize, usize) {
        fit_resolution(self.basis.degree(), self.basis.vars())
    }

    pub fn fit(&self, func: &(dyn Fn(Point3) -> f64 + Sync)) -> PolynomialFit {
        let b = DVector::from_iterator(self.train.len(), self.train.iter().map(|&x| func(x)));
        let c = &self.pinv * b;
        let approx = &self.valid_design * &c;
        let sup_error = self.valid.iter().zip(approx.iter()).fold(0.0f64, |m, (&x, a)| m.max((func(x) - a).abs()));
        PolynomialFit { coefficients: c.iter().copied().collect(), sup_error }
    }
}

/// Least-squares fit of `func` by polynomials of degree ≤ N over the bounding
/// box of `domain`, with the sup error measured on a disjoint denser grid.
pub fn fit_polynomial_approximation(func: &(dyn Fn(Point3) -> f64 + Sync), domain: &Domain, n: usize) -> PolynomialFit {
    Fitter::for_domain(n, domain).fit(func)
}

pub type PhiFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>, DegreeError> + Send + Sync>;

/// D ↦ φ(D) on the polytope Ω_{M,2} = {D : maxⱼ |rowⱼ·D| < M}.
#[derive(Clone)]
pub struct FiniteMap {
    rows: DMatrix<f64>,
    radius: f64,
    phi: PhiFn,
    target: Vec<f64>,
}

impl std::fmt::Debug for FiniteMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FiniteMap").field("dimension", &self.dimension()).field("radius", &self.radius).finish()
    }
}

impl FiniteMap {
    /// `rows` holds one constraint vector per row; it must have full column
    /// rank so that Ω_{M,2} is bounded.
    pub fn new(rows: DMatrix<f64>, radius: f64, phi: PhiFn, target: Vec<f64>) -> Result<Self, DegreeError> {
        let l = rows.ncols();
        if l == 0 || target.len() != l {
            return Err(DegreeError::InvalidMap("dimension mismatch".into()));
        }
        if !(radius > 0.0) {
            return Err(DegreeError::InvalidMap("radius must be positive".into()));
        }
        let sv = rows.clone().svd(false, false).singular_values;
        let top = sv.max();
        if rows.nrows() < l || sv.min() <= 1e-12 * top {
            return Err(DegreeError::InvalidMap("constraints do not bound the domain".into()));
        }
        Ok(Self { rows, radius, phi, target })
    }

    /// Ω = (−M, M)^L.
    pub fn on_box(dim: usize, radius: f64, phi: PhiFn) -> Result<Self, DegreeError> {
        Self::new(DMatrix::identity(dim, dim), radius, phi, vec![0.0; dim])
    }

    pub fn dimension(&self) -> usize {
        self.rows.ncols()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// g_N.
    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn phi(&self, d: &[f64]) -> Result<Vec<f64>, DegreeError> {
        (self.phi)(d)
    }

    /// maxⱼ |rowⱼ·D|.
    pub fn constraint(&self, d: &[f64]) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.rows.nrows() {
            let v: f64 = (0..d.len()).map(|a| self.rows[(j, a)] * d[a]).sum();
            m = m.max(v.abs());
        }
        m
    }

    /// t with t·u on the boundary of Ω.
    pub fn boundary_scale(&self, u: &[f64]) -> f64 {
        self.radius / self.constraint(u)
    }

    /// D − φ(D) − target.
    pub fn field(&self, d: &[f64], target: &[f64]) -> Result<Vec<f64>, DegreeError> {
        let p = self.phi(d)?;
        Ok(d.iter().zip(&p).zip(target).map(|((a, b), t)| a - b - t).collect())
    }
}

/// φ_α(D) = Σⱼ wⱼ C_α(Yⱼ) ψ(Yⱼ, X̃ⱼ·D), with `coeffs[(α, j)] = C_α(Yⱼ)`.
pub fn build_finite_map(
    p: &HammersteinProblem,
    coeffs: &DMatrix<f64>,
    basis: &MonomialBasis,
    target: Vec<f64>,
) -> Result<FiniteMap, DegreeError> {
    let nodes = p.domain().nodes().to_vec();
    let l = basis.len();
    if coeffs.nrows() != l || coeffs.ncols() != nodes.len() {
        return Err(DegreeError::InvalidMap("coefficient matrix shape".into()));
    }
    let rows = DMatrix::from_fn(nodes.len(), l, |j, a| basis.eval(nodes[j])[a]);
    let weighted = DMatrix::from_fn(l, nodes.len(), |a, j| coeffs[(a, j)] * p.domain().weights()[j]);
    let radius = p.radius();
    let q = p.clone();
    let rows_c = rows.clone();
    let phi: PhiFn = Arc::new(move |d: &[f64]| {
        let f = &rows_c * DVector::from_column_slice(d);
        let norm = f.amax();
        if !(norm <= radius * (1.0 + 1e-12)) {
            return Err(HammersteinError::RadiusExceeded { norm, radius }.into());
        }
        let s = DVector::from_iterator(nodes.len(), nodes.iter().zip(f.iter()).map(|(&y, &v)| q.psi(y, v)));
        Ok((&weighted * s).iter().copied().collect())
    });
    FiniteMap::new(rows, radius, phi, target)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DegreeMethod {
    BoundarySign1D,
    JacobianSignSum,
    GridHomotopy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeOutcome {
    pub degree: i64,
    pub method: DegreeMethod,
    pub cross_check: Option<i64>,
    pub roots: Vec<Vec<f64>>,
    pub boundary_samples: usize,
    pub boundary_min_field: f64,
    pub grid_cells_per_axis: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeOptions {
    pub seed: u64,
    pub starts_per_dim: usize,
    pub boundary_samples_per_dim: usize,
    /// Cells per axis for the piecewise-linear cross-check; `None` picks by dimension.
    pub grid_cells: Option<usize>,
}

impl Default for DegreeOptions {
    fn default() -> Self {
        Self { seed: 0, starts_per_dim: 64, boundary_samples_per_dim: 1000, grid_cells: None }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn random_direction(rng: &mut ChaCha8Rng, l: usize) -> Vec<f64> {
    loop {
        let u: Vec<f64> = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = norm(&u);
        if n > 1e-3 && n <= 1.0 {
            return u.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Degree of D − φ(D) on Ω_{M,2} at `target`, by dimension: boundary signs in
/// 1D, Jacobian sign sum with a grid cross-check for 2 ≤ L ≤ 4.
pub fn brouwer_degree(map: &FiniteMap, target: &[f64]) -> Result<DegreeOutcome, DegreeError> {
    brouwer_degree_with(map, target, &DegreeOptions::default())
}

pub fn brouwer_degree_with(map: &FiniteMap, target: &[f64], opts: &DegreeOptions) -> Result<DegreeOutcome, DegreeError> {
    let l = map.dimension();
    if l > MAX_DIMENSION {
        return Err(DegreeError::DimensionTooHigh(l));
    }
    if l == 1 {
        return degree_by_method(map, target, DegreeMethod::BoundarySign1D, opts);
    }
    let mut out = degree_by_method(map, target, DegreeMethod::JacobianSignSum, opts)?;
    let grid = degree_by_method(map, target, DegreeMethod::GridHomotopy, opts)?;
    if grid.degree != out.degree {
        return Err(DegreeError::MethodsDisagree { jacobian: out.degree, grid: grid.degree });
    }
    out.cross_check = Some(grid.degree);
    out.grid_cells_per_axis = grid.grid_cells_per_axis;
    Ok(out)
}

/// A single method, without cross-checking.
pub fn degree_by_method(
    map: &FiniteMap,
    target: &[f64],
    method: DegreeMethod,
    opts: &DegreeOptions,
) -> Result<DegreeOutcome, DegreeError> {
    let l = map.dimension();
    if l > MAX_DIMENSION {
        return Err(DegreeError::DimensionTooHigh(l));
    }
    if target.len() != l {
        return Err(DegreeError::InvalidMap("target dimension".into()));
    }
    let (samples, min_field) = check_boundary(map, target, opts)?;
    let mut out = DegreeOutcome {
        degree: 0,
        method,
        cross_check: None,
        roots: Vec::new(),
        boundary_samples: samples,
        boundary_min_field: min_field,
        grid_cells_per_axis: None,
    };
    match method {
        DegreeMethod::BoundarySign1D => {
            if l != 1 {
                return Err(DegreeError::InvalidMap("boundary sign count needs dimension 1".into()));
            }
            let b = map.boundary_scale(&[1.0]);
            let f = |d: f64| map.field(&[d], target).map(|v| v[0]);
            out.degree = degree_1d(f(-b)?, f(b)?);
        }
        DegreeMethod::JacobianSignSum => {
            let (degree, roots) = jacobian_sign_sum(map, target, opts)?;
            out.degree = degree;
            out.roots = roots;
        }
        DegreeMethod::GridHomotopy => {
            let cells = opts.grid_cells.unwrap_or(match l {
                1 => 256,
                2 => 64,
                3 => 20,
                _ => 9,
            });
            out.degree = grid_degree(map, target, cells)?;
            out.grid_cells_per_axis = Some(cells);
        }
    }
    Ok(out)
}

/// Degree of a continuous scalar field on (a, b) from its endpoint values.
pub fn degree_1d(fa: f64, fb: f64) -> i64 {
    let s = |v: f64| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 };
    (s(fb) - s(fa)) / 2
}

fn field_scale(map: &FiniteMap, target: &[f64]) -> f64 {
    let b = map.boundary_scale(&{
        let mut e = vec![0.0; map.dimension()];
        e[0] = 1.0;
        e
    });
    1.0 + b + norm(target)
}

fn check_boundary(map: &FiniteMap, target: &[f64], opts: &DegreeOptions) -> Result<(usize, f64), DegreeError> {
    let l = map.dimension();
    let dirs: Vec<Vec<f64>> = if l == 1 {
        vec![vec![1.0], vec![-1.0]]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xb0_0d);
        (0..opts.boundary_samples_per_dim * l).map(|_| random_direction(&mut rng, l)).collect()
    };
    let mins = dirs
        .par_iter()
        .map(|u| {
            let t = map.boundary_scale(u);
            let d: Vec<f64> = u.iter().map(|x| x * t).collect();
            map.field(&d, target).map(|f| norm(&f))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let min = mins.into_iter().fold(f64::INFINITY, f64::min);
    if !(min > 1e-9 * field_scale(map, target)) {
        return Err(DegreeError::BoundaryZero { min_field: min });
    }
    Ok((dirs.len(), min))
}

fn jacobian(map: &FiniteMap, target: &[f64], x: &[f64], h: f64) -> Result<DMatrix<f64>, DegreeError> {
    let l = x.len();
    let mut j = DMatrix::zeros(l, l);
    for c in 0..l {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[c] += h;
        xm[c] -= h;
        let fp = map.field(&xp, target);
        let fm = map.field(&xm, target);
        let (fp, fm, scale) = match (fp, fm) {
            (Ok(a), Ok(b)) => (a, b, 2.0 * h),
            (Ok(a), Err(_)) => (a, map.field(x, target)?, h),
            (Err(_), Ok(b)) => (map.field(x, target)?, b, h),
            (Err(e), Err(_)) => return Err(e),
        };
        for r in 0..l {
            j[(r, c)] = (fp[r] - fm[r]) / scale;
        }
    }
    Ok(j)
}

fn newton(map: &FiniteMap, target: &[f64], start: Vec<f64>, scale: f64, h: f64) -> Option<Vec<f64>> {
    let mut x = start;
    let mut f = map.field(&x, target).ok()?;
    let tol = 1e-12 * scale;
    for _ in 0..80 {
        let fn0 = norm(&f);
        if fn0 <= tol {
            return Some(x);
        }
        let j = jacobian(map, target, &x, h).ok()?;
        let step = j.lu().solve(&DVector::from_iterator(f.len(), f.iter().map(|v| -v)))?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + lambda * s).collect();
            if map.constraint(&trial) < map.radius() {
                if let Ok(ft) = map.field(&trial, target) {
                    if norm(&ft) < (1.0 - 1e-4 * lambda) * fn0 {
                        x = trial;
                        f = ft;
                        break;
                    }
                }
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                return None;
            }
        }
    }
    (norm(&f) <= tol).then_some(x)
}

fn jacobian_sign_sum(map: &FiniteMap, target: &[f64], opts: &DegreeOptions) -> Result<(i64, Vec<Vec<f64>>), DegreeError> {
    let l = map.dimension();
    let scale = field_scale(map, target);
    let h = 1e-6 * scale;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![vec![0.0; l]];
    for _ in 0..opts.starts_per_dim * l {
        let u = random_direction(&mut rng, l);
        let r = 0.98 * rng.random::<f64>().powf(1.0 / l as f64);
        let t = r * map.boundary_scale(&u);
        starts.push(u.into_iter().map(|x| x * t).collect());
    }
    let found: Vec<Option<Vec<f64>>> = starts.into_par_iter().map(|s| newton(map, target, s, scale, h)).collect();
    let mut roots: Vec<Vec<f64>> = Vec::new();
    for x in found.into_iter().flatten() {
        if map.constraint(&x) >= map.radius() * (1.0 - 1e-9) {
            continue;
        }
        if roots.iter().all(|r| norm(&r.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>()) > 1e-7 * scale) {
            roots.push(x);
        }
    }
    let mut degree = 0;
    for r in &roots {
        let j = jacobian(map, target, r, h)?;
        let det = j.determinant();
        let size = j.abs().max().max(1e-300);
        if det.abs() <= 1e-10 * size.powi(l as i32) {
            return Err(DegreeError::DegenerateRoot(r.clone()));
        }
        degree += det.signum() as i64;
    }
    Ok((degree, roots))
}

/// Piecewise-linear degree on a Kuhn triangulation of the cube [−1, 1]^L,
/// mapped onto Ω by the radial rescaling y ↦ y·‖y‖∞·M / maxⱼ|rowⱼ·y|.
fn grid_degree(map: &FiniteMap, target: &[f64], cells: usize) -> Result<i64, DegreeError> {
    let l = map.dimension();
    let n = cells + 1;
    let total = n.pow(l as u32);
    let h = 2.0 / cells as f64;
    let coords = |mut flat: usize| -> Vec<usize> {
        let mut c = vec![0; l];
        for a in (0..l).rev() {
            c[a] = flat % n;
            flat /= n;
        }
        c
    };
    let values = (0..total)
        .into_par_iter()
        .map(|flat| {
            let y: Vec<f64> = coords(flat).iter().map(|&i| -1.0 + i as f64 * h).collect();
            let c = map.constraint(&y);
            let d: Vec<f64> = if c == 0.0 {
                vec![0.0; l]
            } else {
                let s = y.iter().fold(0.0f64, |m, v| m.max(v.abs())) * map.radius() / c;
                y.iter().map(|v| v * s).collect()
            };
            map.field(&d, target)
        })
        .collect::<Result<Vec<Vec<f64>>, _>>()?;

    let scale = field_scale(map, target);
    // generic tiny offset so that no PL zero falls on a shared simplex face
    let shift: Vec<f64> = (0..l).map(|i| 1e-9 * scale * (1.0 + 0.377 * i as f64 + 0.0913 * (i * i) as f64)).collect();
    let perms = permutations(l);
    let cell_total = cells.pow(l as u32);
    let degree: i64 = (0..cell_total)
        .into_par_iter()
        .map(|cflat| {
            let mut corner = vec![0; l];
            let mut f = cflat;
            for a in (0..l).rev() {
                corner[a] = f % cells;
                f /= cells;
            }
            let mut sum = 0i64;
            for (perm, sign) in &perms {
                let mut v = corner.clone();
                let mut idx = Vec::with_capacity(l + 1);
                let flat_of = |v: &[usize]| v.iter().fold(0, |acc, &i| acc * n + i);
                idx.push(flat_of(&v));
                for &a in perm {
                    v[a] += 1;
                    idx.push(flat_of(&v));
                }
                sum += simplex_contribution(&values, &idx, &shift) * sign;
            }
            sum
        })
        .sum();
    Ok(degree)
}

fn simplex_contribution(values: &[Vec<f64>], idx: &[usize], shift: &[f64]) -> i64 {
    let l = shift.len();
    let g0 = &values[idx[0]];
    let m = DMatrix::from_fn(l, l, |r, c| values[idx[c + 1]][r] - g0[r]);
    let det = m.determinant();
    if det == 0.0 || !det.is_finite() {
        return 0;
    }
    let rhs = DVector::from_fn(l, |r, _| shift[r] - g0[r]);
    let Some(mu) = m.lu().solve(&rhs) else { return 0 };
    let lam0 = 1.0 - mu.sum();
    if lam0 >= 0.0 && mu.iter().all(|&v| v >= 0.0) {
        det.signum() as i64
    } else {
        0
    }
}

fn permutations(l: usize) -> Vec<(Vec<usize>, i64)> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; l], &mut out);
    out.into_iter()
        .map(|p| {
            let mut inv = 0;
            for i in 0..l {
                for j in i + 1..l {
                    if p[i] > p[j] {
                        inv += 1;
                    }
                }
            }
            (p, if inv % 2 == 0 { 1 } else { -1 })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeCertificate {
    pub degree: i64,
    pub tau_estimate: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub basis_dimension: usize,
    pub multi_indices: Vec<[u32; 3]>,
    /// sup|k − k_N|·sup|ψ|·m(Ω), the bound on ‖∫(k − k_N)ψ‖∞ compared with τ/3.
    pub sup_error_kernel: f64,
    pub sup_error_offset: f64,
    /// Raw sup|k − k_N| over validation points and nodes.
    pub kernel_fit_error: f64,
    pub psi_bound: f64,
    pub budget: f64,
    pub method: DegreeMethod,
    pub cross_check: Option<i64>,
    pub roots: Vec<Vec<f64>>,
    pub target: Vec<f64>,
    pub seed: u64,
    pub tau_samples: usize,
    pub nodes: usize,
    pub training_points_per_axis: usize,
    pub validation_points_per_axis: usize,
    pub boundary_samples: usize,
    pub boundary_min_field: f64,
    pub grid_cells_per_axis: Option<usize>,
}

impl DegreeCertificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serialises")
    }
}

/// max |ψ(Yⱼ, s)| over nodes and 201 values s ∈ [−M, M].
fn psi_bound(p: &HammersteinProblem) -> f64 {
    let m = p.radius();
    p.domain()
        .nodes()
        .par_iter()
        .map(|&y| (0..=200).map(|i| p.psi(y, -m + 2.0 * m * i as f64 / 200.0).abs()).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max)
}

/// Full reduction: τ estimate, degree-N fits within τ/3 each, finite map and
/// its Brouwer degree.
pub fn leray_schauder_degree(
    p: &HammersteinProblem,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<DegreeCertificate, DegreeError> {
    let tau = estimate_tau(p, samples, seed)?;
    if !(tau > 0.0) {
        return Err(DegreeError::TauNotPositive(tau));
    }
    let budget = tau / 3.0;
    let fitter = Fitter::for_domain(n, p.domain());
    let basis = fitter.basis().clone();
    let offset = p.offset_fn().clone();
    let g_fit = fitter.fit(&|x| offset(x));

    let kernel = p.kernel_fn().clone();
    let fits: Vec<PolynomialFit> =
        p.domain().nodes().par_iter().map(|&y| fitter.fit(&|x| kernel(x, y))).collect();
    let kernel_fit_error = fits.iter().fold(0.0f64, |m, f| m.max(f.sup_error));
    let psi_sup = psi_bound(p);
    let sup_error_kernel = kernel_fit_error * psi_sup * p.domain().measure();
    if sup_error_kernel > budget || g_fit.sup_error > budget {
        return Err(DegreeError::BudgetExceeded { budget, kernel: sup_error_kernel, offset: g_fit.sup_error });
    }
    let coeffs = DMatrix::from_fn(basis.len(), fits.len(), |a, j| fits[j].coefficients[a]);
    let map = build_finite_map(p, &coeffs, &basis, g_fit.coefficients.clone())?;
    let opts = DegreeOptions { seed, ..DegreeOptions::default() };
    let out = brouwer_degree_with(&map, &g_fit.coefficients, &opts)?;
    let (train, valid) = fitter.points_per_axis();
    Ok(DegreeCertificate {
        degree: out.degree,
        tau_estimate: tau,
        n,
        basis_dimension: basis.len(),
        multi_indices: basis.multi_indices().to_vec(),
        sup_error_kernel,
        sup_error_offset: g_fit.sup_error,
        kernel_fit_error,
        psi_bound: psi_sup,
        budget,
        method: out.method,
        cross_check: out.cross_check,
        roots: out.roots,
        target: g_fit.coefficients,
        seed,
        tau_samples: samples,
        nodes: p.domain().len(),
        training_points_per_axis: train,
        validation_points_per_axis: valid,
        boundary_samples: out.boundary_samples,
        boundary_min_field: out.boundary_min_field,
        grid_cells_per_axis: out.grid_cells_per_axis,
    })
}

/// Turns a nonzero degree into a numerical solution; failure to find one is an
/// inconsistency, not a silent miss.
pub fn existence_from_degree(
    cert: &DegreeCertificate,
    p: &HammersteinProblem,
    tol: f64,
) -> Result<NystromSolution, DegreeError> {
    if cert.degree == 0 {
        return Err(DegreeError::PreconditionViolated("degree is zero"));
    }
    match picard_best_effort(p, tol, 2000, cert.seed) {
        Ok(s) => Ok(s),
        Err(HammersteinError::MaxIterations { residual }) => {
            Err(DegreeError::SolverInconsistent { degree: cert.degree, residual })
        }
        Err(e) => Err(e.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hammerstein::{DomainSpec, KernelSpec, NonlinearitySpec, OffsetSpec, ProblemSpec};

    fn linear_phi(a: DMatrix<f64>) -> PhiFn {
        Arc::new(move |d: &[f64]| Ok((&a * DVector::from_column_slice(d)).iter().copied().collect()))
    }

    #[test]
    fn basis_sizes() {
        assert_eq!(basis_size(0), 1);
        assert_eq!(basis_size(2), 10);
        assert_eq!(basis_size(3), 20);
        for n in 0..6 {
            let b = MonomialBasis::new(n);
            assert_eq!(b.len(), basis_size(n));
            let mut sorted = b.multi_indices().to_vec();
            sorted.dedup();
            assert_eq!(sorted.len(), b.len());
            assert_eq!(MonomialBasis::with_vars(n, 1).len(), n + 1);
            assert_eq!(MonomialBasis::with_vars(n, 2).len(), (n + 1) * (n + 2) / 2);
        }
        assert_eq!(MonomialBasis::new(1).multi_indices(), &[[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]);
    }

    #[test]
    fn fits() {
        let d = Domain::interval(-1.0, 1.0, 5).unwrap();
        let poly = fit_polynomial_approximation(&|x: Point3| 1.0 - 2.0 * x.x + 0.5 * x.x.powi(3), &d, 3);
        assert!(poly.sup_error <= 1e-9);
        assert!((poly.coefficients[3] - 0.5).abs() < 1e-9);
        let e = fit_polynomial_approximation(&|x: Point3| x.x.exp(), &d, 4);
        assert!(e.sup_error <= 0.01, "{}", e.sup_error);
        let errs: Vec<f64> = (1..=4).map(|n| fit_polynomial_approximation(&|x: Point3| x.x.exp(), &d, n).sup_error).collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
        let sq = Domain::square(0.0, 1.0, 3).unwrap();
        let f = fit_polynomial_approximation(&|x: Point3| x.x * x.y - x.y * x.y, &sq, 2);
        assert!(f.sup_error <= 1e-9);
    }

    #[test]
    fn identity_and_negated_identity() {
        for l in 1..=4 {
            let map = FiniteMap::on_box(l, 1.0, linear_phi(DMatrix::zeros(l, l))).unwrap();
            assert_eq!(brouwer_degree(&map, &vec![0.0; l]).unwrap().degree, 1);
        }
        let map = FiniteMap::on_box(3, 1.0, linear_phi(DMatrix::identity(3, 3) * 2.0)).unwrap();
        let out = brouwer_degree(&map, &[0.0; 3]).unwrap();
        assert_eq!(out.degree, -1);
        assert_eq!(out.cross_check, Some(-1));
        let map = FiniteMap::on_box(5, 1.0, linear_phi(DMatrix::zeros(5, 5))).unwrap();
        assert!(matches!(brouwer_degree(&map, &[0.0; 5]), Err(DegreeError::DimensionTooHigh(5))));
    }

    #[test]
    fn one_dimensional_cases() {
        // d − φ(d) = d² − 1 on (−2, 2)
        let phi: PhiFn = Arc::new(|d: &[f64]| Ok(vec![d[0] - (d[0] * d[0] - 1.0)]));
        let map = FiniteMap::on_box(1, 2.0, phi).unwrap();
        assert_eq!(brouwer_degree(&map, &[0.0]).unwrap().degree, 0);
        // additivity over (−2, 0) and (0, 2)
        let f = |d: f64| d * d - 1.0;
        assert_eq!(degree_1d(f(-2.0), f(0.0)), -1);
        assert_eq!(degree_1d(f(0.0), f(2.0)), 1);
        // zero on the boundary
        let phi: PhiFn = Arc::new(|d: &[f64]| Ok(vec![d[0] - (d[0] * d[0] - 4.0)]));
        let map = FiniteMap::on_box(1, 2.0, phi).unwrap();
        assert!(matches!(brouwer_degree(&map, &[0.0]), Err(DegreeError::BoundaryZero { .. })));
    }

    #[test]
    fn one_dimensional_methods_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let opts = DegreeOptions::default();
        for _ in 0..20 {
            let c: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
            let phi: PhiFn = Arc::new(move |d: &[f64]| {
                let x = d[0];
                Ok(vec![x - (c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x)])
            });
            let map = FiniteMap::on_box(1, 1.3, phi).unwrap();
            let a = degree_by_method(&map, &[0.0], DegreeMethod::BoundarySign1D, &opts).unwrap();
            let b = degree_by_method(&map, &[0.0], DegreeMethod::JacobianSignSum, &opts).unwrap();
            let g = degree_by_method(&map, &[0.0], DegreeMethod::GridHomotopy, &opts).unwrap();
            assert_eq!(a.degree, b.degree);
            assert_eq!(a.degree, g.degree);
        }
    }

    #[test]
    fn two_dimensional_saddle_and_pair() {
        // F(x, y) = (x² − 0.25, y): zeros at (±0.5, 0) with opposite signs
        let phi: PhiFn = Arc::new(|d: &[f64]| Ok(vec![d[0] - (d[0] * d[0] - 0.25), 0.0]));
        let map = FiniteMap::on_box(2, 1.0, phi).unwrap();
        let out = brouwer_degree(&map, &[0.0, 0.0]).unwrap();
        assert_eq!(out.degree, 0);
        assert_eq!(out.roots.len(), 2);
        // complex squaring has degree 2 at a regular value
        let phi: PhiFn = Arc::new(|d: &[f64]| {
            let (x, y) = (d[0], d[1]);
            Ok(vec![x - (x * x - y * y), y - 2.0 * x * y])
        });
        let map = FiniteMap::on_box(2, 1.0, phi).unwrap();
        assert_eq!(brouwer_degree(&map, &[0.1, 0.05]).unwrap().degree, 2);
    }

    fn constant_problem(lambda: f64, g: f64, radius: f64) -> HammersteinProblem {
        ProblemSpec {
            domain: DomainSpec::Interval { a: 0.0, b: 1.0, n: 21 },
            kernel: KernelSpec::Constant { lambda },
            psi: NonlinearitySpec::Linear { slope: 1.0 },
            offset: OffsetSpec::Constant { value: g },
            radius,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn finite_map_examples() {
        let p = constant_problem(0.4, 0.3, 2.0);
        let basis = MonomialBasis::with_vars(0, 1);
        let coeffs = DMatrix::from_element(1, 21, 0.4);
        let map = build_finite_map(&p, &coeffs, &basis, vec![0.3]).unwrap();
        assert!((map.phi(&[1.0]).unwrap()[0] - 0.4).abs() < 1e-12);
        let fixed = 0.3 / (1.0 - 0.4);
        let sol = crate::hammerstein::picard_solve(&p, 1e-13, 200).unwrap();
        assert!((sol.values[0] - fixed).abs() < 1e-11);
        assert!(map.field(&[fixed], &[0.3]).unwrap()[0].abs() < 1e-12);
        assert!(matches!(map.phi(&[3.0]), Err(DegreeError::Hammerstein(HammersteinError::RadiusExceeded { .. }))));

        let zero = p.with_psi(Arc::new(|_, _| 0.0), 0.0).unwrap();
        let map = build_finite_map(&zero, &coeffs, &basis, vec![0.3]).unwrap();
        assert_eq!(map.phi(&[1.2]).unwrap(), vec![0.0]);

        let q = ProblemSpec {
            domain: DomainSpec::Interval { a: 0.0, b: 1.0, n: 15 },
            kernel: KernelSpec::Gaussian { amplitude: 0.5, length: 1.0 },
            psi: NonlinearitySpec::Linear { slope: 0.7 },
            offset: OffsetSpec::Constant { value: 0.0 },
            radius: 5.0,
        }
        .build()
        .unwrap();
        let basis = MonomialBasis::with_vars(2, 1);
        let coeffs = DMatrix::from_fn(3, 15, |a, j| (a + j) as f64 * 0.1);
        let map = build_finite_map(&q, &coeffs, &basis, vec![0.0; 3]).unwrap();
        let (u, v) = ([0.3, -0.2, 0.5], [-0.1, 0.4, 0.2]);
        let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 1.5 * a - 0.5 * b).collect();
        let (pu, pv, ps) = (map.phi(&u).unwrap(), map.phi(&v).unwrap(), map.phi(&sum).unwrap());
        for i in 0..3 {
            assert!((ps[i] - (1.5 * pu[i] - 0.5 * pv[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn leray_schauder_examples() {
        let p = constant_problem(0.3, 0.2, 1.0);
        let cert = leray_schauder_degree(&p, 0, 32, 4).unwrap();
        assert_eq!(cert.degree, 1);
        assert!(cert.sup_error_kernel <= cert.budget && cert.sup_error_offset <= cert.budget);
        let sol = existence_from_degree(&cert, &p, 1e-10).unwrap();
        let exact = crate::hammerstein::picard_solve(&p, 1e-12, 500).unwrap();
        assert!(sol.values.iter().zip(&exact.values).all(|(a, b)| (a - b).abs() < 1e-9));

        let zero = p.with_psi(Arc::new(|_, _| 0.0), 0.0).unwrap();
        for n in 0..3 {
            assert_eq!(leray_schauder_degree(&zero, n, 16, 1).unwrap().degree, 1);
        }

        let p = constant_problem(2.0, 0.0, 1.0);
        let cert = leray_schauder_degree(&p, 0, 32, 4).unwrap();
        assert_eq!(cert.degree, -1);
        let sol = existence_from_degree(&cert, &p, 1e-10).unwrap();
        assert!(sol.values.iter().all(|v| v.abs() < 1e-10));

        let mut zero_cert = cert.clone();
        zero_cert.degree = 0;
        assert!(matches!(existence_from_degree(&zero_cert, &p, 1e-10), Err(DegreeError::PreconditionViolated(_))));
        let back: DegreeCertificate = serde_json::from_str(&cert.to_json()).unwrap();
        assert_eq!(back, cert);
    }

    #[test]
    fn homotopy_invariance() {
        let base = ProblemSpec {
            domain: DomainSpec::Interval { a: 0.0, b: 1.0, n: 17 },
            kernel: KernelSpec::Gaussian { amplitude: 0.5, length: 1.0 },
            psi: NonlinearitySpec::Sine { amplitude: 0.5 },
            offset: OffsetSpec::Cosine { amplitude: 0.2, frequency: [2.0, 0.0, 0.0] },
            radius: 1.0,
        }
        .build()
        .unwrap();
        for eta in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let p = base.with_psi(Arc::new(move |_, s: f64| 0.5 * s.sin() + eta * 0.3 * s * s), 0.5 + eta * 0.6).unwrap();
            let cert = leray_schauder_degree(&p, 2, 32, 7).unwrap();
            assert_eq!(cert.degree, 1, "η = {eta}");
            assert_eq!(cert.cross_check, Some(1));
        }
    }

    #[test]
    fn deterministic_certificates() {
        let p = constant_problem(0.3, 0.2, 1.0);
        let a = leray_schauder_degree(&p, 1, 16, 11).unwrap();
        let b = leray_schauder_degree(&p, 1, 16, 11).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }
}
