//! Nyström discretisation of f = g + ∫ k(X,Y) ψ(Y, f(Y)) dY with Picard
//! iteration and a sampled estimate of the boundary gap τ.

use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point3, VolumeGrid};

pub type KernelFn = Arc<dyn Fn(Point3, Point3) -> f64 + Send + Sync>;
pub type NonlinearityFn = Arc<dyn Fn(Point3, f64) -> f64 + Send + Sync>;
pub type OffsetFn = Arc<dyn Fn(Point3) -> f64 + Send + Sync>;

/// Largest node count for which the weighted kernel matrix is cached.
const CACHE_LIMIT: usize = 2048;

#[derive(Debug, Error)]
pub enum HammersteinError {
    #[error("‖f‖∞ = {norm} exceeds the radius M = {radius}")]
    RadiusExceeded { norm: f64, radius: f64 },
    #[error("contraction bound {bound} is not below 1")]
    NoContraction { bound: f64 },
    #[error("no fixed point within tolerance; best residual {residual}")]
    MaxIterations { residual: f64 },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Quadrature nodes and weights over the physical domain.
#[derive(Clone, Debug, Serialize)]
pub struct Domain {
    nodes: Vec<Point3>,
    weights: Vec<f64>,
    dim: usize,
    lo: Point3,
    hi: Point3,
}

fn trapezoid(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (b - a) / (n - 1) as f64;
    let x = (0..n).map(|i| a + i as f64 * h).collect();
    let w = (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect();
    (x, w)
}

impl Domain {
    /// [a, b] on the x axis with `n` trapezoid nodes.
    pub fn interval(a: f64, b: f64, n: usize) -> Result<Self, HammersteinError> {
        if n < 2 || !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(HammersteinError::InvalidProblem("interval needs a < b and n ≥ 2".into()));
        }
        let (x, w) = trapezoid(a, b, n);
        Ok(Self {
            nodes: x.iter().map(|&x| Point3::new(x, 0.0, 0.0)).collect(),
            weights: w,
            dim: 1,
            lo: Point3::new(a, 0.0, 0.0),
            hi: Point3::new(b, 0.0, 0.0),
        })
    }

    /// [lo, hi]² in the xy plane with an n×n tensor trapezoid rule.
    pub fn square(lo: f64, hi: f64, n: usize) -> Result<Self, HammersteinError> {
        if n < 2 || !(hi > lo) {
            return Err(HammersteinError::InvalidProblem("square needs lo < hi and n ≥ 2".into()));
        }
        let (x, w) = trapezoid(lo, hi, n);
        let mut nodes = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                nodes.push(Point3::new(x[i], x[j], 0.0));
                weights.push(w[i] * w[j]);
            }
        }
        Ok(Self { nodes, weights, dim: 2, lo: Point3::new(lo, lo, 0.0), hi: Point3::new(hi, hi, 0.0) })
    }

    pub fn from_grid(grid: &VolumeGrid) -> Self {
        let (lo, hi) = grid.bounds();
        Self { nodes: grid.centers().to_vec(), weights: grid.weights().to_vec(), dim: 3, lo, hi }
    }

    pub fn nodes(&self) -> &[Point3] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of active coordinates (1: x, 2: x and y, 3: all).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> (Point3, Point3) {
        (self.lo, self.hi)
    }

    /// m(Ω) = Σ weights.
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Clone)]
pub struct HammersteinProblem {
    domain: Domain,
    kernel: KernelFn,
    psi: NonlinearityFn,
    lipschitz: f64,
    offset: OffsetFn,
    radius: f64,
    cache: Arc<OnceLock<Vec<f64>>>,
}

impl std::fmt::Debug for HammersteinProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HammersteinProblem")
            .field("nodes", &self.domain.len())
            .field("lipschitz", &self.lipschitz)
            .field("radius", &self.radius)
            .finish()
    }
}

impl HammersteinProblem {
    pub fn new(
        domain: Domain,
        kernel: KernelFn,
        psi: NonlinearityFn,
        lipschitz: f64,
        offset: OffsetFn,
        radius: f64,
    ) -> Result<Self, HammersteinError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(HammersteinError::InvalidProblem("radius must be positive".into()));
        }
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(HammersteinError::InvalidProblem("Lipschitz constant must be finite".into()));
        }
        if domain.is_empty() {
            return Err(HammersteinError::InvalidProblem("empty domain".into()));
        }
        let p = Self { domain, kernel, psi, lipschitz, offset, radius, cache: Arc::new(OnceLock::new()) };
        for (i, &y) in p.domain.nodes.iter().enumerate() {
            let ok = (p.offset)(y).is_finite()
                && [-radius, 0.0, radius].iter().all(|&s| (p.psi)(y, s).is_finite())
                && (p.kernel)(p.domain.nodes[0], y).is_finite();
            if !ok {
                return Err(HammersteinError::InvalidProblem(format!("non-finite data at node {i}")));
            }
        }
        Ok(p)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn kernel(&self, x: Point3, y: Point3) -> f64 {
        (self.kernel)(x, y)
    }

    pub fn psi(&self, y: Point3, s: f64) -> f64 {
        (self.psi)(y, s)
    }

    pub fn offset(&self, x: Point3) -> f64 {
        (self.offset)(x)
    }

    pub fn kernel_fn(&self) -> &KernelFn {
        &self.kernel
    }

    pub fn offset_fn(&self) -> &OffsetFn {
        &self.offset
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Same kernel and offset with a different nonlinearity.
    pub fn with_psi(&self, psi: NonlinearityFn, lipschitz: f64) -> Result<Self, HammersteinError> {
        Self::new(self.domain.clone(), self.kernel.clone(), psi, lipschitz, self.offset.clone(), self.radius)
    }

    pub fn with_offset(&self, offset: OffsetFn) -> Result<Self, HammersteinError> {
        let mut p = Self::new(self.domain.clone(), self.kernel.clone(), self.psi.clone(), self.lipschitz, offset, self.radius)?;
        p.cache = self.cache.clone();
        Ok(p)
    }

    pub fn offset_values(&self) -> Vec<f64> {
        self.domain.nodes.iter().map(|&x| (self.offset)(x)).collect()
    }

    /// sup|k| over node pairs.
    pub fn kernel_sup(&self) -> f64 {
        let nodes = &self.domain.nodes;
        nodes
            .par_iter()
            .map(|&x| nodes.iter().fold(0.0f64, |m, &y| m.max((self.kernel)(x, y).abs())))
            .reduce(|| 0.0, f64::max)
    }

    /// sup|k|·Lip(ψ)·m(Ω); below 1 the Picard map contracts.
    pub fn contraction_bound(&self) -> f64 {
        self.kernel_sup() * self.lipschitz * self.domain.measure()
    }

    fn weighted_kernel(&self) -> Option<&[f64]> {
        let n = self.domain.len();
        if n > CACHE_LIMIT {
            return None;
        }
        Some(self.cache.get_or_init(|| {
            let nodes = &self.domain.nodes;
            let w = &self.domain.weights;
            let mut m = vec![0.0; n * n];
            m.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                for j in 0..n {
                    row[j] = w[j] * (self.kernel)(nodes[i], nodes[j]);
                }
            });
            m
        }))
    }
}

/// (Tf)(Xᵢ) = Σⱼ wⱼ k(Xᵢ, Yⱼ) ψ(Yⱼ, fⱼ).
pub fn apply_operator(p: &HammersteinProblem, f: &[f64]) -> Result<Vec<f64>, HammersteinError> {
    let n = p.domain.len();
    if f.len() != n {
        return Err(HammersteinError::LengthMismatch { expected: n, got: f.len() });
    }
    let norm = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(norm <= p.radius * (1.0 + 1e-12)) {
        return Err(HammersteinError::RadiusExceeded { norm, radius: p.radius });
    }
    let nodes = &p.domain.nodes;
    let s: Vec<f64> = nodes.iter().zip(f).map(|(&y, &v)| (p.psi)(y, v)).collect();
    Ok(match p.weighted_kernel() {
        Some(m) => m.par_chunks(n).map(|row| row.iter().zip(&s).map(|(a, b)| a * b).sum()).collect(),
        None => nodes
            .par_iter()
            .map(|&x| nodes.iter().zip(&p.domain.weights).zip(&s).map(|((&y, w), sv)| w * (p.kernel)(x, y) * sv).sum())
            .collect(),
    })
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// ‖f − g − Tf‖∞ at the nodes.
pub fn residual(p: &HammersteinProblem, f: &[f64]) -> Result<f64, HammersteinError> {
    let tf = apply_operator(p, f)?;
    let g = p.offset_values();
    Ok(f.iter().zip(&g).zip(&tf).fold(0.0f64, |m, ((f, g), t)| m.max((f - g - t).abs())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NystromSolution {
    pub nodes: Vec<Point3>,
    pub values: Vec<f64>,
    pub residual_inf: f64,
    pub iterations: usize,
    /// Whether the contraction certificate held, making the fixed point unique in Ω_M.
    pub certified: bool,
}

/// Picard iteration f ← g + Tf under the contraction certificate.
pub fn picard_solve(p: &HammersteinProblem, tol: f64, max_iter: usize) -> Result<NystromSolution, HammersteinError> {
    picard_from(p, tol, max_iter, None)
}

/// As [`picard_solve`], starting from `initial` instead of g.
pub fn picard_from(
    p: &HammersteinProblem,
    tol: f64,
    max_iter: usize,
    initial: Option<&[f64]>,
) -> Result<NystromSolution, HammersteinError> {
    let bound = p.contraction_bound();
    if !(bound < 1.0) {
        return Err(HammersteinError::NoContraction { bound });
    }
    let g = p.offset_values();
    let mut f = initial.map(<[f64]>::to_vec).unwrap_or_else(|| g.clone());
    if f.len() != g.len() {
        return Err(HammersteinError::LengthMismatch { expected: g.len(), got: f.len() });
    }
    let mut last = f64::INFINITY;
    for it in 0..=max_iter {
        let tf = apply_operator(p, &f)?;
        let next: Vec<f64> = g.iter().zip(&tf).map(|(a, b)| a + b).collect();
        let r = sup_diff(&f, &next);
        last = r;
        if r <= tol {
            return Ok(NystromSolution {
                nodes: p.domain.nodes.clone(),
                values: f,
                residual_inf: r,
                iterations: it,
                certified: true,
            });
        }
        f = next;
    }
    Err(HammersteinError::MaxIterations { residual: last })
}

/// Relaxation factors tried by the best-effort solver.
const RELAXATIONS: [f64; 4] = [1.0, 0.5, 0.25, -0.5];

/// Multi-start relaxed Picard iteration f ← clamp((1−ω)f + ω(g + Tf)) without
/// requiring a contraction. Starts and factors are tried in a fixed order; the
/// first run reaching `tol` is returned.
pub fn picard_best_effort(
    p: &HammersteinProblem,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<NystromSolution, HammersteinError> {
    let n = p.domain.len();
    let m = p.radius;
    let g = p.offset_values();
    let mut starts: Vec<Vec<f64>> = vec![
        g.iter().map(|v| v.clamp(-m, m)).collect(),
        vec![0.0; n],
        vec![0.5 * m; n],
        vec![-0.5 * m; n],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..4 {
        starts.push((0..n).map(|_| rng.random_range(-0.9..0.9) * m).collect());
    }
    let certified = p.contraction_bound() < 1.0;
    let mut best = f64::INFINITY;
    for start in &starts {
        for &omega in &RELAXATIONS {
            let mut f = start.clone();
            for it in 0..=max_iter {
                let tf = apply_operator(p, &f)?;
                let image: Vec<f64> = g.iter().zip(&tf).map(|(a, b)| a + b).collect();
                let r = sup_diff(&f, &image);
                best = best.min(r);
                if r <= tol {
                    return Ok(NystromSolution {
                        nodes: p.domain.nodes.clone(),
                        values: f,
                        residual_inf: r,
                        iterations: it,
                        certified,
                    });
                }
                if !r.is_finite() {
                    break;
                }
                for (fi, im) in f.iter_mut().zip(&image) {
                    *fi = ((1.0 - omega) * *fi + omega * im).clamp(-m, m);
                }
            }
        }
    }
    Err(HammersteinError::MaxIterations { residual: best })
}

/// Sampled upper bound on τ = inf over ‖f‖∞ = M of ‖f − Tf − g‖∞.
///
/// Candidates: the constants ±M, ±M spikes at up to 64 evenly spread nodes,
/// and `samples` random node vectors rescaled to sup norm M.
pub fn estimate_tau(p: &HammersteinProblem, samples: usize, seed: u64) -> Result<f64, HammersteinError> {
    let n = p.domain.len();
    let m = p.radius;
    let mut candidates: Vec<Vec<f64>> = vec![vec![m; n], vec![-m; n]];
    let spikes = n.min(64);
    for s in 0..spikes {
        let i = s * (n - 1) / (spikes - 1).max(1);
        for sign in [1.0, -1.0] {
            let mut f = vec![0.0; n];
            f[i] = sign * m;
            candidates.push(f);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let mut f: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let top = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if top == 0.0 {
            continue;
        }
        f.iter_mut().for_each(|v| *v *= m / top);
        candidates.push(f);
    }
    let values = candidates.par_iter().map(|f| residual(p, f)).collect::<Result<Vec<f64>, _>>()?;
    Ok(values.into_iter().fold(f64::INFINITY, f64::min))
}

/// g(X) = u(X) − ∫ₐᵇ k(X,Y) ψ(Y, u(Y)) dY on an interval, integrated by
/// 64-panel Gauss–Legendre so that u solves the resulting equation exactly.
pub fn manufactured_offset(
    kernel: KernelFn,
    psi: NonlinearityFn,
    exact: Arc<dyn Fn(Point3) -> f64 + Send + Sync>,
    a: f64,
    b: f64,
) -> OffsetFn {
    let (gx, gw) = gauss_legendre_8();
    let panels = 64;
    let h = (b - a) / panels as f64;
    let mut pts = Vec::with_capacity(panels * 8);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (x, w) in gx.iter().zip(&gw) {
            pts.push((Point3::new(mid + 0.5 * h * x, 0.0, 0.0), 0.5 * h * w));
        }
    }
    let src: Vec<(Point3, f64)> = pts.iter().map(|&(y, w)| (y, w * psi(y, exact(y)))).collect();
    Arc::new(move |x| exact(x) - src.iter().map(|&(y, ws)| kernel(x, y) * ws).sum::<f64>())
}

pub(crate) fn gauss_legendre_8() -> ([f64; 8], [f64; 8]) {
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

/// Affine profile c + a·X used by separable kernels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Affine {
    pub constant: f64,
    #[serde(default)]
    pub gradient: [f64; 3],
}

impl Affine {
    fn eval(&self, x: Point3) -> f64 {
        self.constant + self.gradient[0] * x.x + self.gradient[1] * x.y + self.gradient[2] * x.z
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Constant { lambda: f64 },
    Separable { phi: Affine, chi: Affine },
    Gaussian { amplitude: f64, length: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearitySpec {
    /// ψ = slope·s.
    Linear { slope: f64 },
    /// ψ = linear·s + cubic·s³.
    Cubic { linear: f64, cubic: f64 },
    /// ψ = amplitude·tanh(s/scale).
    Saturating { amplitude: f64, scale: f64 },
    /// ψ = amplitude·sin(s).
    Sine { amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum OffsetSpec {
    Constant { value: f64 },
    /// amplitude·cos(frequency·X).
    Cosine { amplitude: f64, frequency: [f64; 3] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Interval { a: f64, b: f64, n: usize },
    Square { lo: f64, hi: f64, n: usize },
    Ball { radius: f64, n: usize },
}

/// Declarative problem description; only the built-in families are accepted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub domain: DomainSpec,
    pub kernel: KernelSpec,
    pub psi: NonlinearitySpec,
    pub offset: OffsetSpec,
    pub radius: f64,
}

impl KernelSpec {
    pub fn build(&self) -> Result<KernelFn, HammersteinError> {
        Ok(match *self {
            KernelSpec::Constant { lambda } => Arc::new(move |_, _| lambda),
            KernelSpec::Separable { phi, chi } => Arc::new(move |x, y| phi.eval(x) * chi.eval(y)),
            KernelSpec::Gaussian { amplitude, length } => {
                if !(length > 0.0) {
                    return Err(HammersteinError::InvalidProblem("kernel length must be positive".into()));
                }
                Arc::new(move |x: Point3, y: Point3| amplitude * (-(x - y).norm_squared() / (length * length)).exp())
            }
        })
    }
}

impl NonlinearitySpec {
    /// ψ and its Lipschitz constant on [−M, M].
    pub fn build(&self, radius: f64) -> Result<(NonlinearityFn, f64), HammersteinError> {
        Ok(match *self {
            NonlinearitySpec::Linear { slope } => (Arc::new(move |_, s| slope * s), slope.abs()),
            NonlinearitySpec::Cubic { linear, cubic } => {
                (Arc::new(move |_, s| linear * s + cubic * s * s * s), linear.abs() + 3.0 * cubic.abs() * radius * radius)
            }
            NonlinearitySpec::Saturating { amplitude, scale } => {
                if !(scale > 0.0) {
                    return Err(HammersteinError::InvalidProblem("saturation scale must be positive".into()));
                }
                (Arc::new(move |_, s| amplitude * (s / scale).tanh()), amplitude.abs() / scale)
            }
            NonlinearitySpec::Sine { amplitude } => (Arc::new(move |_, s: f64| amplitude * s.sin()), amplitude.abs()),
        })
    }
}

impl OffsetSpec {
    pub fn build(&self) -> OffsetFn {
        match *self {
            OffsetSpec::Constant { value } => Arc::new(move |_| value),
            OffsetSpec::Cosine { amplitude, frequency } => Arc::new(move |x: Point3| {
                amplitude * (frequency[0] * x.x + frequency[1] * x.y + frequency[2] * x.z).cos()
            }),
        }
    }
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain, HammersteinError> {
        match *self {
            DomainSpec::Interval { a, b, n } => Domain::interval(a, b, n),
            DomainSpec::Square { lo, hi, n } => Domain::square(lo, hi, n),
            DomainSpec::Ball { radius, n } => {
                let r = radius;
                let grid = VolumeGrid::from_indicator(Point3::new(-r, -r, -r), Point3::new(r, r, r), [n, n, n], |p| {
                    p.norm() < r
                })
                .map_err(|e| HammersteinError::InvalidProblem(e.to_string()))?;
                Ok(Domain::from_grid(&grid))
            }
        }
    }
}

impl ProblemSpec {
    pub fn build(&self) -> Result<HammersteinProblem, HammersteinError> {
        let (psi, lip) = self.psi.build(self.radius)?;
        HammersteinProblem::new(self.domain.build()?, self.kernel.build()?, psi, lip, self.offset.build(), self.radius)
    }
}

/// Observed convergence order from errors at successively halved spacings.
pub fn observed_order(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}


#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn constant_problem(lambda: f64, g: f64, radius: f64, n: usize) -> HammersteinProblem {
        ProblemSpec {
            domain: DomainSpec::Interval { a: 0.0, b: 1.0, n },
            kernel: KernelSpec::Constant { lambda },
            psi: NonlinearitySpec::Linear { slope: 1.0 },
            offset: OffsetSpec::Constant { value: g },
            radius,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn operator_closed_forms() {
        let p = constant_problem(0.7, 0.0, 2.0, 11);
        let tf = apply_operator(&p, &vec![1.0; 11]).unwrap();
        assert!(tf.iter().all(|v| (v - 0.7).abs() < 1e-12));
        let zero = p.with_psi(Arc::new(|_, _| 0.0), 0.0).unwrap();
        assert!(apply_operator(&zero, &vec![1.0; 11]).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(apply_operator(&p, &vec![3.0; 11]), Err(HammersteinError::RadiusExceeded { .. })));
    }

    #[test]
    fn separable_kernel_is_rank_one() {
        let spec = ProblemSpec {
            domain: DomainSpec::Interval { a: 0.0, b: 1.0, n: 21 },
            kernel: KernelSpec::Separable {
                phi: Affine { constant: 1.0, gradient: [2.0, 0.0, 0.0] },
                chi: Affine { constant: 0.5, gradient: [-1.0, 0.0, 0.0] },
            },
            psi: NonlinearitySpec::Cubic { linear: 1.0, cubic: 0.3 },
            offset: OffsetSpec::Constant { value: 0.0 },
            radius: 1.0,
        };
        let p = spec.build().unwrap();
        let f: Vec<f64> = p.domain().nodes().iter().map(|y| (3.0 * y.x).sin()).collect();
        let tf = apply_operator(&p, &f).unwrap();
        let scalar: f64 = p
            .domain()
            .nodes()
            .iter()
            .zip(p.domain().weights())
            .zip(&f)
            .map(|((y, w), &v)| w * (0.5 - y.x) * (v + 0.3 * v * v * v))
            .sum();
        for (x, t) in p.domain().nodes().iter().zip(&tf) {
            assert!((t - (1.0 + 2.0 * x.x) * scalar).abs() < 1e-12);
        }
    }

    #[test]
    fn geometric_series_fixed_point() {
        let p = constant_problem(0.5, 1.0, 3.0, 17);
        let sol = picard_solve(&p, 1e-12, 200).unwrap();
        assert!(sol.values.iter().all(|v| (v - 2.0).abs() < 1e-11));
        assert!(sol.certified);
    }

    #[test]
    fn zero_fixed_point_immediately() {
        let p = constant_problem(0.5, 0.0, 1.0, 9);
        let sol = picard_solve(&p, 1e-12, 10).unwrap();
        assert!(sol.iterations <= 1);
        assert!(sol.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn no_contraction_is_refused() {
        let p = constant_problem(2.0, 0.0, 1.0, 9);
        assert!(matches!(picard_solve(&p, 1e-10, 10), Err(HammersteinError::NoContraction { .. })));
        let sol = picard_best_effort(&p, 1e-10, 50, 0).unwrap();
        assert!(sol.values.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn unique_from_different_starts() {
        let spec = ProblemSpec {
            domain: DomainSpec::Interval { a: 0.0, b: 1.0, n: 33 },
            kernel: KernelSpec::Gaussian { amplitude: 0.6, length: 0.5 },
            psi: NonlinearitySpec::Sine { amplitude: 1.0 },
            offset: OffsetSpec::Cosine { amplitude: 0.5, frequency: [3.0, 0.0, 0.0] },
            radius: 2.0,
        };
        let p = spec.build().unwrap();
        let tol = 1e-11;
        let a = picard_from(&p, tol, 500, Some(&vec![1.5; 33])).unwrap();
        let b = picard_from(&p, tol, 500, Some(&vec![-1.5; 33])).unwrap();
        assert!(sup_diff(&a.values, &b.values) < 10.0 * tol);
    }

    #[test]
    fn manufactured_cosine_second_order() {
        let kernel = KernelSpec::Gaussian { amplitude: 0.8, length: 1.0 }.build().unwrap();
        let (psi, lip) = NonlinearitySpec::Sine { amplitude: 0.9 }.build(2.0).unwrap();
        let exact: Arc<dyn Fn(Point3) -> f64 + Send + Sync> = Arc::new(|x: Point3| (2.0 * x.x).cos());
        let g = manufactured_offset(kernel.clone(), psi.clone(), exact.clone(), 0.0, 1.0);
        let mut errors = Vec::new();
        for n in [9, 17, 33, 65] {
            let p = HammersteinProblem::new(Domain::interval(0.0, 1.0, n).unwrap(), kernel.clone(), psi.clone(), lip, g.clone(), 2.0)
                .unwrap();
            let sol = picard_solve(&p, 1e-13, 500).unwrap();
            errors.push(sol.values.iter().zip(p.domain().nodes()).map(|(v, x)| (v - exact(*x)).abs()).fold(0.0, f64::max));
        }
        for o in observed_order(&errors) {
            assert!(o >= 1.9, "{errors:?}");
        }
    }

    #[test]
    fn tau_estimates() {
        let p = constant_problem(0.0, 0.0, 1.5, 21);
        assert_eq!(estimate_tau(&p, 20, 1).unwrap(), 1.5);
        let q = 0.4;
        let p = constant_problem(q, 0.0, 1.0, 21);
        let t = estimate_tau(&p, 50, 2).unwrap();
        assert!(t >= (1.0 - q) * 0.99, "{t}");
        assert_eq!(t, estimate_tau(&p, 50, 2).unwrap());
    }

    #[test]
    fn spec_rejects_unknown_fields() {
        let ok = r#"{"domain":{"shape":"interval","a":0,"b":1,"n":5},"kernel":{"family":"constant","lambda":0.5},
            "psi":{"family":"linear","slope":1},"offset":{"family":"constant","value":1},"radius":3}"#;
        assert!(serde_json::from_str::<ProblemSpec>(ok).unwrap().build().is_ok());
        let bad = ok.replace("\"radius\"", "\"code\":\"x\",\"radius\"");
        assert!(serde_json::from_str::<ProblemSpec>(&bad).is_err());
    }

    #[test]
    fn ball_domain_measure() {
        let d = DomainSpec::Ball { radius: 1.0, n: 12 }.build().unwrap();
        assert!((d.measure() / (4.0 * PI / 3.0) - 1.0).abs() < 0.01);
        assert_eq!(d.dim(), 3);
    }
}
