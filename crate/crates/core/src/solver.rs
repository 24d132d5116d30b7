//! Mollified fixed-point solver for −Δu = ψ₁(u, ∇u, X) with Dirichlet data.
//!
//! Each sweep mollifies the source, solves the Neumann equation for A₅ and
//! evaluates u = S[A₅] + D′[A₁] + N[s] and its gradient on the grid cells.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bie::{self, BieError, CompletedBoundaryData, NeumannSystem};
use crate::funcspace::{mollify, negative_norm, FuncSpaceError, GridFunction};
use crate::geometry::{Point3, SurfaceMesh, VolumeGrid};
use crate::potentials::{self, BoundaryField, PotentialError};

/// ψ₁(u, ∇u, X).
pub type SourceFn = Arc<dyn Fn(f64, Point3, Point3) -> f64 + Send + Sync>;

/// Default mollifier widths in units of the squared grid spacing.
pub const DEFAULT_SCHEDULE: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
/// Consecutive residual increases treated as divergence.
const GROWTH_LIMIT: usize = 3;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("contraction bound {bound:.3} is not below 1")]
    NoContraction { bound: f64 },
    #[error("residual grew {GROWTH_LIMIT} consecutive times")]
    DivergenceDetected { history: Box<SolveHistory> },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Bie(#[from] BieError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    FuncSpace(#[from] FuncSpaceError),
}

#[derive(Clone)]
pub struct SemilinearProblem<'a> {
    pub mesh: &'a SurfaceMesh,
    pub grid: &'a VolumeGrid,
    pub dirichlet: BoundaryField,
    /// Ambient gradient of the Dirichlet data, used to complete the boundary data.
    pub dirichlet_gradient: Option<Vec<Point3>>,
    pub psi1: SourceFn,
    /// Lipschitz constants of ψ₁ in u and in ∇u (max norm).
    pub lipschitz: [f64; 2],
    /// Fields are projected to [−M, M] after every sweep.
    pub bound: f64,
    /// Absolute mollifier widths, decreasing.
    pub epsilon_schedule: Vec<f64>,
    /// Order m₁ of the negative norm used for residuals.
    pub negative_order: u32,
    /// Iterate even without a contraction certificate.
    pub best_effort: bool,
    /// Cells closer than this many mesh spacings to the surface are blended
    /// linearly between the Dirichlet value and an interior probe.
    pub near_layer: f64,
}

impl<'a> SemilinearProblem<'a> {
    pub fn new(mesh: &'a SurfaceMesh, grid: &'a VolumeGrid, dirichlet: BoundaryField, psi1: SourceFn, lipschitz: [f64; 2], bound: f64) -> Self {
        let h = grid.spacing();
        let h2 = h.x.max(h.y).max(h.z).powi(2);
        Self {
            mesh,
            grid,
            dirichlet,
            dirichlet_gradient: None,
            psi1,
            lipschitz,
            bound,
            epsilon_schedule: DEFAULT_SCHEDULE.iter().map(|u| u * h2).collect(),
            negative_order: 1,
            best_effort: false,
            near_layer: 1.0,
        }
    }

    fn validate(&self) -> Result<(), SolverError> {
        let bad = |s: &str| Err(SolverError::InvalidProblem(s.into()));
        if self.dirichlet.len() != self.mesh.len() {
            return bad("Dirichlet data length differs from the mesh");
        }
        if self.dirichlet.iter().any(|v| !v.is_finite()) {
            return bad("Dirichlet data must be finite");
        }
        if !(self.bound > 0.0) {
            return bad("bound must be positive");
        }
        if self.epsilon_schedule.is_empty() || self.epsilon_schedule.iter().any(|&e| !(e > 0.0)) {
            return bad("schedule needs positive widths");
        }
        if self.epsilon_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return bad("schedule must be strictly decreasing");
        }
        if self.lipschitz.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("Lipschitz constants must be finite");
        }
        if let Some(g) = &self.dirichlet_gradient {
            if g.len() != self.mesh.len() {
                return bad("Dirichlet gradient length differs from the mesh");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateState {
    pub u: GridFunction,
    pub u_x: GridFunction,
    pub u_y: GridFunction,
    pub u_z: GridFunction,
    pub a5: BoundaryField,
    pub residual_negnorm: f64,
    pub residual_inf: f64,
    pub boundary: Option<CompletedBoundaryData>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub epsilon: f64,
    pub iter: usize,
    pub residual_inf: f64,
    pub residual_negnorm: f64,
    pub max_field: f64,
}

/// Distance of the converged iterate at one ε from the unmollified map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitRecord {
    pub epsilon: f64,
    pub residual_inf: f64,
    pub residual_negnorm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveHistory {
    pub iterations: Vec<IterationRecord>,
    pub limits: Vec<LimitRecord>,
    pub contraction_bound: f64,
    pub diverged: bool,
}

impl SolveHistory {
    /// CSV with columns epsilon, iter, residual_inf, residual_negnorm.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,iter,residual_inf,residual_negnorm\n");
        for r in &self.iterations {
            s.push_str(&format!("{:e},{},{:e},{:e}\n", r.epsilon, r.iter, r.residual_inf, r.residual_negnorm));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemilinearSolution {
    pub state: IterateState,
    pub values: Vec<f64>,
    pub gradients: Vec<Point3>,
    pub history: SolveHistory,
}

/// Probe used for each cell: u(x) = b + t·(u(probe) − b), ∇u(x) = ∇u(probe).
#[derive(Clone, Copy, Debug)]
struct CellProbe {
    point: Point3,
    blend: f64,
    boundary: f64,
}

struct Evaluator<'a> {
    grid: &'a VolumeGrid,
    probes: Vec<CellProbe>,
    single: Vec<Vec<f64>>,
    single_grad: Vec<Vec<Point3>>,
    base: Vec<f64>,
    base_grad: Vec<Point3>,
}

fn barycentric(p: Point3, a: Point3, b: Point3, c: Point3) -> [f64; 3] {
    let (v0, v1, v2) = (b - a, c - a, p - a);
    let (d00, d01, d11) = (v0.dot(v0), v0.dot(v1), v1.dot(v1));
    let (d20, d21) = (v2.dot(v0), v2.dot(v1));
    let den = d00 * d11 - d01 * d01;
    let v = (d11 * d20 - d01 * d21) / den;
    let w = (d00 * d21 - d01 * d20) / den;
    [1.0 - v - w, v, w]
}

impl<'a> Evaluator<'a> {
    fn new(mesh: &'a SurfaceMesh, grid: &'a VolumeGrid, a1: &[f64], near_layer: f64) -> Result<Self, SolverError> {
        let d0 = near_layer * mesh.mean_spacing();
        let probes: Vec<CellProbe> = grid
            .centers()
            .par_iter()
            .map(|&x| {
                let (q, t, d) = mesh.closest_point(x);
                let inside = mesh.winding_number(x) > 0.5;
                if inside && d >= d0 {
                    return CellProbe { point: x, blend: 1.0, boundary: 0.0 };
                }
                let tri = mesh.triangles()[t];
                let v = tri.map(|i| mesh.nodes()[i]);
                let l = barycentric(q, v[0], v[1], v[2]);
                let boundary = (0..3).map(|k| l[k] * a1[tri[k]]).sum();
                let n = mesh.triangle_normals()[t];
                let depth = if inside { d } else { 0.0 };
                CellProbe { point: q - n * d0, blend: depth / d0, boundary }
            })
            .collect();
        let weights = probes
            .par_iter()
            .map(|p| {
                let w = bie::representation_weights(mesh, p.point)?;
                let g = bie::representation_gradient_weights(mesh, p.point)?;
                let base: f64 = w.double.iter().zip(a1).map(|(d, v)| d * v).sum();
                let base_grad: Point3 = g.double.iter().zip(a1).map(|(d, &v)| *d * v).sum();
                Ok((w.single, g.single, base, base_grad))
            })
            .collect::<Result<Vec<_>, BieError>>()?;
        let mut ev = Evaluator { grid, probes, single: Vec::new(), single_grad: Vec::new(), base: Vec::new(), base_grad: Vec::new() };
        for (s, sg, b, bg) in weights {
            ev.single.push(s);
            ev.single_grad.push(sg);
            ev.base.push(b);
            ev.base_grad.push(bg);
        }
        Ok(ev)
    }

    fn evaluate(&self, a5: &[f64], source: &[f64]) -> Result<(Vec<f64>, Vec<Point3>), SolverError> {
        let out = (0..self.probes.len())
            .into_par_iter()
            .map(|c| {
                let p = self.probes[c];
                let u = self.single[c].iter().zip(a5).map(|(s, v)| s * v).sum::<f64>()
                    + self.base[c]
                    + potentials::newton_potential(self.grid, source, p.point)?;
                let g = self.single_grad[c].iter().zip(a5).map(|(s, &v)| *s * v).sum::<Point3>()
                    + self.base_grad[c]
                    + potentials::newton_gradient(self.grid, source, p.point)?;
                Ok((p.boundary + p.blend * (u - p.boundary), g))
            })
            .collect::<Result<Vec<_>, PotentialError>>()?;
        Ok(out.into_iter().unzip())
    }
}

/// (sup_X N[1](X), sup_X ∫|∇G(X − Y)| dY) over the cell centres.
pub fn newton_operator_norms(grid: &VolumeGrid) -> Result<(f64, f64), PotentialError> {
    let ones = vec![1.0; grid.len()];
    let four_pi = 4.0 * std::f64::consts::PI;
    grid.centers()
        .par_iter()
        .enumerate()
        .map(|(c, &x)| {
            let n = potentials::newton_potential(grid, &ones, x)?;
            let own = (3.0 * grid.weights()[c] / four_pi).cbrt();
            let g: f64 = grid
                .centers()
                .iter()
                .zip(grid.weights())
                .enumerate()
                .filter(|&(k, _)| k != c)
                .map(|(_, (&y, &w))| w / (four_pi * y.distance(x).powi(2)))
                .sum();
            Ok((n, g + own))
        })
        .try_reduce(|| (0.0, 0.0), |a, b| Ok((a.0.max(b.0), a.1.max(b.1))))
}

fn mollified(grid: &VolumeGrid, s: &[f64], eps: f64) -> Result<Vec<f64>, SolverError> {
    if eps == 0.0 {
        return Ok(s.to_vec());
    }
    let f = GridFunction::from_grid(grid, s)?;
    Ok(mollify(&f, eps)?.gather(grid)?)
}

fn sup(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0f64, |m, x| m.max(x.abs()))
}

struct Sweep {
    u: Vec<f64>,
    g: Vec<Point3>,
    a5: Vec<f64>,
}

/// Runs the ε schedule; within each width iterates until the sup-norm update
/// falls below `tol` or `max_iter` sweeps are spent.
pub fn solve_semilinear(p: &SemilinearProblem<'_>, tol: f64, max_iter: usize) -> Result<SemilinearSolution, SolverError> {
    p.validate()?;
    let (n_norm, g_norm) = newton_operator_norms(p.grid)?;
    let bound = p.lipschitz[0] * n_norm + p.lipschitz[1] * g_norm;
    if !(bound < 1.0) && !p.best_effort {
        return Err(SolverError::NoContraction { bound });
    }
    let sys = bie::assemble_neumann_system(p.mesh)?;
    let eval = Evaluator::new(p.mesh, p.grid, &p.dirichlet, p.near_layer)?;
    let m = p.bound;
    let cells = p.grid.len();
    let centers = p.grid.centers();

    let source_of = |u: &[f64], g: &[Point3]| -> Vec<f64> {
        (0..cells).into_par_iter().map(|c| (p.psi1)(u[c], g[c], centers[c])).collect()
    };
    let sweep = |u: &[f64], g: &[Point3], eps: f64, sys: &NeumannSystem<'_>| -> Result<Sweep, SolverError> {
        let s = mollified(p.grid, &source_of(u, g), eps)?;
        let a5 = bie::solve_neumann_data(sys, &p.dirichlet, Some((p.grid, &s)))?.into_inner();
        let (mut u, mut g) = eval.evaluate(&a5, &s)?;
        u.iter_mut().for_each(|v| *v = v.clamp(-m, m));
        g.iter_mut().for_each(|v| *v = Point3::new(v.x.clamp(-m, m), v.y.clamp(-m, m), v.z.clamp(-m, m)));
        Ok(Sweep { u, g, a5 })
    };
    let negnorm = |d: &[f64]| -> Result<f64, SolverError> {
        Ok(negative_norm(&GridFunction::from_grid(p.grid, d)?, p.negative_order))
    };

    let mut history = SolveHistory { contraction_bound: bound, ..SolveHistory::default() };
    let mut u = vec![0.0; cells];
    let mut g = vec![Point3::ZERO; cells];
    let mut a5 = vec![0.0; p.mesh.len()];
    let (mut last_inf, mut last_neg) = (f64::INFINITY, f64::INFINITY);
    let mut growth = 0;
    let mut prev = f64::INFINITY;
    for &eps in &p.epsilon_schedule {
        for iter in 0..max_iter {
            let next = sweep(&u, &g, eps, &sys)?;
            let du: Vec<f64> = next.u.iter().zip(&u).map(|(a, b)| a - b).collect();
            let dg = sup(next.g.iter().zip(&g).flat_map(|(a, b)| (*a - *b).to_array()));
            let residual_inf = sup(du.iter().copied()).max(dg);
            let residual_negnorm = negnorm(&du)?;
            let max_field = sup(next.u.iter().copied()).max(sup(next.g.iter().flat_map(|v| v.to_array())));
            assert!(max_field <= m, "projection violated");
            history.iterations.push(IterationRecord { epsilon: eps, iter, residual_inf, residual_negnorm, max_field });
            growth = if residual_inf > prev { growth + 1 } else { 0 };
            prev = residual_inf;
            if growth >= GROWTH_LIMIT || !residual_inf.is_finite() {
                history.diverged = true;
                return Err(SolverError::DivergenceDetected { history: Box::new(history) });
            }
            (u, g, a5) = (next.u, next.g, next.a5);
            (last_inf, last_neg) = (residual_inf, residual_negnorm);
            if residual_inf <= tol {
                break;
            }
        }
        let limit = sweep(&u, &g, 0.0, &sys)?;
        let du: Vec<f64> = limit.u.iter().zip(&u).map(|(a, b)| a - b).collect();
        let dg = sup(limit.g.iter().zip(&g).flat_map(|(a, b)| (*a - *b).to_array()));
        history.limits.push(LimitRecord {
            epsilon: eps,
            residual_inf: sup(du.iter().copied()).max(dg),
            residual_negnorm: negnorm(&du)?,
        });
    }

    let field = |v: Vec<f64>| GridFunction::from_grid(p.grid, &v);
    let boundary = match &p.dirichlet_gradient {
        Some(grad) => Some(bie::tangential_complete(p.mesh, &p.dirichlet, grad, &a5)?),
        None => None,
    };
    let state = IterateState {
        u: field(u.clone())?,
        u_x: field(g.iter().map(|v| v.x).collect())?,
        u_y: field(g.iter().map(|v| v.y).collect())?,
        u_z: field(g.iter().map(|v| v.z).collect())?,
        a5: BoundaryField::new(a5)?,
        residual_negnorm: last_neg,
        residual_inf: last_inf,
        boundary,
    };
    Ok(SemilinearSolution { state, values: u, gradients: g, history })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub iterations: usize,
    pub residual_inf: f64,
    pub residual_negnorm: f64,
    /// ‖Z_ε − T₀(Z_ε)‖ in the negative norm.
    pub limit_residual_negnorm: Option<f64>,
    pub contraction_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub diverged: bool,
    /// Limit residuals nonincreasing along the schedule, with 5% slack per step.
    pub tail_nonincreasing: bool,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        let mut s = String::from("epsilon,iterations,residual_inf,residual_negnorm,limit_residual_negnorm,contraction_ratio\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:e},{},{:e},{:e},{},{}\n",
                r.epsilon,
                r.iterations,
                r.residual_inf,
                r.residual_negnorm,
                opt(r.limit_residual_negnorm),
                opt(r.contraction_ratio)
            ));
        }
        s
    }
}

/// One row per ε with the final update, the distance to the unmollified map
/// and the geometric-mean ratio of successive updates.
pub fn convergence_report(history: &SolveHistory) -> ConvergenceTable {
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    let mut i = 0;
    let its = &history.iterations;
    while i < its.len() {
        let eps = its[i].epsilon;
        let mut j = i;
        while j < its.len() && its[j].epsilon == eps {
            j += 1;
        }
        let run = &its[i..j];
        let ratios: Vec<f64> = run
            .windows(2)
            .filter(|w| w[0].residual_inf > 0.0 && w[1].residual_inf > 0.0)
            .map(|w| w[1].residual_inf / w[0].residual_inf)
            .collect();
        let ratio = (!ratios.is_empty()).then(|| ratios.iter().map(|r| r.ln()).sum::<f64>().exp().powf(1.0 / ratios.len() as f64));
        let last = run.last().expect("nonempty run");
        rows.push(ConvergenceRow {
            epsilon: eps,
            iterations: run.len(),
            residual_inf: last.residual_inf,
            residual_negnorm: last.residual_negnorm,
            limit_residual_negnorm: history.limits.iter().find(|l| l.epsilon == eps).map(|l| l.residual_negnorm),
            contraction_ratio: ratio,
        });
        i = j;
    }
    let limits: Vec<f64> = rows.iter().filter_map(|r| r.limit_residual_negnorm).collect();
    let tail_nonincreasing = limits.windows(2).all(|w| w[1] <= 1.05 * w[0] + 1e-14);
    ConvergenceTable { rows, diverged: history.diverged, tail_nonincreasing }
}
