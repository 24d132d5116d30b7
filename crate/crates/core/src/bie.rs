//! Dirichlet-to-Neumann completion on a closed surface.
//!
//! With u = S[A₅] + D′[A₁] + N[ψ] (Newton kernels), the interior normal
//! derivative of u is A₅, which gives the second-kind equation
//! (½I − K′)A₅ = ∂ₙD′[A₁] + ∂ₙN[ψ] with K′ the adjoint double layer.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point3, SurfaceMesh, VolumeGrid};
use crate::linalg::{self, DenseLu};
use crate::potentials::{self, BoundaryField, KernelConvention, PotentialError, Probe};

/// Condition estimates above this are treated as a degenerate mesh.
pub const MAX_CONDITION: f64 = 1e8;
/// Relative residual the Neumann solve must reach.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BieError {
    #[error("mesh must have at least 12 nodes (got {0})")]
    TooSmall(usize),
    #[error("Neumann matrix is ill-conditioned (estimate {estimate:.3e})")]
    IllConditioned { estimate: f64 },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("probe at distance {distance:.3e} from the surface is too close (needs > {spacing:.3e} and inside)")]
    SingularEvaluation { distance: f64, spacing: f64 },
    #[error("residual {0:.3e} above tolerance after refinement")]
    Residual(f64),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Nyström discretization of ½I − K′ on a mesh.
#[derive(Clone, Debug)]
pub struct NeumannSystem<'a> {
    mesh: &'a SurfaceMesh,
    matrix: Vec<f64>,
    lu: DenseLu,
    condition: f64,
    unit_flux: Vec<f64>,
}

impl<'a> NeumannSystem<'a> {
    pub fn mesh(&self) -> &'a SurfaceMesh {
        self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.len()
    }

    /// Entry (i, j), row-major.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dim() + j]
    }

    /// Row-major copy of the matrix.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// 1-norm condition estimate.
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    /// ∂ₙN[1] at every node: the interior normal derivative of the Newton
    /// potential of a unit source filling the domain.
    pub fn unit_source_flux(&self) -> &[f64] {
        &self.unit_flux
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        linalg::matvec(&self.matrix, self.dim(), x)
    }

    /// Solves the system with iterative refinement until the relative
    /// residual is below [`RESIDUAL_TOL`].
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, BieError> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(BieError::LengthMismatch { expected: n, got: rhs.len() });
        }
        let scale = rhs.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let mut x = self.lu.solve(rhs);
        if scale == 0.0 {
            return Ok(x);
        }
        for _ in 0..4 {
            let r: Vec<f64> = rhs.iter().zip(self.apply(&x)).map(|(b, ax)| b - ax).collect();
            let rel = r.iter().map(|v| v.abs()).fold(0.0, f64::max) / scale;
            if rel <= RESIDUAL_TOL * 1e-2 {
                return Ok(x);
            }
            let dx = self.lu.solve(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
        let rel = self.relative_residual(&x, rhs);
        if rel > RESIDUAL_TOL {
            return Err(BieError::Residual(rel));
        }
        Ok(x)
    }

    /// max|b − Mx| / max|b|.
    pub fn relative_residual(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let scale = rhs.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let r = rhs.iter().zip(self.apply(x)).map(|(b, ax)| (b - ax).abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            r
        } else {
            r / scale
        }
    }

    /// Right-hand side ∂ₙD′[A₁] + ∂ₙN[ψ] of the Neumann equation.
    pub fn rhs(&self, a1: &[f64], volume_source: Option<(&VolumeGrid, &[f64])>) -> Result<Vec<f64>, BieError> {
        let mut b = interior_normal_derivative_of_double_layer(self.mesh, a1)?;
        if let Some((grid, psi)) = volume_source {
            let flux = self.source_flux(grid, psi)?;
            for (bi, f) in b.iter_mut().zip(flux) {
                *bi += f;
            }
        }
        Ok(b)
    }

    /// ∂ₙN[ψ] at every node. The value ψ* of the cell nearest the node is
    /// split off and handled by the divergence identity
    /// ∂ₙN[1](P) = −n_P·∫ h(P − Y) n_Y dS_Y; the remainder is regular.
    pub fn source_flux(&self, grid: &VolumeGrid, psi: &[f64]) -> Result<Vec<f64>, BieError> {
        if psi.len() != grid.len() {
            return Err(BieError::LengthMismatch { expected: grid.len(), got: psi.len() });
        }
        let mesh = self.mesh;
        (0..mesh.len())
            .into_par_iter()
            .map(|i| {
                let p = mesh.nodes()[i];
                let star = psi[nearest_cell(grid, p)];
                let rest: Vec<f64> = psi.iter().map(|v| v - star).collect();
                let g = potentials::newton_gradient(grid, &rest, p)?;
                Ok(g.dot(mesh.normals()[i]) + star * self.unit_flux[i])
            })
            .collect()
    }
}

fn nearest_cell(grid: &VolumeGrid, p: Point3) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, y) in grid.centers().iter().enumerate() {
        let d = y.distance(p);
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}

/// Assembles ½I − K′ with K′ᵢⱼ = wⱼ ∇_X h(Pᵢ − Pⱼ)·nᵢ.
///
/// The excluded self-patch of node i contributes −ρᵢHᵢ/4, ρᵢ the radius of a
/// disk of area wᵢ and Hᵢ the discrete mean curvature.
pub fn assemble_neumann_system(mesh: &SurfaceMesh) -> Result<NeumannSystem<'_>, BieError> {
    let n = mesh.len();
    if n < 12 {
        return Err(BieError::TooSmall(n));
    }
    let nodes = mesh.nodes();
    let normals = mesh.normals();
    let weights = mesh.weights();
    let mut matrix = vec![0.0; n * n];
    matrix.par_chunks_exact_mut(n).enumerate().for_each(|(i, row)| {
        let (pi, ni) = (nodes[i], normals[i]);
        for j in 0..n {
            row[j] = if i == j {
                let self_patch = -potentials::patch_radius(mesh, i) * mesh.mean_curvature()[i] / 4.0;
                0.5 - self_patch
            } else {
                let r = pi - nodes[j];
                let r2 = r.norm_squared();
                weights[j] * r.dot(ni) / (4.0 * PI * r2 * r2.sqrt())
            };
        }
    });
    let lu = DenseLu::new(&matrix, n).ok_or(BieError::IllConditioned { estimate: f64::INFINITY })?;
    let condition = linalg::norm1(&matrix, n) * lu.inverse_norm1_estimate();
    if !(condition <= MAX_CONDITION) {
        return Err(BieError::IllConditioned { estimate: condition });
    }

    let unit_flux = (0..n)
        .into_par_iter()
        .map(|i| {
            let w = potentials::kernel_weights(mesh, Probe::Node(i), |x, p, nrm| nrm / (4.0 * PI * p.distance(x)))?;
            let total: Point3 = w.into_iter().sum();
            Ok(-total.dot(normals[i]))
        })
        .collect::<Result<Vec<f64>, PotentialError>>()?;

    Ok(NeumannSystem { mesh, matrix, lu, condition, unit_flux })
}

/// Interior normal derivative of D′[A₁] at every node.
///
/// The field along the inward normal is sampled at the node and at depths ε
/// and 2ε (ε = two mesh spacings) and differentiated with the one-sided
/// second-order stencil. Each sample subtracts A₁ at the node, using
/// D′[1] = 1 inside, so the density vanishes where the kernel is singular.
pub fn interior_normal_derivative_of_double_layer(mesh: &SurfaceMesh, a1: &[f64]) -> Result<Vec<f64>, BieError> {
    let n = mesh.len();
    if a1.len() != n {
        return Err(BieError::LengthMismatch { expected: n, got: a1.len() });
    }
    let eps = 2.0 * mesh.mean_spacing();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let shifted: Vec<f64> = a1.iter().map(|v| v - a1[i]).collect();
            let (p, nrm) = (mesh.nodes()[i], mesh.normals()[i]);
            let f0 = potentials::double_layer(mesh, &shifted, Probe::Node(i), KernelConvention::Newton)?;
            let f1 = potentials::double_layer(mesh, &shifted, p - nrm * eps, KernelConvention::Newton)?;
            let f2 = potentials::double_layer(mesh, &shifted, p - nrm * (2.0 * eps), KernelConvention::Newton)?;
            Ok((3.0 * f0 - 4.0 * f1 + f2) / (2.0 * eps))
        })
        .collect::<Result<Vec<f64>, PotentialError>>()
        .map_err(Into::into)
}

/// Neumann data A₅ from Dirichlet data A₁ and an optional volume source ψ₁.
pub fn solve_neumann_data(
    sys: &NeumannSystem<'_>,
    a1: &[f64],
    volume_source: Option<(&VolumeGrid, &[f64])>,
) -> Result<BoundaryField, BieError> {
    let rhs = sys.rhs(a1, volume_source)?;
    let a5 = sys.solve(&rhs)?;
    Ok(BoundaryField::new(a5)?)
}

/// Boundary data with the full ambient gradient recovered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletedBoundaryData {
    pub a1: BoundaryField,
    pub a2: BoundaryField,
    pub a3: BoundaryField,
    pub a4: BoundaryField,
    pub a5: BoundaryField,
    /// λ = A₅ − ∂A₁/∂n, the correction along the normal.
    pub lambda: BoundaryField,
}

/// Replaces the normal part of the supplied ambient gradient of A₁ by A₅:
/// (A₂, A₃, A₄) = ∇A₁ + λn with λ = A₅ − ∇A₁·n.
pub fn tangential_complete(
    mesh: &SurfaceMesh,
    a1: &[f64],
    a1_ambient_gradient: &[Point3],
    a5: &[f64],
) -> Result<CompletedBoundaryData, BieError> {
    let n = mesh.len();
    for len in [a1.len(), a1_ambient_gradient.len(), a5.len()] {
        if len != n {
            return Err(BieError::LengthMismatch { expected: n, got: len });
        }
    }
    let mut comps = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut lambda = vec![0.0; n];
    for i in 0..n {
        let (g, nrm) = (a1_ambient_gradient[i], mesh.normals()[i]);
        let l = a5[i] - g.dot(nrm);
        lambda[i] = l;
        for a in 0..3 {
            comps[a][i] = g[a] + l * nrm[a];
        }
    }
    let [a2, a3, a4] = comps;
    Ok(CompletedBoundaryData {
        a1: BoundaryField::new(a1.to_vec())?,
        a2: BoundaryField::new(a2)?,
        a3: BoundaryField::new(a3)?,
        a4: BoundaryField::new(a4)?,
        a5: BoundaryField::new(a5.to_vec())?,
        lambda: BoundaryField::new(lambda)?,
    })
}

/// Surface weights of the representation formula at an interior probe:
/// u(X) = Σ sⱼA₅ⱼ + Σ dⱼA₁ⱼ + N[ψ](X), with the double-layer weights adjusted
/// at the nearest node so that Σ dⱼ = 1 (the interior value of D′[1]).
#[derive(Clone, Debug)]
pub struct RepresentationWeights {
    pub single: Vec<f64>,
    pub double: Vec<f64>,
}

/// Gradient counterpart of [`RepresentationWeights`]; Σ ∇dⱼ = 0.
#[derive(Clone, Debug)]
pub struct RepresentationGradientWeights {
    pub single: Vec<Point3>,
    pub double: Vec<Point3>,
}

pub fn representation_weights(mesh: &SurfaceMesh, x: Point3) -> Result<RepresentationWeights, BieError> {
    let single = potentials::single_layer_weights(mesh, x, KernelConvention::Newton)?;
    let mut double = potentials::double_layer_weights(mesh, x, KernelConvention::Newton)?;
    let k = nearest_node(mesh, x);
    let total: f64 = double.iter().sum();
    double[k] += 1.0 - total;
    Ok(RepresentationWeights { single, double })
}

pub fn representation_gradient_weights(mesh: &SurfaceMesh, x: Point3) -> Result<RepresentationGradientWeights, BieError> {
    let single = potentials::single_layer_gradient_weights(mesh, x)?;
    let mut double = potentials::double_layer_gradient_weights(mesh, x)?;
    let k = nearest_node(mesh, x);
    let total: Point3 = double.iter().copied().sum();
    double[k] -= total;
    Ok(RepresentationGradientWeights { single, double })
}

fn nearest_node(mesh: &SurfaceMesh, x: Point3) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, p) in mesh.nodes().iter().enumerate() {
        let d = p.distance(x);
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

/// u(X) = S[A₅](X) + D′[A₁](X) + N[ψ₁](X) at an interior point more than one
/// mesh spacing from the surface.
pub fn evaluate_representation(
    mesh: &SurfaceMesh,
    grid: &VolumeGrid,
    a1: &[f64],
    a5: &[f64],
    psi1: &[f64],
    x: Point3,
) -> Result<f64, BieError> {
    let n = mesh.len();
    for len in [a1.len(), a5.len()] {
        if len != n {
            return Err(BieError::LengthMismatch { expected: n, got: len });
        }
    }
    let distance = mesh.distance(x);
    let spacing = mesh.mean_spacing();
    if distance <= spacing || mesh.winding_number(x) < 0.5 {
        return Err(BieError::SingularEvaluation { distance, spacing });
    }
    let w = representation_weights(mesh, x)?;
    let surface: f64 = w.single.iter().zip(a5).map(|(s, v)| s * v).sum::<f64>()
        + w.double.iter().zip(a1).map(|(d, v)| d * v).sum::<f64>();
    Ok(surface + potentials::newton_potential(grid, psi1, x)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_unit_sphere;

    fn rel_l2(mesh: &SurfaceMesh, got: &[f64], want: &[f64]) -> f64 {
        let w = mesh.weights();
        let num: f64 = got.iter().zip(want).zip(w).map(|((a, b), w)| w * (a - b).powi(2)).sum();
        let den: f64 = want.iter().zip(w).map(|(b, w)| w * b * b).sum();
        (num / den).sqrt()
    }

    #[test]
    fn diagonal_and_conditioning() {
        let m = make_unit_sphere(3);
        let sys = assemble_neumann_system(&m).unwrap();
        for i in 0..m.len() {
            let d = sys.entry(i, i);
            assert!(d > 0.25 && d < 0.75, "{d}");
        }
        assert!(sys.condition_estimate() < 100.0, "{}", sys.condition_estimate());
    }

    #[test]
    fn constant_data_has_zero_flux() {
        let m = make_unit_sphere(3);
        let sys = assemble_neumann_system(&m).unwrap();
        let a5 = solve_neumann_data(&sys, &vec![1.0; m.len()], None).unwrap();
        assert!(a5.iter().all(|v| v.abs() < 2e-2));
    }

    #[test]
    fn linear_and_quadratic_harmonics() {
        let m = make_unit_sphere(3);
        let sys = assemble_neumann_system(&m).unwrap();
        let z: Vec<f64> = m.nodes().iter().map(|p| p.z).collect();
        let a5 = solve_neumann_data(&sys, &z, None).unwrap();
        assert!(rel_l2(&m, &a5, &z) < 0.02);
        let q: Vec<f64> = m.nodes().iter().map(|p| p.z * p.z - 0.5 * (p.x * p.x + p.y * p.y)).collect();
        let a5 = solve_neumann_data(&sys, &q, None).unwrap();
        let want: Vec<f64> = q.iter().map(|v| 2.0 * v).collect();
        assert!(rel_l2(&m, &a5, &want) < 0.03);
    }

    #[test]
    fn homogeneous_solution_is_zero() {
        let m = make_unit_sphere(2);
        let sys = assemble_neumann_system(&m).unwrap();
        let x = sys.solve(&vec![0.0; m.len()]).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn permutation_equivalence() {
        let m = make_unit_sphere(1);
        let n = m.len();
        let perm: Vec<usize> = (0..n).map(|i| (i * 5 + 3) % n).collect();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let nodes: Vec<Point3> = perm.iter().map(|&o| m.nodes()[o]).collect();
        let tris: Vec<[usize; 3]> = m.triangles().iter().map(|t| t.map(|i| inv[i])).collect();
        let m2 = SurfaceMesh::with_normals(nodes.clone(), tris, nodes).unwrap();
        let a = assemble_neumann_system(&m).unwrap();
        let b = assemble_neumann_system(&m2).unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!((b.entry(i, j) - a.entry(perm[i], perm[j])).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn superposition() {
        let m = make_unit_sphere(2);
        let sys = assemble_neumann_system(&m).unwrap();
        let grid = VolumeGrid::from_mesh(&m, 8).unwrap();
        let f: Vec<f64> = m.nodes().iter().map(|p| p.x + p.y * p.z).collect();
        let g: Vec<f64> = m.nodes().iter().map(|p| 1.0 - p.z).collect();
        let s1: Vec<f64> = grid.centers().iter().map(|c| c.x).collect();
        let s2 = vec![1.0; grid.len()];
        let a = solve_neumann_data(&sys, &f, Some((&grid, &s1))).unwrap();
        let b = solve_neumann_data(&sys, &g, Some((&grid, &s2))).unwrap();
        let fg: Vec<f64> = f.iter().zip(&g).map(|(a, b)| 2.0 * a - b).collect();
        let s: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| 2.0 * a - b).collect();
        let c = solve_neumann_data(&sys, &fg, Some((&grid, &s))).unwrap();
        for i in 0..m.len() {
            assert!((c[i] - (2.0 * a[i] - b[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn completion_examples() {
        let m = make_unit_sphere(2);
        let a1: Vec<f64> = m.nodes().iter().map(|p| p.x).collect();
        let grad = vec![Point3::new(1.0, 0.0, 0.0); m.len()];
        let a5: Vec<f64> = m.normals().iter().map(|n| n.x).collect();
        let c = tangential_complete(&m, &a1, &grad, &a5).unwrap();
        for i in 0..m.len() {
            assert!((c.a2[i] - 1.0).abs() < 1e-14 && c.a3[i].abs() < 1e-14 && c.a4[i].abs() < 1e-14);
            assert!(c.lambda[i].abs() < 1e-14);
        }
        let a1: Vec<f64> = m.nodes().iter().map(|p| p.x * p.x).collect();
        let grad: Vec<Point3> = m.nodes().iter().map(|p| Point3::new(2.0 * p.x, 0.0, 0.0)).collect();
        let a5: Vec<f64> = m.nodes().iter().zip(m.normals()).map(|(p, n)| 2.0 * p.x * n.x).collect();
        let c = tangential_complete(&m, &a1, &grad, &a5).unwrap();
        for i in 0..m.len() {
            assert!((c.a2[i] - 2.0 * m.nodes()[i].x).abs() < 1e-14);
            assert!(c.lambda[i].abs() < 1e-14);
        }
        let zero = vec![0.0; m.len()];
        let c = tangential_complete(&m, &vec![3.0; m.len()], &vec![Point3::ZERO; m.len()], &zero).unwrap();
        assert!(c.a2.iter().chain(c.a3.iter()).chain(c.a4.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn representation_examples() {
        let m = make_unit_sphere(3);
        let grid = VolumeGrid::from_mesh(&m, 8).unwrap();
        let none = vec![0.0; grid.len()];
        let ones = vec![1.0; m.len()];
        let x = Point3::new(0.2, -0.1, 0.3);
        let u = evaluate_representation(&m, &grid, &ones, &vec![0.0; m.len()], &none, x).unwrap();
        assert!((u - 1.0).abs() < 0.02);
        let z: Vec<f64> = m.nodes().iter().map(|p| p.z).collect();
        let u = evaluate_representation(&m, &grid, &z, &z, &none, Point3::new(0.0, 0.0, 0.5)).unwrap();
        assert!((u - 0.5).abs() < 0.01, "{u}");
        let r = evaluate_representation(&m, &grid, &z, &z, &none, Point3::new(0.0, 0.0, 0.95));
        assert!(matches!(r, Err(BieError::SingularEvaluation { .. })));
    }

    #[test]
    fn poisson_ball_center() {
        let m = make_unit_sphere(3);
        let grid = VolumeGrid::from_mesh(&m, 16).unwrap();
        let ones = vec![1.0; grid.len()];
        let a5 = vec![-1.0 / 3.0; m.len()];
        let zero = vec![0.0; m.len()];
        let u = evaluate_representation(&m, &grid, &zero, &a5, &ones, Point3::new(1e-3, 2e-3, -1e-3)).unwrap();
        assert!((u - 1.0 / 6.0).abs() < 0.03 / 6.0, "{u}");
    }
}
