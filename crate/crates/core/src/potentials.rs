//! Newtonian kernels on a triangulated surface: solid angles, single and
//! double layer potentials, their gradients, and the volume (Newton) potential.
//!
//! Surface integrals use the vertex rule. For off-surface probes, triangles
//! whose centroid lies within three mesh spacings are re-integrated against
//! the piecewise-linear hat functions on the flat facet, by adaptive
//! subdivision. At a node, weakly singular kernels use the same flat near
//! field; kernels carrying the normal use a curvature self-patch instead.

use std::f64::consts::PI;
use std::ops::{AddAssign, Deref, Mul};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point3, SurfaceMesh, VolumeGrid};

const FOUR_PI: f64 = 4.0 * PI;
const COINCIDENT: f64 = 1e-12;
const NEAR_SPACINGS: f64 = 3.0;
const MAX_DEPTH: u32 = 7;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("probe coincides with node {node}; use a principal-value probe")]
    SingularEvaluation { node: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("node index {0} out of range")]
    NodeOutOfRange(usize),
    #[error("value at index {0} is not finite")]
    NonFinite(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Normalization of the fundamental solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelConvention {
    /// 1/r, with solid-angle constants −4π, −2π, 0.
    Unnormalized,
    /// h = 1/(4πr), with jump constants ±½.
    Newton,
}

/// Where a surface integral is evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Probe {
    /// Off-surface point; must not coincide with a node.
    Point(Point3),
    /// Principal value at a mesh node: its own weight is excluded.
    Node(usize),
}

impl From<Point3> for Probe {
    fn from(p: Point3) -> Self {
        Probe::Point(p)
    }
}

/// Per-node values on a mesh (densities, Dirichlet or Neumann data).
/// Serialized as a plain JSON array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BoundaryField(Vec<f64>);

impl BoundaryField {
    pub fn new(values: Vec<f64>) -> Result<Self, PotentialError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(PotentialError::NonFinite(i));
        }
        Ok(Self(values))
    }

    /// Field checked against the node count of `mesh`.
    pub fn for_mesh(mesh: &SurfaceMesh, values: Vec<f64>) -> Result<Self, PotentialError> {
        if values.len() != mesh.len() {
            return Err(PotentialError::LengthMismatch { expected: mesh.len(), got: values.len() });
        }
        Self::new(values)
    }

    /// Samples `f(node, normal)` at every node.
    pub fn from_fn(mesh: &SurfaceMesh, f: impl Fn(Point3, Point3) -> f64) -> Self {
        Self(mesh.nodes().iter().zip(mesh.normals()).map(|(&p, &n)| f(p, n)).collect())
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PotentialError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PotentialError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for BoundaryField {
    type Error = PotentialError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<BoundaryField> for Vec<f64> {
    fn from(f: BoundaryField) -> Self {
        f.0
    }
}

impl Deref for BoundaryField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for BoundaryField {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Values a kernel may return: scalars or vectors.
pub trait KernelValue: Copy + Default + AddAssign + Mul<f64, Output = Self> + Send + Sync {}
impl KernelValue for f64 {}
impl KernelValue for Point3 {}

/// Quadrature weights `W` such that ∫ K(X, P, n_P) v(P) dS ≈ Σⱼ Wⱼ vⱼ.
///
/// The kernel receives the probe, the source point and the normal there (the
/// node normal in the vertex rule, the facet normal in the near field).
pub fn kernel_weights<T: KernelValue>(
    mesh: &SurfaceMesh,
    probe: Probe,
    kernel: impl Fn(Point3, Point3, Point3) -> T,
) -> Result<Vec<T>, PotentialError> {
    let (x, own) = resolve_probe(mesh, probe)?;
    let nodes = mesh.nodes();
    let normals = mesh.normals();
    let mut w: Vec<T> = mesh
        .weights()
        .iter()
        .enumerate()
        .map(|(j, &wj)| if Some(j) == own { T::default() } else { kernel(x, nodes[j], normals[j]) * wj })
        .collect();

    let radius = NEAR_SPACINGS * mesh.mean_spacing();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if mesh.triangle_centroids()[t].distance(x) >= radius {
            continue;
        }
        let third = mesh.triangle_areas()[t] / 3.0;
        for &a in tri {
            if Some(a) != own {
                w[a] += kernel(x, nodes[a], normals[a]) * -third;
            }
        }
        let exact = facet_integral(x, tri.map(|i| nodes[i]), mesh.triangle_normals()[t], &kernel);
        for (k, &a) in tri.iter().enumerate() {
            w[a] += exact[k];
        }
    }
    Ok(w)
}

/// Principal-value weights at node `i` for kernels carrying the source normal.
///
/// Flat facets through a node miss the curvature of the surface they
/// approximate, so the excluded self-patch is instead replaced by `patch`, the
/// kernel integrated over a geodesic disk of area wᵢ on a surface of the local
/// mean curvature. The rest of the surface uses the plain vertex rule.
pub fn kernel_weights_with_patch<T: KernelValue>(
    mesh: &SurfaceMesh,
    i: usize,
    kernel: impl Fn(Point3, Point3, Point3) -> T,
    patch: T,
) -> Result<Vec<T>, PotentialError> {
    let x = *mesh.nodes().get(i).ok_or(PotentialError::NodeOutOfRange(i))?;
    let nodes = mesh.nodes();
    let normals = mesh.normals();
    Ok(mesh
        .weights()
        .iter()
        .enumerate()
        .map(|(j, &wj)| if j == i { patch } else { kernel(x, nodes[j], normals[j]) * wj })
        .collect())
}

/// Radius of the disk with the area of node `i`'s weight.
pub fn patch_radius(mesh: &SurfaceMesh, i: usize) -> f64 {
    (mesh.weights()[i] / PI).sqrt()
}

fn resolve_probe(mesh: &SurfaceMesh, probe: Probe) -> Result<(Point3, Option<usize>), PotentialError> {
    match probe {
        Probe::Node(i) => {
            let p = *mesh.nodes().get(i).ok_or(PotentialError::NodeOutOfRange(i))?;
            Ok((p, Some(i)))
        }
        Probe::Point(x) => match mesh.node_at(x, COINCIDENT) {
            Some(node) => Err(PotentialError::SingularEvaluation { node }),
            None => Ok((x, None)),
        },
    }
}

/// ∫_T K φₐ dS for the three hat functions of a flat triangle.
fn facet_integral<T: KernelValue>(
    x: Point3,
    v: [Point3; 3],
    normal: Point3,
    kernel: &impl Fn(Point3, Point3, Point3) -> T,
) -> [T; 3] {
    let bary = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut out = [T::default(); 3];
    subdivide(x, v, bary, normal, kernel, 0, &mut out);
    out
}

fn subdivide<T: KernelValue>(
    x: Point3,
    v: [Point3; 3],
    b: [[f64; 3]; 3],
    normal: Point3,
    kernel: &impl Fn(Point3, Point3, Point3) -> T,
    depth: u32,
    out: &mut [T; 3],
) {
    let size = v[0].distance(v[1]).max(v[1].distance(v[2])).max(v[2].distance(v[0]));
    let centroid = (v[0] + v[1] + v[2]) / 3.0;
    let mid = |i: usize, j: usize| {
        ((v[i] + v[j]) * 0.5, [0, 1, 2].map(|k| 0.5 * (b[i][k] + b[j][k])))
    };
    let (m01, m12, m20) = (mid(0, 1), mid(1, 2), mid(2, 0));
    if depth >= MAX_DEPTH || size < 0.5 * centroid.distance(x) {
        let area = 0.5 * (v[1] - v[0]).cross(v[2] - v[0]).norm();
        for (p, hats) in [m01, m12, m20] {
            let k = kernel(x, p, normal) * (area / 3.0);
            for a in 0..3 {
                out[a] += k * hats[a];
            }
        }
        return;
    }
    let children = [
        ([v[0], m01.0, m20.0], [b[0], m01.1, m20.1]),
        ([m01.0, v[1], m12.0], [m01.1, b[1], m12.1]),
        ([m20.0, m12.0, v[2]], [m20.1, m12.1, b[2]]),
        ([m01.0, m12.0, m20.0], [m01.1, m12.1, m20.1]),
    ];
    for (cv, cb) in children {
        subdivide(x, cv, cb, normal, kernel, depth + 1, out);
    }
}

fn dot(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn check_len(mesh: &SurfaceMesh, v: &[f64]) -> Result<(), PotentialError> {
    if v.len() != mesh.len() {
        return Err(PotentialError::LengthMismatch { expected: mesh.len(), got: v.len() });
    }
    Ok(())
}

#[inline]
fn gauss_kernel(x: Point3, p: Point3, n: Point3) -> f64 {
    let r = p - x;
    let r2 = r.norm_squared();
    -r.dot(n) / (r2 * r2.sqrt())
}

/// Gauss integral ∫ ∂(1/r)/∂n_P dS: −4π inside, −2π at a node (principal value), 0 outside.
pub fn solid_angle(mesh: &SurfaceMesh, x: impl Into<Probe>) -> Result<f64, PotentialError> {
    Ok(gauss_weights(mesh, x.into(), 1.0, false)?.iter().sum())
}

/// Weights of `scale`·∂(1/r)/∂n_P (or its absolute value). On a smooth surface
/// the kernel behaves like −H/(2r) near the probe, so the self-patch is −πρH.
fn gauss_weights(mesh: &SurfaceMesh, probe: Probe, scale: f64, absolute: bool) -> Result<Vec<f64>, PotentialError> {
    let k = move |x: Point3, p: Point3, n: Point3| {
        let v = gauss_kernel(x, p, n);
        scale * if absolute { v.abs() } else { v }
    };
    match probe {
        Probe::Node(i) => {
            let h = *mesh.mean_curvature().get(i).ok_or(PotentialError::NodeOutOfRange(i))?;
            let patch = -PI * patch_radius(mesh, i) * h;
            kernel_weights_with_patch(mesh, i, k, scale * if absolute { patch.abs() } else { patch })
        }
        Probe::Point(_) => kernel_weights(mesh, probe, k),
    }
}

/// ∫ |r·n_P| / r³ dS, the Lyapunov bound on the solid angle.
pub fn absolute_solid_angle(mesh: &SurfaceMesh, x: impl Into<Probe>) -> Result<f64, PotentialError> {
    Ok(gauss_weights(mesh, x.into(), 1.0, true)?.iter().sum())
}

/// Per-node weights of the single layer at `probe`.
pub fn single_layer_weights(
    mesh: &SurfaceMesh,
    probe: impl Into<Probe>,
    conv: KernelConvention,
) -> Result<Vec<f64>, PotentialError> {
    let scale = match conv {
        KernelConvention::Unnormalized => 1.0,
        KernelConvention::Newton => 1.0 / FOUR_PI,
    };
    kernel_weights(mesh, probe.into(), |x, p, _| scale / p.distance(x))
}

/// Per-node weights of the double layer at `probe`.
///
/// Unnormalized: ∂(1/r)/∂n_P. Newton: ∇_X h(X − P)·n_P, which is the
/// unnormalized kernel times −1/(4π).
pub fn double_layer_weights(
    mesh: &SurfaceMesh,
    probe: impl Into<Probe>,
    conv: KernelConvention,
) -> Result<Vec<f64>, PotentialError> {
    let scale = match conv {
        KernelConvention::Unnormalized => 1.0,
        KernelConvention::Newton => -1.0 / FOUR_PI,
    };
    gauss_weights(mesh, probe.into(), scale, false)
}

/// Weights of ∇_X of the Newton single layer.
pub fn single_layer_gradient_weights(mesh: &SurfaceMesh, probe: impl Into<Probe>) -> Result<Vec<Point3>, PotentialError> {
    kernel_weights(mesh, probe.into(), |x, p, _| {
        let r = p - x;
        let r2 = r.norm_squared();
        r / (FOUR_PI * r2 * r2.sqrt())
    })
}

/// Weights of ∇_X of the Newton double layer.
pub fn double_layer_gradient_weights(mesh: &SurfaceMesh, probe: impl Into<Probe>) -> Result<Vec<Point3>, PotentialError> {
    kernel_weights(mesh, probe.into(), |x, p, n| {
        let r = p - x;
        let r2 = r.norm_squared();
        let r3 = r2 * r2.sqrt();
        (n * -1.0 + r * (3.0 * r.dot(n) / r2)) / (FOUR_PI * r3)
    })
}

pub fn single_layer(
    mesh: &SurfaceMesh,
    v: &[f64],
    x: impl Into<Probe>,
    conv: KernelConvention,
) -> Result<f64, PotentialError> {
    check_len(mesh, v)?;
    Ok(dot(&single_layer_weights(mesh, x, conv)?, v))
}

pub fn double_layer(
    mesh: &SurfaceMesh,
    v: &[f64],
    x: impl Into<Probe>,
    conv: KernelConvention,
) -> Result<f64, PotentialError> {
    check_len(mesh, v)?;
    Ok(dot(&double_layer_weights(mesh, x, conv)?, v))
}

/// Radius of the ball with volume `v`.
fn equal_volume_radius(v: f64) -> f64 {
    (3.0 * v / FOUR_PI).cbrt()
}

/// Newton potential Σ h(X − Y_c) f_c w_c over the grid cells.
///
/// When X is the centre of its own full cell, that cell contributes
/// r_eq²/2 · f (the potential at the centre of a ball of equal volume).
/// Otherwise the own cell and cells within two spacings are sub-sampled, with
/// the same ball rule applied to the sub-cell containing X.
pub fn newton_potential(grid: &VolumeGrid, f: &[f64], x: Point3) -> Result<f64, PotentialError> {
    let sub_own = equal_volume_radius(grid.sub_point_weight()).powi(2) / 2.0;
    newton_generic(
        grid,
        f,
        x,
        |c| equal_volume_radius(grid.weights()[c]).powi(2) / 2.0,
        |_| sub_own,
        |x, y| 1.0 / (FOUR_PI * y.distance(x)),
    )
}

/// ∇_X of the Newton potential. The own cell contributes nothing when X is its
/// centre; an off-centre sub-cell contributes the uniform-cube field −δ/3.
pub fn newton_gradient(grid: &VolumeGrid, f: &[f64], x: Point3) -> Result<Point3, PotentialError> {
    newton_generic(
        grid,
        f,
        x,
        |_| Point3::ZERO,
        |delta| delta * (-1.0 / 3.0),
        |x, y| {
            let r = y - x;
            let r2 = r.norm_squared();
            r * (1.0 / (FOUR_PI * r2 * r2.sqrt()))
        },
    )
}

fn newton_generic<T: KernelValue>(
    grid: &VolumeGrid,
    f: &[f64],
    x: Point3,
    centred: impl Fn(usize) -> T,
    sub_own: impl Fn(Point3) -> T,
    kernel: impl Fn(Point3, Point3) -> T,
) -> Result<T, PotentialError> {
    if f.len() != grid.len() {
        return Err(PotentialError::LengthMismatch { expected: grid.len(), got: f.len() });
    }
    let here = grid.cell_of(x);
    let h = grid.spacing();
    let near = 2.0 * h.x.max(h.y).max(h.z);
    let half_sub = h * (0.5 / crate::geometry::SUBDIV as f64);
    let sw = grid.sub_point_weight();
    let mut acc = T::default();
    for (c, (&y, &w)) in grid.centers().iter().zip(grid.weights()).enumerate() {
        if f[c] == 0.0 {
            continue;
        }
        let own = Some(c) == here;
        let contrib = if own && !grid.is_cut(c) && (x - y).norm() <= 1e-9 * h.norm() {
            centred(c)
        } else if own || y.distance(x) < near {
            let mut s = T::default();
            for q in grid.sub_points(c) {
                let d = x - q;
                if own && d.x.abs() <= half_sub.x && d.y.abs() <= half_sub.y && d.z.abs() <= half_sub.z {
                    s += sub_own(d);
                } else {
                    s += kernel(x, q) * sw;
                }
            }
            s
        } else {
            kernel(x, y) * w
        };
        acc += contrib * f[c];
    }
    Ok(acc)
}

/// One-sided limits of the double layer at node `i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpMeasurement {
    pub node: usize,
    pub interior: f64,
    pub exterior: f64,
    pub principal_value: f64,
    /// interior − exterior.
    pub jump: f64,
    pub density: f64,
}

/// Interior and exterior limits of the double layer along the node normal,
/// extrapolated linearly from probes at half and one mesh spacing.
pub fn measure_jump(mesh: &SurfaceMesh, v: &[f64], i: usize, conv: KernelConvention) -> Result<JumpMeasurement, PotentialError> {
    check_len(mesh, v)?;
    let (p, n) = match (mesh.nodes().get(i), mesh.normals().get(i)) {
        (Some(&p), Some(&n)) => (p, n),
        _ => return Err(PotentialError::NodeOutOfRange(i)),
    };
    let h = mesh.mean_spacing();
    let side = |sign: f64| -> Result<f64, PotentialError> {
        let near = double_layer(mesh, v, p + n * (sign * 0.5 * h), conv)?;
        let far = double_layer(mesh, v, p + n * (sign * h), conv)?;
        Ok(2.0 * near - far)
    };
    let interior = side(-1.0)?;
    let exterior = side(1.0)?;
    Ok(JumpMeasurement {
        node: i,
        interior,
        exterior,
        principal_value: double_layer(mesh, v, Probe::Node(i), conv)?,
        jump: interior - exterior,
        density: v[i],
    })
}
