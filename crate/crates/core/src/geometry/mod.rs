//! Closed triangulated surfaces, cut-cell volume grids and point classification.

mod icosphere;
mod mesh;
mod point;
mod volume;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use icosphere::make_unit_sphere;
pub use mesh::{closest_point_on_triangle, triangle_solid_angle, SurfaceMesh};
pub use point::Point3;
pub use volume::{VolumeGrid, SUBDIV};

use crate::potentials;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("mesh needs at least 4 nodes and 4 triangles (got {nodes}, {triangles})")]
    TooSmall { nodes: usize, triangles: usize },
    #[error("node {node} has a non-finite coordinate")]
    NonFinite { node: usize },
    #[error("triangle {triangle} references a node outside 0..{nodes}")]
    IndexOutOfRange { triangle: usize, nodes: usize },
    #[error("triangle {triangle} is degenerate")]
    DegenerateTriangle { triangle: usize },
    #[error("node {node} belongs to no triangle")]
    IsolatedNode { node: usize },
    #[error("edge ({a}, {b}) is shared by {count} triangles, expected 2")]
    NotWatertight { a: usize, b: usize, count: u32 },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("solid angle {value:.4} falls between the classification bands")]
    AmbiguousClassification { value: f64 },
    #[error("grid box or shape is invalid")]
    InvalidGrid,
    #[error("no grid cell lies inside the surface")]
    EmptyGrid,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointClass {
    Interior,
    Exterior,
    Boundary,
}

/// Σ wᵢ vᵢ over the mesh nodes, summed in node order.
pub fn surface_integral(mesh: &SurfaceMesh, values: &[f64]) -> Result<f64, GeometryError> {
    if values.len() != mesh.len() {
        return Err(GeometryError::LengthMismatch { expected: mesh.len(), got: values.len() });
    }
    Ok(mesh.weights().iter().zip(values).map(|(w, v)| w * v).sum())
}

/// Classifies `x` by the Gauss solid-angle integral: −4π inside, 0 outside.
/// Points within one local node spacing of the surface are `Boundary`.
pub fn classify_point(mesh: &SurfaceMesh, x: Point3) -> Result<PointClass, GeometryError> {
    if !x.is_finite() {
        return Err(GeometryError::AmbiguousClassification { value: f64::NAN });
    }
    let (_, t, d) = mesh.closest_point(x);
    let local = mesh.triangles()[t].iter().map(|&i| mesh.node_spacing()[i]).sum::<f64>() / 3.0;
    if d <= local {
        return Ok(PointClass::Boundary);
    }
    let omega = potentials::solid_angle(mesh, x)
        .map_err(|_| GeometryError::AmbiguousClassification { value: f64::NAN })?;
    let band = PI / 2.0;
    if (omega + 4.0 * PI).abs() < band {
        Ok(PointClass::Interior)
    } else if omega.abs() < band {
        Ok(PointClass::Exterior)
    } else if (omega + 2.0 * PI).abs() < band {
        Ok(PointClass::Boundary)
    } else {
        Err(GeometryError::AmbiguousClassification { value: omega })
    }
}
