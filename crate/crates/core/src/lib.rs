//! Layer potentials, Dirichlet-to-Neumann completion, polynomial symbol
//! matrices, mollified fixed-point solvers and Leray–Schauder degree
//! certificates for Hammerstein equations.

pub mod geometry;
pub mod bie;
mod linalg;
pub mod potentials;
pub mod symbols;
pub mod funcspace;
pub mod hammerstein;
pub mod degree;
pub mod solver;

pub use geometry::{classify_point, make_unit_sphere, surface_integral, Point3, PointClass, SurfaceMesh, VolumeGrid};
pub use potentials::{BoundaryField, KernelConvention, Probe};
