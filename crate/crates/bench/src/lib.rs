//! Shared fixtures for the criterion benches.

use layerpot::{make_unit_sphere, SurfaceMesh};

/// Unit icosphere used by the kernel benches.
pub fn sphere(level: u32) -> SurfaceMesh {
    make_unit_sphere(level)
}
