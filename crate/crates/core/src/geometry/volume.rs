use rayon::prelude::*;

use super::{GeometryError, Point3, SurfaceMesh};

/// Sub-samples per axis used to resolve cut cells.
pub const SUBDIV: usize = 4;
const FULL: u64 = u64::MAX;

/// Cell-centred quadrature over Ω̄ on a uniform box grid.
///
/// Cells fully inside carry their whole volume. Cells cut by the surface keep
/// the fraction of their 4×4×4 sub-points that lie inside, with the center
/// moved to the centroid of those sub-points.
#[derive(Clone, Debug)]
pub struct VolumeGrid {
    lo: Point3,
    hi: Point3,
    shape: [usize; 3],
    spacing: Point3,
    centers: Vec<Point3>,
    weights: Vec<f64>,
    indices: Vec<[usize; 3]>,
    masks: Vec<u64>,
    lookup: Vec<u32>,
}

impl VolumeGrid {
    /// Grid over the bounding box of `mesh` with `n` cells per axis; inside
    /// means winding number above one half.
    pub fn from_mesh(mesh: &SurfaceMesh, n: usize) -> Result<Self, GeometryError> {
        let (lo, hi) = mesh.bounding_box();
        Self::build(lo, hi, [n, n, n], |clo, chi| {
            let c = (clo + chi) * 0.5;
            let half_diag = (chi - clo).norm() * 0.5;
            if mesh.distance(c) > half_diag * 1.01 {
                if mesh.winding_number(c) > 0.5 {
                    FULL
                } else {
                    0
                }
            } else {
                sub_mask(clo, chi, |p| mesh.winding_number(p) > 0.5)
            }
        })
    }

    /// Grid over an explicit box using an analytic inside predicate.
    pub fn from_indicator(
        lo: Point3,
        hi: Point3,
        shape: [usize; 3],
        inside: impl Fn(Point3) -> bool + Sync,
    ) -> Result<Self, GeometryError> {
        Self::build(lo, hi, shape, |clo, chi| sub_mask(clo, chi, &inside))
    }

    fn build(
        lo: Point3,
        hi: Point3,
        shape: [usize; 3],
        classify: impl Fn(Point3, Point3) -> u64 + Sync,
    ) -> Result<Self, GeometryError> {
        if shape.iter().any(|&s| s < 1) || !(hi.x > lo.x && hi.y > lo.y && hi.z > lo.z) {
            return Err(GeometryError::InvalidGrid);
        }
        let spacing = Point3::new(
            (hi.x - lo.x) / shape[0] as f64,
            (hi.y - lo.y) / shape[1] as f64,
            (hi.z - lo.z) / shape[2] as f64,
        );
        let total = shape[0] * shape[1] * shape[2];
        let masks: Vec<u64> = (0..total)
            .into_par_iter()
            .map(|flat| {
                let idx = unflatten(flat, shape);
                let clo = corner(lo, spacing, idx);
                classify(clo, clo + spacing)
            })
            .collect();

        let cell_vol = spacing.x * spacing.y * spacing.z;
        let mut grid = Self {
            lo,
            hi,
            shape,
            spacing,
            centers: Vec::new(),
            weights: Vec::new(),
            indices: Vec::new(),
            masks: Vec::new(),
            lookup: vec![u32::MAX; total],
        };
        for (flat, &mask) in masks.iter().enumerate() {
            if mask == 0 {
                continue;
            }
            let idx = unflatten(flat, shape);
            let clo = corner(lo, spacing, idx);
            let count = mask.count_ones() as f64;
            let center = if mask == FULL {
                clo + spacing * 0.5
            } else {
                sub_points(clo, spacing, mask).map(|p| p / count).sum()
            };
            grid.lookup[flat] = grid.centers.len() as u32;
            grid.centers.push(center);
            grid.weights.push(cell_vol * count / 64.0);
            grid.indices.push(idx);
            grid.masks.push(mask);
        }
        if grid.centers.is_empty() {
            return Err(GeometryError::EmptyGrid);
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[Point3] {
        &self.centers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Box index (i, j, k) of every active cell.
    pub fn indices(&self) -> &[[usize; 3]] {
        &self.indices
    }

    pub fn bounds(&self) -> (Point3, Point3) {
        (self.lo, self.hi)
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> Point3 {
        self.spacing
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.x * self.spacing.y * self.spacing.z
    }

    /// Σ weights, the discrete m(Ω̄).
    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Whether the cell straddles the surface.
    pub fn is_cut(&self, c: usize) -> bool {
        self.masks[c] != FULL
    }

    /// Row-major index of cell `c` in the full box, `(i·ny + j)·nz + k`.
    pub fn flat_index(&self, c: usize) -> usize {
        let [i, j, k] = self.indices[c];
        (i * self.shape[1] + j) * self.shape[2] + k
    }

    /// Active cell containing `x`, if any.
    pub fn cell_of(&self, x: Point3) -> Option<usize> {
        let f = [
            (x.x - self.lo.x) / self.spacing.x,
            (x.y - self.lo.y) / self.spacing.y,
            (x.z - self.lo.z) / self.spacing.z,
        ];
        let mut idx = [0usize; 3];
        for a in 0..3 {
            if !(f[a] >= 0.0) || f[a] > self.shape[a] as f64 {
                return None;
            }
            idx[a] = (f[a] as usize).min(self.shape[a] - 1);
        }
        let slot = self.lookup[(idx[0] * self.shape[1] + idx[1]) * self.shape[2] + idx[2]];
        (slot != u32::MAX).then_some(slot as usize)
    }

    /// Inside sub-points of cell `c`, each carrying 1/64 of the cell volume.
    pub fn sub_points(&self, c: usize) -> impl Iterator<Item = Point3> + '_ {
        let clo = corner(self.lo, self.spacing, self.indices[c]);
        sub_points(clo, self.spacing, self.masks[c])
    }

    pub fn sub_point_weight(&self) -> f64 {
        self.cell_volume() / (SUBDIV * SUBDIV * SUBDIV) as f64
    }
}

fn unflatten(flat: usize, shape: [usize; 3]) -> [usize; 3] {
    let k = flat % shape[2];
    let j = (flat / shape[2]) % shape[1];
    let i = flat / (shape[1] * shape[2]);
    [i, j, k]
}

fn corner(lo: Point3, h: Point3, idx: [usize; 3]) -> Point3 {
    Point3::new(
        lo.x + idx[0] as f64 * h.x,
        lo.y + idx[1] as f64 * h.y,
        lo.z + idx[2] as f64 * h.z,
    )
}

fn sub_point(clo: Point3, h: Point3, s: usize) -> Point3 {
    let (a, b, c) = (s / (SUBDIV * SUBDIV), (s / SUBDIV) % SUBDIV, s % SUBDIV);
    let f = |i: usize| (i as f64 + 0.5) / SUBDIV as f64;
    Point3::new(clo.x + f(a) * h.x, clo.y + f(b) * h.y, clo.z + f(c) * h.z)
}

fn sub_points(clo: Point3, h: Point3, mask: u64) -> impl Iterator<Item = Point3> {
    (0..64).filter(move |s| mask >> s & 1 == 1).map(move |s| sub_point(clo, h, s))
}

fn sub_mask(clo: Point3, chi: Point3, inside: impl Fn(Point3) -> bool) -> u64 {
    let h = chi - clo;
    let mut mask = 0u64;
    for s in 0..64 {
        if inside(sub_point(clo, h, s)) {
            mask |= 1 << s;
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_unit_sphere;
    use std::f64::consts::PI;

    fn ball(n: usize) -> VolumeGrid {
        VolumeGrid::from_indicator(
            Point3::new(-1.0, -1.0, -1.0),
            Point3::new(1.0, 1.0, 1.0),
            [n, n, n],
            |p| p.norm() < 1.0,
        )
        .unwrap()
    }

    #[test]
    fn ball_volume() {
        let g = ball(16);
        let rel = (g.measure() - 4.0 * PI / 3.0).abs() / (4.0 * PI / 3.0);
        assert!(rel < 5e-3, "{rel}");
        assert!(g.centers().iter().all(|c| c.norm() < 1.0));
    }

    #[test]
    fn mesh_grid_matches_polyhedron_volume() {
        let m = make_unit_sphere(3);
        let g = VolumeGrid::from_mesh(&m, 12).unwrap();
        let rel = (g.measure() - m.enclosed_volume()).abs() / m.enclosed_volume();
        assert!(rel < 1e-2, "{rel}");
        for &c in g.centers() {
            assert!(m.winding_number(c) > 0.5);
        }
    }

    #[test]
    fn lookup_roundtrip() {
        let g = ball(8);
        for (c, &x) in g.centers().iter().enumerate() {
            if !g.is_cut(c) {
                assert_eq!(g.cell_of(x), Some(c));
            }
        }
        assert_eq!(g.cell_of(Point3::new(3.0, 0.0, 0.0)), None);
    }

    #[test]
    fn sub_points_carry_weight() {
        let g = ball(6);
        for c in 0..g.len() {
            let n = g.sub_points(c).count() as f64;
            assert!((n * g.sub_point_weight() - g.weights()[c]).abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_box_rejected() {
        let r = VolumeGrid::from_indicator(Point3::ZERO, Point3::ZERO, [4, 4, 4], |_| true);
        assert!(matches!(r, Err(GeometryError::InvalidGrid)));
    }
}
